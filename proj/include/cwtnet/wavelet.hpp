#pragma once

// Single-level 2D Haar analysis. The branch consumes only the diagonal (HH)
// subband, computed with the stride-2 stencil 1/2 [[1, -1], [-1, 1]]; the
// full four-band transform and its inverse exist for verification.

#include <atomic>
#include <cstddef>
#include <string>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

// Test hook: when set, the HH gradient rule uses a corrupted stencil so the
// gradient checker can be shown to catch it.
inline std::atomic<bool>& haar_gradient_fault() {
    static std::atomic<bool> flag{false};
    return flag;
}

template <typename T>
struct Subbands {
    Tensor<T> ll, lh, hl, hh;
};

namespace detail {
inline void require_even(const Shape& s, const char* what) {
    if (s.h % 2 != 0 || s.w % 2 != 0) {
        throw ShapeError(std::string(what) + ": spatial dims must be even, got " + s.str() +
                         "; crop the input to even height and width");
    }
}
} // namespace detail

template <typename T>
Tensor<T> dwt_hh(const Tensor<T>& x) {
    const Shape s = x.shape();
    detail::require_even(s, "dwt_hh");
    Tensor<T> out(Shape{s.n, s.c, s.h / 2, s.w / 2});
    const T half = T(0.5);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = x.plane(n, c);
            T* o = out.plane(n, c);
            for (std::size_t i = 0; i < s.h / 2; ++i)
                for (std::size_t j = 0; j < s.w / 2; ++j) {
                    const T* r0 = p + 2 * i * s.w + 2 * j;
                    const T* r1 = r0 + s.w;
                    o[i * (s.w / 2) + j] = half * (r0[0] - r0[1] - r1[0] + r1[1]);
                }
        }
    return out;
}

template <typename T>
Var<T> dwt_hh(const Var<T>& x) {
    Tensor<T> out = dwt_hh(x.value());
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(xi);
        const Shape s = gx.shape();
        const T half = T(0.5);
        const T corner = haar_gradient_fault() ? -half : half;
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c) {
                const T* gp = g.plane(n, c);
                T* p = gx.plane(n, c);
                for (std::size_t i = 0; i < s.h / 2; ++i)
                    for (std::size_t j = 0; j < s.w / 2; ++j) {
                        const T v = gp[i * (s.w / 2) + j];
                        T* r0 = p + 2 * i * s.w + 2 * j;
                        T* r1 = r0 + s.w;
                        r0[0] += half * v;
                        r0[1] -= half * v;
                        r1[0] -= half * v;
                        r1[1] += corner * v;
                    }
            }
    });
}

// Orthonormal Haar analysis. For a 2x2 block [[a, b], [c, d]]:
//   ll = (a + b + c + d) / 2   lh = (a + b - c - d) / 2
//   hl = (a - b + c - d) / 2   hh = (a - b - c + d) / 2
template <typename T>
Subbands<T> dwt_full(const Tensor<T>& x) {
    const Shape s = x.shape();
    detail::require_even(s, "dwt_full");
    const Shape hs{s.n, s.c, s.h / 2, s.w / 2};
    Subbands<T> out{Tensor<T>(hs), Tensor<T>(hs), Tensor<T>(hs), Tensor<T>(hs)};
    const T half = T(0.5);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < hs.h; ++i)
                for (std::size_t j = 0; j < hs.w; ++j) {
                    const T a = x(n, c, 2 * i, 2 * j), b = x(n, c, 2 * i, 2 * j + 1);
                    const T cc = x(n, c, 2 * i + 1, 2 * j), d = x(n, c, 2 * i + 1, 2 * j + 1);
                    out.ll(n, c, i, j) = half * (a + b + cc + d);
                    out.lh(n, c, i, j) = half * (a + b - cc - d);
                    out.hl(n, c, i, j) = half * (a - b + cc - d);
                    out.hh(n, c, i, j) = half * (a - b - cc + d);
                }
    return out;
}

template <typename T>
Tensor<T> idwt_full(const Subbands<T>& sb) {
    const Shape hs = sb.ll.shape();
    require_same_shape(hs, sb.lh.shape(), "idwt_full");
    require_same_shape(hs, sb.hl.shape(), "idwt_full");
    require_same_shape(hs, sb.hh.shape(), "idwt_full");
    Tensor<T> x(Shape{hs.n, hs.c, hs.h * 2, hs.w * 2});
    const T half = T(0.5);
    for (std::size_t n = 0; n < hs.n; ++n)
        for (std::size_t c = 0; c < hs.c; ++c)
            for (std::size_t i = 0; i < hs.h; ++i)
                for (std::size_t j = 0; j < hs.w; ++j) {
                    const T ll = sb.ll(n, c, i, j), lh = sb.lh(n, c, i, j);
                    const T hl = sb.hl(n, c, i, j), hh = sb.hh(n, c, i, j);
                    x(n, c, 2 * i, 2 * j) = half * (ll + lh + hl + hh);
                    x(n, c, 2 * i, 2 * j + 1) = half * (ll + lh - hl - hh);
                    x(n, c, 2 * i + 1, 2 * j) = half * (ll - lh + hl - hh);
                    x(n, c, 2 * i + 1, 2 * j + 1) = half * (ll - lh - hl + hh);
                }
    return x;
}

} // namespace cwtnet
