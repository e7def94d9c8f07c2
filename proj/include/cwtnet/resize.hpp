#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/errors.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

// Positive rational scale factor (num / den).
struct Ratio {
    long num = 1;
    long den = 1;

    [[nodiscard]] double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    [[nodiscard]] std::size_t apply(std::size_t length) const {
        const long long scaled = static_cast<long long>(length) * num;
        return static_cast<std::size_t>((scaled + den - 1) / den);
    }
};

// Catmull-Rom cubic (a = -0.5).
inline double cubic_kernel(double x) noexcept {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace detail {

template <typename T>
struct AxisTaps {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<std::size_t> offsets;  // offsets[i]..offsets[i+1] index into index/weight
    std::vector<std::size_t> index;
    std::vector<T> weight;
};

// Half-pixel aligned taps. Downscaling stretches the kernel by 1/scale
// (antialiasing); out-of-range source indices clamp to the edge.
template <typename T>
AxisTaps<T> make_taps(std::size_t in, Ratio scale) {
    AxisTaps<T> taps;
    taps.in = in;
    taps.out = scale.apply(in);
    const double s = scale.value();
    const double stretch = s < 1.0 ? s : 1.0;
    const double support = 2.0 / stretch;
    taps.offsets.push_back(0);
    for (std::size_t o = 0; o < taps.out; ++o) {
        const double center = (static_cast<double>(o) + 0.5) / s - 0.5;
        const long first = static_cast<long>(std::floor(center - support));
        const long last = static_cast<long>(std::ceil(center + support));
        std::vector<std::pair<std::size_t, double>> row;
        double total = 0.0;
        for (long j = first; j <= last; ++j) {
            const double wgt = stretch * cubic_kernel(stretch * (center - static_cast<double>(j)));
            if (wgt == 0.0) continue;
            const long clamped = std::clamp<long>(j, 0, static_cast<long>(in) - 1);
            total += wgt;
            auto it = std::find_if(row.begin(), row.end(), [&](const auto& p) { return p.first == static_cast<std::size_t>(clamped); });
            if (it == row.end()) {
                row.emplace_back(static_cast<std::size_t>(clamped), wgt);
            } else {
                it->second += wgt;
            }
        }
        for (const auto& [idx, wgt] : row) {
            taps.index.push_back(idx);
            taps.weight.push_back(static_cast<T>(wgt / total));
        }
        taps.offsets.push_back(taps.index.size());
    }
    return taps;
}

// Resample along width (along_w) or height of every plane.
template <typename T>
Tensor<T> apply_taps(const Tensor<T>& x, const AxisTaps<T>& taps, bool along_w) {
    const Shape s = x.shape();
    Shape os = s;
    (along_w ? os.w : os.h) = taps.out;
    Tensor<T> out(os);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            if (along_w) {
                for (std::size_t y = 0; y < s.h; ++y)
                    for (std::size_t o = 0; o < taps.out; ++o) {
                        T acc = 0;
                        for (std::size_t t = taps.offsets[o]; t < taps.offsets[o + 1]; ++t)
                            acc += taps.weight[t] * src[y * s.w + taps.index[t]];
                        dst[y * os.w + o] = acc;
                    }
            } else {
                for (std::size_t o = 0; o < taps.out; ++o) {
                    T* drow = dst + o * os.w;
                    for (std::size_t t = taps.offsets[o]; t < taps.offsets[o + 1]; ++t) {
                        const T wgt = taps.weight[t];
                        const T* srow = src + taps.index[t] * s.w;
                        for (std::size_t xx = 0; xx < s.w; ++xx) drow[xx] += wgt * srow[xx];
                    }
                }
            }
        }
    return out;
}

// Adjoint of apply_taps.
template <typename T>
Tensor<T> apply_taps_transposed(const Tensor<T>& g, const AxisTaps<T>& taps, bool along_w) {
    const Shape s = g.shape();
    Shape is = s;
    (along_w ? is.w : is.h) = taps.in;
    Tensor<T> out(is);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* src = g.plane(n, c);
            T* dst = out.plane(n, c);
            if (along_w) {
                for (std::size_t y = 0; y < s.h; ++y)
                    for (std::size_t o = 0; o < taps.out; ++o) {
                        const T gv = src[y * s.w + o];
                        for (std::size_t t = taps.offsets[o]; t < taps.offsets[o + 1]; ++t)
                            dst[y * is.w + taps.index[t]] += taps.weight[t] * gv;
                    }
            } else {
                for (std::size_t o = 0; o < taps.out; ++o) {
                    const T* grow = src + o * s.w;
                    for (std::size_t t = taps.offsets[o]; t < taps.offsets[o + 1]; ++t) {
                        T* drow = dst + taps.index[t] * is.w;
                        const T wgt = taps.weight[t];
                        for (std::size_t xx = 0; xx < s.w; ++xx) drow[xx] += wgt * grow[xx];
                    }
                }
            }
        }
    return out;
}

inline void check_ratio(Ratio scale) {
    if (scale.num <= 0 || scale.den <= 0) {
        throw ConfigError("resize_bicubic: scale must be positive, got " + std::to_string(scale.num) + "/" +
                          std::to_string(scale.den));
    }
}

} // namespace detail

// Separable Catmull-Rom resampling of every plane by the same factor on both axes.
template <typename T>
Tensor<T> resize_bicubic(const Tensor<T>& x, Ratio scale) {
    detail::check_ratio(scale);
    const auto tw = detail::make_taps<T>(x.shape().w, scale);
    const auto th = detail::make_taps<T>(x.shape().h, scale);
    return detail::apply_taps(detail::apply_taps(x, tw, true), th, false);
}

template <typename T>
Var<T> resize_bicubic(const Var<T>& x, Ratio scale) {
    detail::check_ratio(scale);
    auto tw = detail::make_taps<T>(x.shape().w, scale);
    auto th = detail::make_taps<T>(x.shape().h, scale);
    Tensor<T> out = detail::apply_taps(detail::apply_taps(x.value(), tw, true), th, false);
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(),
                           [xi, tw = std::move(tw), th = std::move(th)](Tape<T>& t, std::size_t self) {
                               Tensor<T> g = detail::apply_taps_transposed(t.grad(self), th, false);
                               t.grad(xi) += detail::apply_taps_transposed(g, tw, true);
                           });
}

} // namespace cwtnet
