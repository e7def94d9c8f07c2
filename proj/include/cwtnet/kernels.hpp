#pragma once

// Dense loops shared by the differentiable operations. Every reduction runs
// in a fixed order that does not depend on blocking or threading, so results
// are bit-reproducible.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace cwtnet::kernels {

// y[0..n) += a * x[0..n)
template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Eight interleaved partial sums combined in a fixed tree.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) noexcept {
    T acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    }
    for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

namespace detail {

template <typename T>
struct VecOf;
template <>
struct VecOf<float> {
    typedef float type __attribute__((vector_size(32)));
};
template <>
struct VecOf<double> {
    typedef double type __attribute__((vector_size(32)));
};
template <typename T>
using Vec = typename VecOf<T>::type;

template <typename T>
inline Vec<T> loadv(const T* p) noexcept {
    Vec<T> v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
inline void storev(T* p, Vec<T> v) noexcept {
    std::memcpy(p, &v, sizeof v);
}

} // namespace detail

// C[m, :] += sum_k A[m, k] * B[k, :]  (row-major, A is M x K, B is K x N).
// Each C element accumulates over k in ascending order; a 4 x (2 vectors)
// tile of C stays in registers across the k loop.
template <typename T>
void gemm_acc(T* __restrict c, const T* __restrict a, const T* __restrict b, std::size_t m_rows, std::size_t k_dim,
              std::size_t n_cols) {
    using V = detail::Vec<T>;
    constexpr std::size_t kLanes = sizeof(V) / sizeof(T);
    constexpr std::size_t kC = 2 * kLanes;
    const std::size_t n_full = n_cols / kC * kC;
    std::size_t m = 0;
    for (; m + 4 <= m_rows; m += 4) {
        const T* a0 = a + m * k_dim;
        const T* a1 = a0 + k_dim;
        const T* a2 = a1 + k_dim;
        const T* a3 = a2 + k_dim;
        T* c0 = c + m * n_cols;
        T* c1 = c0 + n_cols;
        T* c2 = c1 + n_cols;
        T* c3 = c2 + n_cols;
        for (std::size_t j = 0; j < n_full; j += kC) {
            V x0 = detail::loadv(c0 + j), y0 = detail::loadv(c0 + j + kLanes);
            V x1 = detail::loadv(c1 + j), y1 = detail::loadv(c1 + j + kLanes);
            V x2 = detail::loadv(c2 + j), y2 = detail::loadv(c2 + j + kLanes);
            V x3 = detail::loadv(c3 + j), y3 = detail::loadv(c3 + j + kLanes);
            const T* bp = b + j;
            for (std::size_t k = 0; k < k_dim; ++k, bp += n_cols) {
                const V bx = detail::loadv(bp), by = detail::loadv(bp + kLanes);
                const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
                x0 += v0 * bx;
                y0 += v0 * by;
                x1 += v1 * bx;
                y1 += v1 * by;
                x2 += v2 * bx;
                y2 += v2 * by;
                x3 += v3 * bx;
                y3 += v3 * by;
            }
            detail::storev(c0 + j, x0);
            detail::storev(c0 + j + kLanes, y0);
            detail::storev(c1 + j, x1);
            detail::storev(c1 + j + kLanes, y1);
            detail::storev(c2 + j, x2);
            detail::storev(c2 + j + kLanes, y2);
            detail::storev(c3 + j, x3);
            detail::storev(c3 + j + kLanes, y3);
        }
        if (n_full < n_cols) {
            for (std::size_t k = 0; k < k_dim; ++k) {
                const T* br = b + k * n_cols;
                for (std::size_t j = n_full; j < n_cols; ++j) {
                    c0[j] += a0[k] * br[j];
                    c1[j] += a1[k] * br[j];
                    c2[j] += a2[k] * br[j];
                    c3[j] += a3[k] * br[j];
                }
            }
        }
    }
    for (; m < m_rows; ++m) {
        T* cr = c + m * n_cols;
        const T* ar = a + m * k_dim;
        for (std::size_t k = 0; k < k_dim; ++k) {
            const T av = ar[k];
            const T* br = b + k * n_cols;
            for (std::size_t j = 0; j < n_cols; ++j) cr[j] += av * br[j];
        }
    }
}

// C[m, k] += dot(A[m, :], B[k, :])  (A is M x N, B is K x N).
template <typename T>
void gemm_nt_acc(T* c, const T* a, const T* b, std::size_t m_rows, std::size_t k_rows, std::size_t n_cols) {
    for (std::size_t m = 0; m < m_rows; ++m) {
        for (std::size_t k = 0; k < k_rows; ++k) {
            c[m * k_rows + k] += dot(a + m * n_cols, b + k * n_cols, n_cols);
        }
    }
}

template <typename T>
std::vector<T> transpose(const T* a, std::size_t rows, std::size_t cols) {
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
    }
    return out;
}

struct ConvGeometry {
    std::size_t channels, h, w, k, stride, pad, oh, ow;

    static ConvGeometry make(std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                             std::size_t stride, std::size_t pad) {
        ConvGeometry g{channels, h, w, k, stride, pad, 0, 0};
        g.oh = (h + 2 * pad - k) / stride + 1;
        g.ow = (w + 2 * pad - k) / stride + 1;
        return g;
    }
    [[nodiscard]] std::size_t rows() const noexcept { return channels * k * k; }
    [[nodiscard]] std::size_t cols() const noexcept { return oh * ow; }
};

// One image (channels x h x w) to a (channels*k*k) x (oh*ow) patch matrix.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
    const long pad = static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* xc = x + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - pad;
                    T* dst = row + oy * g.ow;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill(dst, dst + g.ow, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(iy) * g.w;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - pad;
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patch matrix back onto the image.
template <typename T>
void col2im_acc(const T* col, const ConvGeometry& g, T* x) {
    const long pad = static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* xc = x + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    T* dst = xc + static_cast<std::size_t>(iy) * g.w;
                    const T* src = row + oy * g.ow;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - pad;
                        if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

} // namespace cwtnet::kernels
