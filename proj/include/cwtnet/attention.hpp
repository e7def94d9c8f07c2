#pragma once

// Cross-branch texture attention. SR-branch features act as queries, wavelet
// features as keys, and their up/down-resampled version as values. Each query
// patch is matched to its most relevant key patch by cosine similarity (hard
// attention); the matched value patches are folded back into an image, and
// the similarity map gates the fused result (soft attention).

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <vector>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/kernels.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/parallel.hpp"
#include "cwtnet/resize.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

struct AttentionConfig {
    std::size_t patch = 3;        // odd; stride 1, zero padding patch/2 so L = h * w
    std::size_t block_rows = 256; // relevance rows computed per block
    long value_resample = 2;      // V = down(up(K, f), f)
};

template <typename T>
struct AttentionOutputs {
    std::vector<std::size_t> h_index;  // n * L entries, argmax key patch per query patch
    Var<T> s_map;                      // (n, 1, h, w) relevance of the selected match
};

namespace detail {

// Unit-normalised patch columns of one image, laid out D x L. Each column is
// first divided by a power of two near its max magnitude so the norm does not
// overflow or lose precision; zero columns stay zero. norms[j] is the
// original Euclidean norm.
template <typename T>
void normalized_columns(const T* cols, std::size_t d, std::size_t l, std::vector<T>& unit, std::vector<T>& norms) {
    unit.assign(d * l, T(0));
    norms.assign(l, T(0));
    for (std::size_t j = 0; j < l; ++j) {
        T peak = 0;
        for (std::size_t r = 0; r < d; ++r) peak = std::max(peak, static_cast<T>(std::abs(cols[r * l + j])));
        if (peak == T(0)) continue;
        int exponent = 0;
        std::frexp(peak, &exponent);
        const T pre = std::ldexp(T(1), -exponent);
        T ss = 0;
        for (std::size_t r = 0; r < d; ++r) {
            const T v = cols[r * l + j] * pre;
            ss += v * v;
        }
        const T nrm = std::sqrt(ss);
        for (std::size_t r = 0; r < d; ++r) unit[r * l + j] = cols[r * l + j] * pre / nrm;
        norms[j] = std::ldexp(nrm, exponent);
    }
}

inline void check_patch_inputs(const Shape& q, const Shape& k, std::size_t patch) {
    if (patch == 0 || patch % 2 == 0) throw ConfigError("attention: patch size must be odd");
    require_same_shape(q, k, "attention(Q, K)");
}

} // namespace detail

// Full relevance matrices r(i, j) = <q_i / |q_i|, k_j / |k_j|> for unfolded
// patches (n, D, 1, L) -> (n, 1, L, L).
template <typename T>
Tensor<T> relevance(const Tensor<T>& q_patches, const Tensor<T>& k_patches) {
    require_same_shape(q_patches.shape(), k_patches.shape(), "relevance");
    const Shape s = q_patches.shape();
    if (s.h != 1) throw ShapeError("relevance: expected unfolded patches (n, D, 1, L), got " + s.str());
    const std::size_t d = s.c, l = s.w;
    Tensor<T> r(Shape{s.n, 1, l, l});
    for (std::size_t n = 0; n < s.n; ++n) {
        std::vector<T> qu, qn, ku, kn;
        detail::normalized_columns(q_patches.item(n), d, l, qu, qn);
        detail::normalized_columns(k_patches.item(n), d, l, ku, kn);
        const auto qt = kernels::transpose(qu.data(), d, l);
        kernels::gemm_acc(r.item(n), qt.data(), ku.data(), l, d, l);
    }
    return r;
}

// Row-wise argmax (smallest index wins ties) and the attained maximum.
// Input (n, 1, L, L); returns indices (n * L) and maxima (n, 1, 1, L).
template <typename T>
std::pair<std::vector<std::size_t>, Tensor<T>> hard_soft_attention(const Tensor<T>& r) {
    const Shape s = r.shape();
    if (s.c != 1 || s.h != s.w) throw ShapeError("hard_soft_attention: expected (n, 1, L, L), got " + s.str());
    const std::size_t l = s.h;
    std::vector<std::size_t> index(s.n * l);
    Tensor<T> best(Shape{s.n, 1, 1, l});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t i = 0; i < l; ++i) {
            const T* row = r.item(n) + i * l;
            std::size_t arg = 0;
            for (std::size_t j = 1; j < l; ++j) {
                if (row[j] > row[arg]) arg = j;
            }
            index[n * l + i] = arg;
            best[n * l + i] = row[arg];
        }
    }
    return {std::move(index), std::move(best)};
}

// Hard/soft attention between Q and K feature maps without materialising the
// full L x L matrix. Gradients flow into Q and K through the selected
// relevance values; the index map itself is piecewise constant.
template <typename T>
AttentionOutputs<T> texture_attention(const Var<T>& q, const Var<T>& k, const AttentionConfig& cfg = {}) {
    const Shape s = q.shape();
    detail::check_patch_inputs(s, k.shape(), cfg.patch);
    const std::size_t pad = cfg.patch / 2;
    const auto geo = kernels::ConvGeometry::make(s.c, s.h, s.w, cfg.patch, 1, pad);
    const std::size_t d = geo.rows(), l = geo.cols();
    const std::size_t block = std::max<std::size_t>(1, cfg.block_rows);

    std::vector<std::size_t> h_index(s.n * l);
    Tensor<T> s_map(Shape{s.n, 1, s.h, s.w});
    parallel_for(s.n, [&](std::size_t n) {
        std::vector<T> qcols(d * l), kcols(d * l), qu, qn, ku, kn;
        kernels::im2col(q.value().item(n), geo, qcols.data());
        kernels::im2col(k.value().item(n), geo, kcols.data());
        detail::normalized_columns(qcols.data(), d, l, qu, qn);
        detail::normalized_columns(kcols.data(), d, l, ku, kn);
        const auto qt = kernels::transpose(qu.data(), d, l);
        std::vector<T> rows(block * l);
        for (std::size_t i0 = 0; i0 < l; i0 += block) {
            const std::size_t nb = std::min(block, l - i0);
            std::fill(rows.begin(), rows.begin() + nb * l, T(0));
            kernels::gemm_acc(rows.data(), qt.data() + i0 * d, ku.data(), nb, d, l);
            for (std::size_t b = 0; b < nb; ++b) {
                const T* row = rows.data() + b * l;
                std::size_t arg = 0;
                for (std::size_t j = 1; j < l; ++j) {
                    if (row[j] > row[arg]) arg = j;
                }
                h_index[n * l + i0 + b] = arg;
                s_map[n * l + i0 + b] = row[arg];
            }
        }
    });

    const std::size_t qi = q.id(), ki = k.id();
    const bool needs = q.requires_grad() || k.requires_grad();
    Var<T> s_var = q.tape().record(
        std::move(s_map), needs, [qi, ki, geo, h_index](Tape<T>& t, std::size_t self) {
            const Tensor<T>& g = t.grad(self);
            const Tensor<T>& sv = t.value(self);
            const Shape xs = t.value(qi).shape();
            const std::size_t d = geo.rows(), l = geo.cols();
            const bool want_q = t.requires_grad(qi), want_k = t.requires_grad(ki);
            Tensor<T>* gq = want_q ? &t.grad(qi) : nullptr;
            Tensor<T>* gk = want_k ? &t.grad(ki) : nullptr;
            parallel_for(xs.n, [&](std::size_t n) {
                std::vector<T> qcols(d * l), kcols(d * l), qu, qn, ku, kn;
                kernels::im2col(t.value(qi).item(n), geo, qcols.data());
                kernels::im2col(t.value(ki).item(n), geo, kcols.data());
                detail::normalized_columns(qcols.data(), d, l, qu, qn);
                detail::normalized_columns(kcols.data(), d, l, ku, kn);
                std::vector<T> gqc(want_q ? d * l : 0, T(0)), gkc(want_k ? d * l : 0, T(0));
                for (std::size_t i = 0; i < l; ++i) {
                    const T gs = g[n * l + i];
                    const std::size_t j = h_index[n * l + i];
                    if (gs == T(0) || qn[i] == T(0) || kn[j] == T(0)) continue;
                    const T sval = sv[n * l + i];
                    for (std::size_t r = 0; r < d; ++r) {
                        const T qv = qu[r * l + i], kv = ku[r * l + j];
                        if (want_q) gqc[r * l + i] += gs * (kv - sval * qv) / qn[i];
                        if (want_k) gkc[r * l + j] += gs * (qv - sval * kv) / kn[j];
                    }
                }
                if (want_q) kernels::col2im_acc(gqc.data(), geo, gq->item(n));
                if (want_k) kernels::col2im_acc(gkc.data(), geo, gk->item(n));
            });
        });
    return {std::move(h_index), s_var};
}

// Gather value patches at h_index and fold them back, averaging overlaps.
template <typename T>
Tensor<T> transfer_forward(const Tensor<T>& v, const std::vector<std::size_t>& h_index, std::size_t patch = 3) {
    const Shape s = v.shape();
    const std::size_t l = s.plane();
    if (h_index.size() != s.n * l) {
        throw ShapeError("transfer: " + std::to_string(h_index.size()) + " indices for value map " + s.str());
    }
    const long rad = static_cast<long>(patch / 2);
    const auto count = coverage_counts<T>(s.h, s.w, patch, 1, patch / 2);
    Tensor<T> out(s);
    const long H = static_cast<long>(s.h), W = static_cast<long>(s.w);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t i = 0; i < l; ++i) {
            const std::size_t j = h_index[n * l + i];
            if (j >= l) std::abort();
            const long yi = static_cast<long>(i / s.w), xi = static_cast<long>(i % s.w);
            const long yj = static_cast<long>(j / s.w), xj = static_cast<long>(j % s.w);
            for (long dy = -rad; dy <= rad; ++dy)
                for (long dx = -rad; dx <= rad; ++dx) {
                    const long ty = yi + dy, tx = xi + dx, sy = yj + dy, sx = xj + dx;
                    if (ty < 0 || ty >= H || tx < 0 || tx >= W) continue;
                    if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                    const std::size_t to = static_cast<std::size_t>(ty * W + tx);
                    const std::size_t from = static_cast<std::size_t>(sy * W + sx);
                    for (std::size_t c = 0; c < s.c; ++c) out.plane(n, c)[to] += v.plane(n, c)[from];
                }
        }
        for (std::size_t c = 0; c < s.c; ++c) {
            T* p = out.plane(n, c);
            for (std::size_t i = 0; i < l; ++i) p[i] /= count[i];
        }
    }
    return out;
}

template <typename T>
Var<T> transfer(const Var<T>& v, const std::vector<std::size_t>& h_index, std::size_t patch = 3) {
    Tensor<T> out = transfer_forward(v.value(), h_index, patch);
    const std::size_t vi = v.id();
    return v.tape().record(std::move(out), v.requires_grad(), [vi, h_index, patch](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gv = t.grad(vi);
        const Shape s = g.shape();
        const std::size_t l = s.plane();
        const long rad = static_cast<long>(patch / 2);
        const auto count = coverage_counts<T>(s.h, s.w, patch, 1, patch / 2);
        const long H = static_cast<long>(s.h), W = static_cast<long>(s.w);
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t i = 0; i < l; ++i) {
                const std::size_t j = h_index[n * l + i];
                const long yi = static_cast<long>(i / s.w), xi = static_cast<long>(i % s.w);
                const long yj = static_cast<long>(j / s.w), xj = static_cast<long>(j % s.w);
                for (long dy = -rad; dy <= rad; ++dy)
                    for (long dx = -rad; dx <= rad; ++dx) {
                        const long ty = yi + dy, tx = xi + dx, sy = yj + dy, sx = xj + dx;
                        if (ty < 0 || ty >= H || tx < 0 || tx >= W) continue;
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        const std::size_t to = static_cast<std::size_t>(ty * W + tx);
                        const std::size_t from = static_cast<std::size_t>(sy * W + sx);
                        for (std::size_t c = 0; c < s.c; ++c) gv.plane(n, c)[from] += g.plane(n, c)[to] / count[to];
                    }
            }
    });
}

// q + conv(concat(q, t)) * s, with s broadcast over channels.
template <typename T>
Var<T> fuse(const Var<T>& q, const Var<T>& t_feat, const Var<T>& s_map, const ParamScope<T>& scope) {
    require_same_shape(q.shape(), t_feat.shape(), "fuse(Q, T)");
    const Shape ss = s_map.shape();
    if (ss.n != q.shape().n || ss.c != 1 || ss.h != q.shape().h || ss.w != q.shape().w) {
        throw ShapeError("fuse: soft-attention map " + ss.str() + " does not broadcast over " + q.shape().str());
    }
    Var<T> joined = concat_channels(q, t_feat);
    Var<T> weight = scope["weight"];
    Var<T> mixed = conv2d(joined, weight, std::optional<Var<T>>(scope["bias"]), 1, weight.shape().h / 2);
    return add(q, broadcast_mul(mixed, s_map));
}

// Complete transformer block: Q from the SR branch, K from the WT branch.
template <typename T>
Var<T> texture_transformer(const Var<T>& q, const Var<T>& k, const ParamScope<T>& scope,
                           const AttentionConfig& cfg = {}) {
    const Ratio up{cfg.value_resample, 1};
    const Ratio down{1, cfg.value_resample};
    Var<T> v = resize_bicubic(resize_bicubic(k, up), down);
    auto att = texture_attention(q, k, cfg);
    Var<T> t_feat = transfer(v, att.h_index, cfg.patch);
    return fuse(q, t_feat, att.s_map, scope);
}

} // namespace cwtnet
