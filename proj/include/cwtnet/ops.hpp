#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/kernels.hpp"
#include "cwtnet/parallel.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace detail {

inline kernels::ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
    if (w.h != w.w) throw ShapeError("conv2d: kernel must be square, got weight " + w.str());
    if (w.c != x.c) {
        throw ShapeError("conv2d: input channels " + x.str() + " do not match weight " + w.str());
    }
    if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
    const std::size_t k = w.h;
    if (k % 2 == 0 && !(k == 2 && stride == 2)) {
        throw ConfigError("conv2d: even kernel size " + std::to_string(k) + " only allowed as 2x2 stride 2");
    }
    if (x.h + 2 * pad < k || x.w + 2 * pad < k) {
        throw ShapeError("conv2d: input " + x.str() + " smaller than kernel " + w.str());
    }
    return kernels::ConvGeometry::make(x.c, x.h, x.w, k, stride, pad);
}

} // namespace detail

// Plain-tensor convolution (no tape). weight (c_out, c_in, k, k), bias (c_out, 1, 1, 1) or empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, std::size_t stride,
                         std::size_t pad) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    const auto g = detail::conv_geometry(xs, ws, stride, pad);
    if (bias && bias->size() != ws.n) {
        throw ShapeError("conv2d: bias " + bias->shape().str() + " does not match weight " + ws.str());
    }
    Tensor<T> out(Shape{xs.n, ws.n, g.oh, g.ow});
    parallel_for(xs.n, [&](std::size_t n) {
        std::vector<T> col(g.rows() * g.cols());
        kernels::im2col(x.item(n), g, col.data());
        T* o = out.item(n);
        if (bias) {
            for (std::size_t co = 0; co < ws.n; ++co) std::fill(o + co * g.cols(), o + (co + 1) * g.cols(), (*bias)[co]);
        }
        kernels::gemm_acc(o, weight.ptr(), col.data(), ws.n, g.rows(), g.cols());
    });
    return out;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, std::size_t stride,
              std::size_t pad) {
    Tape<T>& tape = x.tape();
    Tensor<T> out = conv2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, stride, pad);
    bool needs = x.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
    const std::size_t xi = x.id(), wi = weight.id();
    const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
    return tape.record(std::move(out), needs, [xi, wi, bi, stride, pad](Tape<T>& t, std::size_t self) {
        const Tensor<T>& xv = t.value(xi);
        const Tensor<T>& wv = t.value(wi);
        const Tensor<T>& g = t.grad(self);
        const Shape& xs = xv.shape();
        const Shape& ws = wv.shape();
        const auto geo = detail::conv_geometry(xs, ws, stride, pad);
        const bool want_x = t.requires_grad(xi);
        const bool want_w = t.requires_grad(wi);
        const bool want_b = bi && t.requires_grad(*bi);
        const std::size_t wsize = ws.numel();

        std::vector<T> wt;
        if (want_x) wt = kernels::transpose(wv.ptr(), ws.n, geo.rows());
        std::vector<T> gw_items(want_w ? xs.n * wsize : 0);
        std::vector<T> gb_items(want_b ? xs.n * ws.n : 0);
        Tensor<T>* gx = want_x ? &t.grad(xi) : nullptr;

        parallel_for(xs.n, [&](std::size_t n) {
            const T* gn = g.item(n);
            std::vector<T> col;
            if (want_w) {
                col.resize(geo.rows() * geo.cols());
                kernels::im2col(xv.item(n), geo, col.data());
                kernels::gemm_nt_acc(gw_items.data() + n * wsize, gn, col.data(), ws.n, geo.rows(), geo.cols());
            }
            if (want_b) {
                for (std::size_t co = 0; co < ws.n; ++co) {
                    T s = 0;
                    const T* gp = gn + co * geo.cols();
                    for (std::size_t p = 0; p < geo.cols(); ++p) s += gp[p];
                    gb_items[n * ws.n + co] = s;
                }
            }
            if (want_x) {
                std::vector<T> gcol(geo.rows() * geo.cols(), T(0));
                kernels::gemm_acc(gcol.data(), wt.data(), gn, geo.rows(), ws.n, geo.cols());
                kernels::col2im_acc(gcol.data(), geo, gx->item(n));
            }
        });
        if (want_w) {
            Tensor<T>& gw = t.grad(wi);
            for (std::size_t n = 0; n < xs.n; ++n) {
                for (std::size_t i = 0; i < wsize; ++i) gw[i] += gw_items[n * wsize + i];
            }
        }
        if (want_b) {
            Tensor<T>& gb = t.grad(*bi);
            for (std::size_t n = 0; n < xs.n; ++n) {
                for (std::size_t co = 0; co < ws.n; ++co) gb[co] += gb_items[n * ws.n + co];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Rearrangements
// ---------------------------------------------------------------------------

// Depth-to-space: out(n, c, y*r + i, x*r + j) = in(n, c*r*r + i*r + j, y, x).
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r) {
    const Shape s = x.shape();
    if (r == 0 || s.c % (r * r) != 0) {
        throw ConfigError("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by r^2 = " +
                          std::to_string(r * r));
    }
    const Shape os{s.n, s.c / (r * r), s.h * r, s.w * r};
    auto index_pairs = [s, os, r](auto&& visit) {
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < os.c; ++c)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < r; ++j)
                        for (std::size_t y = 0; y < s.h; ++y)
                            for (std::size_t xx = 0; xx < s.w; ++xx) {
                                const std::size_t src = ((n * s.c + c * r * r + i * r + j) * s.h + y) * s.w + xx;
                                const std::size_t dst = ((n * os.c + c) * os.h + y * r + i) * os.w + xx * r + j;
                                visit(src, dst);
                            }
    };
    Tensor<T> out(os);
    const Tensor<T>& in = x.value();
    index_pairs([&](std::size_t src, std::size_t dst) { out[dst] = in[src]; });
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi, index_pairs](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(xi);
        index_pairs([&](std::size_t src, std::size_t dst) { gx[src] += g[dst]; });
    });
}

// Sliding k x k patches: (n, c, h, w) -> (n, c*k*k, 1, L).
template <typename T>
Tensor<T> unfold_forward(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
    if (k == 0 || stride == 0) throw ConfigError("unfold: k and stride must be >= 1");
    const Shape& s = x.shape();
    if (s.h + 2 * pad < k || s.w + 2 * pad < k) throw ShapeError("unfold: input " + s.str() + " smaller than patch");
    const auto g = kernels::ConvGeometry::make(s.c, s.h, s.w, k, stride, pad);
    Tensor<T> out(Shape{s.n, g.rows(), 1, g.cols()});
    for (std::size_t n = 0; n < s.n; ++n) kernels::im2col(x.item(n), g, out.item(n));
    return out;
}

// Number of patch entries covering each pixel of an (h, w) image.
template <typename T>
std::vector<T> coverage_counts(std::size_t h, std::size_t w, std::size_t k, std::size_t stride, std::size_t pad) {
    const auto g = kernels::ConvGeometry::make(1, h, w, k, stride, pad);
    std::vector<T> ones(g.rows() * g.cols(), T(1));
    std::vector<T> count(h * w, T(0));
    kernels::col2im_acc(ones.data(), g, count.data());
    return count;
}

// Inverse of unfold with overlaps averaged by coverage count. Pixels covered
// by no patch are zero.
template <typename T>
Tensor<T> fold_forward(const Tensor<T>& cols, Shape image, std::size_t k, std::size_t stride, std::size_t pad) {
    const auto g = kernels::ConvGeometry::make(image.c, image.h, image.w, k, stride, pad);
    const Shape& cs = cols.shape();
    if (cs.c != g.rows() || cs.h != 1 || cs.w != g.cols()) {
        throw ShapeError("fold: columns " + cs.str() + " do not match image " + image.str());
    }
    image.n = cs.n;
    Tensor<T> out(image);
    const auto count = coverage_counts<T>(image.h, image.w, k, stride, pad);
    for (std::size_t n = 0; n < cs.n; ++n) {
        kernels::col2im_acc(cols.item(n), g, out.item(n));
        for (std::size_t c = 0; c < image.c; ++c) {
            T* p = out.plane(n, c);
            for (std::size_t i = 0; i < image.plane(); ++i) p[i] = count[i] > 0 ? p[i] / count[i] : T(0);
        }
    }
    return out;
}

template <typename T>
Var<T> unfold(const Var<T>& x, std::size_t k, std::size_t stride, std::size_t pad) {
    Tensor<T> out = unfold_forward(x.value(), k, stride, pad);
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi, k, stride, pad](Tape<T>& t, std::size_t self) {
        const Shape& s = t.value(xi).shape();
        const auto g = kernels::ConvGeometry::make(s.c, s.h, s.w, k, stride, pad);
        const Tensor<T>& gc = t.grad(self);
        Tensor<T>& gx = t.grad(xi);
        for (std::size_t n = 0; n < s.n; ++n) kernels::col2im_acc(gc.item(n), g, gx.item(n));
    });
}

template <typename T>
Var<T> fold(const Var<T>& cols, Shape image, std::size_t k, std::size_t stride, std::size_t pad) {
    Tensor<T> out = fold_forward(cols.value(), image, k, stride, pad);
    const std::size_t ci = cols.id();
    return cols.tape().record(std::move(out), cols.requires_grad(), [ci, k, stride, pad](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Shape& s = g.shape();
        const auto count = coverage_counts<T>(s.h, s.w, k, stride, pad);
        Tensor<T> scaled = g;
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c) {
                T* p = scaled.plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) p[i] = count[i] > 0 ? p[i] / count[i] : T(0);
            }
        t.grad(ci) += unfold_forward(scaled, k, stride, pad);
    });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const Shape sa = a.shape(), sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
    }
    Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::size_t pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::copy(a.value().item(n), a.value().item(n) + pa, out.item(n));
        std::copy(b.value().item(n), b.value().item(n) + pb, out.item(n) + pa);
    }
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                           [ai, bi, pa, pb](Tape<T>& t, std::size_t self) {
                               const Tensor<T>& g = t.grad(self);
                               const std::size_t batch = g.shape().n;
                               const bool wa = t.requires_grad(ai), wb = t.requires_grad(bi);
                               for (std::size_t n = 0; n < batch; ++n) {
                                   const T* gn = g.item(n);
                                   if (wa) kernels::axpy(T(1), gn, t.grad(ai).item(n), pa);
                                   if (wb) kernels::axpy(T(1), gn + pa, t.grad(bi).item(n), pb);
                               }
                           });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a.value();
    out += b.value();
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                           [ai, bi](Tape<T>& t, std::size_t self) {
                               if (t.requires_grad(ai)) t.grad(ai) += t.grad(self);
                               if (t.requires_grad(bi)) t.grad(bi) += t.grad(self);
                           });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                           [ai, bi](Tape<T>& t, std::size_t self) {
                               const Tensor<T>& g = t.grad(self);
                               if (t.requires_grad(ai)) t.grad(ai) += g;
                               if (t.requires_grad(bi)) {
                                   Tensor<T>& gb = t.grad(bi);
                                   for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                               }
                           });
}

template <typename T>
Var<T> scale(const Var<T>& x, T alpha) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v *= alpha;
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi, alpha](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        kernels::axpy(alpha, g.ptr(), t.grad(xi).ptr(), g.size());
    });
}

// x + offsets[c] on every pixel of channel c; offsets are constants.
template <typename T>
Var<T> add_channel_constant(const Var<T>& x, const std::vector<T>& offsets) {
    const Shape s = x.shape();
    if (offsets.size() != s.c) {
        throw ShapeError("add_channel_constant: " + std::to_string(offsets.size()) + " offsets for " + s.str());
    }
    Tensor<T> out = x.value();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            T* p = out.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) p[i] += offsets[c];
        }
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(),
                           [xi](Tape<T>& t, std::size_t self) { t.grad(xi) += t.grad(self); });
}

// a * b where every dimension of b equals a's or is 1.
template <typename T>
Var<T> broadcast_mul(const Var<T>& a, const Var<T>& b) {
    const Shape sa = a.shape(), sb = b.shape();
    auto ok = [](std::size_t da, std::size_t db) { return da == db || db == 1; };
    if (!ok(sa.n, sb.n) || !ok(sa.c, sb.c) || !ok(sa.h, sb.h) || !ok(sa.w, sb.w)) {
        throw ShapeError("broadcast_mul: " + sb.str() + " does not broadcast to " + sa.str());
    }
    auto b_index = [sa, sb](std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return (((sb.n == 1 ? 0 : n) * sb.c + (sb.c == 1 ? 0 : c)) * sb.h + (sb.h == 1 ? 0 : y)) * sb.w +
               (sb.w == 1 ? 0 : x);
    };
    auto visit = [sa, b_index](auto&& fn) {
        std::size_t i = 0;
        for (std::size_t n = 0; n < sa.n; ++n)
            for (std::size_t c = 0; c < sa.c; ++c)
                for (std::size_t y = 0; y < sa.h; ++y)
                    for (std::size_t x = 0; x < sa.w; ++x, ++i) fn(i, b_index(n, c, y, x));
    };
    Tensor<T> out(sa);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    visit([&](std::size_t i, std::size_t j) { out[i] = av[i] * bv[j]; });
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                           [ai, bi, visit](Tape<T>& t, std::size_t self) {
                               const Tensor<T>& g = t.grad(self);
                               const Tensor<T>& av = t.value(ai);
                               const Tensor<T>& bv = t.value(bi);
                               if (t.requires_grad(ai)) {
                                   Tensor<T>& ga = t.grad(ai);
                                   visit([&](std::size_t i, std::size_t j) { ga[i] += g[i] * bv[j]; });
                               }
                               if (t.requires_grad(bi)) {
                                   Tensor<T>& gb = t.grad(bi);
                                   visit([&](std::size_t i, std::size_t j) { gb[j] += g[i] * av[i]; });
                               }
                           });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = v > T(0) ? v : T(0);
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& xv = t.value(xi);
        Tensor<T>& gx = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > T(0) ? g[i] : T(0);
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = T(1) / (T(1) + std::exp(-v));
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& y = t.value(self);
        Tensor<T>& gx = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
}

// Mean over each (n, c) plane -> (n, c, 1, 1).
template <typename T>
Var<T> avg_pool_global(const Var<T>& x) {
    const Shape s = x.shape();
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = x.value().plane(n, c);
            T acc = 0;
            for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
            out(n, c, 0, 0) = acc / static_cast<T>(s.plane());
        }
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi, s](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(xi);
        const T inv = T(1) / static_cast<T>(s.plane());
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c) {
                const T v = g(n, c, 0, 0) * inv;
                T* p = gx.plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) p[i] += v;
            }
    });
}

// ---------------------------------------------------------------------------
// Reductions and graph utilities
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& x) {
    const std::size_t xi = x.id();
    return x.tape().record(Tensor<T>::scalar(x.value().sum()), x.requires_grad(),
                           [xi](Tape<T>& t, std::size_t self) {
                               const T g = t.grad(self)[0];
                               for (auto& v : t.grad(xi).data()) v += g;
                           });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

// Same value, no gradient flows back.
template <typename T>
Var<T> detach(const Var<T>& x) {
    return x.tape().constant(x.value());
}

} // namespace cwtnet
