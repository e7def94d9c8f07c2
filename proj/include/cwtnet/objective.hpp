#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

// ---------------------------------------------------------------------------
// Pixel losses
// ---------------------------------------------------------------------------

// Mean absolute difference over every element.
template <typename T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "l1_loss");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    T acc = 0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
    const T inv = T(1) / static_cast<T>(av.size());
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(Tensor<T>::scalar(acc * inv), a.requires_grad() || b.requires_grad(),
                           [ai, bi, inv](Tape<T>& t, std::size_t self) {
                               const T g = t.grad(self)[0] * inv;
                               const Tensor<T>& av = t.value(ai);
                               const Tensor<T>& bv = t.value(bi);
                               const bool wa = t.requires_grad(ai), wb = t.requires_grad(bi);
                               for (std::size_t i = 0; i < av.size(); ++i) {
                                   const T d = av[i] - bv[i];
                                   const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
                                   if (wa) t.grad(ai)[i] += sg;
                                   if (wb) t.grad(bi)[i] -= sg;
                               }
                           });
}

template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mse_loss");
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    T acc = 0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
    const T inv = T(1) / static_cast<T>(av.size());
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(Tensor<T>::scalar(acc * inv), a.requires_grad() || b.requires_grad(),
                           [ai, bi, inv](Tape<T>& t, std::size_t self) {
                               const T g = t.grad(self)[0] * inv * T(2);
                               const Tensor<T>& av = t.value(ai);
                               const Tensor<T>& bv = t.value(bi);
                               const bool wa = t.requires_grad(ai), wb = t.requires_grad(bi);
                               for (std::size_t i = 0; i < av.size(); ++i) {
                                   const T d = (av[i] - bv[i]) * g;
                                   if (wa) t.grad(ai)[i] += d;
                                   if (wb) t.grad(bi)[i] -= d;
                               }
                           });
}

// Elementwise clamp; gradient passes only where the input is inside [lo, hi].
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = std::clamp(v, lo, hi);
    const std::size_t xi = x.id();
    return x.tape().record(std::move(out), x.requires_grad(), [xi, lo, hi](Tape<T>& t, std::size_t self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& xv = t.value(xi);
        Tensor<T>& gx = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
        }
    });
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), valid positions
// only, C1 = 0.01^2 and C2 = 0.03^2 for unit dynamic range.
struct SsimParams {
    static constexpr std::size_t window = 11;
    static constexpr double sigma = 1.5;
    static constexpr double c1 = 0.01 * 0.01;
    static constexpr double c2 = 0.03 * 0.03;
};

namespace detail {

template <typename T>
std::array<T, SsimParams::window> gaussian_window() {
    std::array<double, SsimParams::window> g{};
    double total = 0;
    const double mid = (SsimParams::window - 1) / 2.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = static_cast<double>(i) - mid;
        g[i] = std::exp(-d * d / (2.0 * SsimParams::sigma * SsimParams::sigma));
        total += g[i];
    }
    std::array<T, SsimParams::window> out{};
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<T>(g[i] / total);
    return out;
}

// Valid separable Gaussian filter of one h x w plane -> (h-10) x (w-10).
template <typename T>
void gaussian_valid(const T* in, std::size_t h, std::size_t w, T* out) {
    static const auto g = gaussian_window<T>();
    constexpr std::size_t k = SsimParams::window;
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    std::vector<T> tmp(h * ow);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            T acc = 0;
            for (std::size_t i = 0; i < k; ++i) acc += g[i] * in[y * w + x + i];
            tmp[y * ow + x] = acc;
        }
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            T acc = 0;
            for (std::size_t i = 0; i < k; ++i) acc += g[i] * tmp[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
}

// Adjoint of gaussian_valid, accumulated into out (h x w).
template <typename T>
void gaussian_valid_adjoint(const T* g_out, std::size_t h, std::size_t w, T* out) {
    static const auto g = gaussian_window<T>();
    constexpr std::size_t k = SsimParams::window;
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    std::vector<T> tmp(h * ow, T(0));
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            const T v = g_out[y * ow + x];
            for (std::size_t i = 0; i < k; ++i) tmp[(y + i) * ow + x] += g[i] * v;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            const T v = tmp[y * ow + x];
            for (std::size_t i = 0; i < k; ++i) out[y * w + x + i] += g[i] * v;
        }
}

inline void check_ssim_shapes(const Shape& a, const Shape& b) {
    require_same_shape(a, b, "ssim");
    if (a.h < SsimParams::window || a.w < SsimParams::window) {
        throw ConfigError("ssim: image " + a.str() + " smaller than the 11x11 window");
    }
}

// Local statistics of one plane pair.
template <typename T>
struct SsimStats {
    std::vector<T> mx, my, sxx, syy, sxy;

    SsimStats(const T* x, const T* y, std::size_t h, std::size_t w) {
        const std::size_t n = (h - SsimParams::window + 1) * (w - SsimParams::window + 1);
        std::vector<T> xx(h * w), yy(h * w), xy(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        mx.resize(n);
        my.resize(n);
        sxx.resize(n);
        syy.resize(n);
        sxy.resize(n);
        gaussian_valid(x, h, w, mx.data());
        gaussian_valid(y, h, w, my.data());
        gaussian_valid(xx.data(), h, w, sxx.data());
        gaussian_valid(yy.data(), h, w, syy.data());
        gaussian_valid(xy.data(), h, w, sxy.data());
    }
};

} // namespace detail

// Differentiable mean SSIM.
template <typename T>
Var<T> ssim(const Var<T>& a, const Var<T>& b) {
    const Shape s = a.shape();
    detail::check_ssim_shapes(s, b.shape());
    const T c1 = static_cast<T>(SsimParams::c1), c2 = static_cast<T>(SsimParams::c2);
    const std::size_t per = (s.h - SsimParams::window + 1) * (s.w - SsimParams::window + 1);
    const T inv = T(1) / static_cast<T>(per * s.n * s.c);
    T total = 0;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            detail::SsimStats<T> st(a.value().plane(n, c), b.value().plane(n, c), s.h, s.w);
            T plane_sum = 0;
            for (std::size_t i = 0; i < per; ++i) {
                const T mx = st.mx[i], my = st.my[i];
                const T vx = st.sxx[i] - mx * mx, vy = st.syy[i] - my * my, cxy = st.sxy[i] - mx * my;
                plane_sum += ((T(2) * mx * my + c1) * (T(2) * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
            total += plane_sum;
        }
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(
        Tensor<T>::scalar(total * inv), a.requires_grad() || b.requires_grad(),
        [ai, bi, inv, c1, c2, per](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv;
            const Tensor<T>& av = t.value(ai);
            const Tensor<T>& bv = t.value(bi);
            const Shape s = av.shape();
            const bool wa = t.requires_grad(ai), wb = t.requires_grad(bi);
            std::vector<T> d_mx(per), d_my(per), d_sxx(per), d_syy(per), d_sxy(per);
            std::vector<T> tmp_mx(s.plane()), tmp_my(s.plane()), tmp_sxx(s.plane()), tmp_syy(s.plane()),
                tmp_sxy(s.plane());
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c) {
                    const T* x = av.plane(n, c);
                    const T* y = bv.plane(n, c);
                    detail::SsimStats<T> st(x, y, s.h, s.w);
                    for (std::size_t i = 0; i < per; ++i) {
                        const T mx = st.mx[i], my = st.my[i];
                        const T vx = st.sxx[i] - mx * mx, vy = st.syy[i] - my * my, cxy = st.sxy[i] - mx * my;
                        const T a1 = T(2) * mx * my + c1, a2 = T(2) * cxy + c2;
                        const T b1 = mx * mx + my * my + c1, b2 = vx + vy + c2;
                        const T den = b1 * b2;
                        const T val = a1 * a2 / den;
                        const T common = (a2 - a1) / den;
                        const T ib = T(1) / b1 - T(1) / b2;
                        d_mx[i] = g * (T(2) * my * common - T(2) * mx * val * ib);
                        d_my[i] = g * (T(2) * mx * common - T(2) * my * val * ib);
                        d_sxx[i] = g * (-val / b2);
                        d_syy[i] = g * (-val / b2);
                        d_sxy[i] = g * (T(2) * a1 / den);
                    }
                    std::fill(tmp_mx.begin(), tmp_mx.end(), T(0));
                    std::fill(tmp_my.begin(), tmp_my.end(), T(0));
                    std::fill(tmp_sxx.begin(), tmp_sxx.end(), T(0));
                    std::fill(tmp_syy.begin(), tmp_syy.end(), T(0));
                    std::fill(tmp_sxy.begin(), tmp_sxy.end(), T(0));
                    detail::gaussian_valid_adjoint(d_mx.data(), s.h, s.w, tmp_mx.data());
                    detail::gaussian_valid_adjoint(d_my.data(), s.h, s.w, tmp_my.data());
                    detail::gaussian_valid_adjoint(d_sxx.data(), s.h, s.w, tmp_sxx.data());
                    detail::gaussian_valid_adjoint(d_syy.data(), s.h, s.w, tmp_syy.data());
                    detail::gaussian_valid_adjoint(d_sxy.data(), s.h, s.w, tmp_sxy.data());
                    if (wa) {
                        T* gx = t.grad(ai).plane(n, c);
                        for (std::size_t i = 0; i < s.plane(); ++i)
                            gx[i] += tmp_mx[i] + T(2) * x[i] * tmp_sxx[i] + y[i] * tmp_sxy[i];
                    }
                    if (wb) {
                        T* gy = t.grad(bi).plane(n, c);
                        for (std::size_t i = 0; i < s.plane(); ++i)
                            gy[i] += tmp_my[i] + T(2) * y[i] * tmp_syy[i] + x[i] * tmp_sxy[i];
                    }
                }
        });
}

// 1 - SSIM, clipped to [0, 2].
template <typename T>
Var<T> ssim_loss(const Var<T>& a, const Var<T>& b) {
    Var<T> s = ssim(a, b);
    Var<T> one = a.tape().constant(Tensor<T>::scalar(T(1)));
    return clamp(sub(one, s), T(0), T(2));
}

// ---------------------------------------------------------------------------
// Evaluation metrics (double precision, no tape)
// ---------------------------------------------------------------------------

template <typename T>
double ssim_value(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_ssim_shapes(a.shape(), b.shape());
    Tape<double> tape(false);
    return ssim(tape.constant(a.template cast<double>()), tape.constant(b.template cast<double>())).value()[0];
}

template <typename T>
double mse_value(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "mse");
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// 10 log10(1 / MSE) on unit range; +infinity for identical inputs.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    const double m = mse_value(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

// ---------------------------------------------------------------------------
// Composite objective
// ---------------------------------------------------------------------------

struct LossWeights {
    double sr = 0.3;      // lambda_1
    double wt = 0.7;      // lambda_2
    double ssim_sr = 0.2; // lambda_3
    double ssim_wt = 0.2; // lambda_4
    double wr_aux = 0.1;  // auxiliary WR imitation term

    void validate() const {
        if (sr < 0 || wt < 0 || ssim_sr < 0 || ssim_wt < 0 || wr_aux < 0) {
            throw ConfigError("loss weights must be non-negative");
        }
    }
};

// Which pixel/structure terms make up each branch loss.
enum class LossKind { Ours, OnlyL1, OnlyMse };

template <typename T>
struct LossTerms {
    Var<T> total;
    Var<T> sr;
    Var<T> wt;
    std::optional<Var<T>> aux;

    [[nodiscard]] double total_value() const { return total.value()[0]; }
    [[nodiscard]] double sr_value() const { return sr.value()[0]; }
    [[nodiscard]] double wt_value() const { return wt.value()[0]; }
    [[nodiscard]] double aux_value() const { return aux ? aux->value()[0] : 0.0; }
};

template <typename T>
Var<T> branch_loss(const Var<T>& pred, const Var<T>& target, double ssim_weight, LossKind kind) {
    switch (kind) {
    case LossKind::OnlyL1:
        return l1_loss(pred, target);
    case LossKind::OnlyMse:
        return mse_loss(pred, target);
    case LossKind::Ours:
        break;
    }
    Var<T> l1 = l1_loss(pred, target);
    if (ssim_weight == 0.0) return l1;
    return add(l1, scale(ssim_loss(pred, target), static_cast<T>(ssim_weight)));
}

// L = w_sr * L_SR + w_wt * L_WT (+ w_aux * |wr - target|_1 when aux is given).
template <typename T>
LossTerms<T> composite_loss(const Var<T>& i_hr, const Var<T>& i_gt, const Var<T>& i_wt, const Var<T>& dwt_target,
                            const LossWeights& w, LossKind kind = LossKind::Ours,
                            std::optional<std::pair<Var<T>, Var<T>>> aux = std::nullopt) {
    w.validate();
    LossTerms<T> terms;
    terms.sr = branch_loss(i_hr, i_gt, w.ssim_sr, kind);
    terms.wt = branch_loss(i_wt, dwt_target, w.ssim_wt, kind);
    terms.total = add(scale(terms.sr, static_cast<T>(w.sr)), scale(terms.wt, static_cast<T>(w.wt)));
    if (aux) {
        terms.aux = l1_loss(aux->first, aux->second);
        terms.total = add(terms.total, scale(*terms.aux, static_cast<T>(w.wr_aux)));
    }
    return terms;
}

} // namespace cwtnet
