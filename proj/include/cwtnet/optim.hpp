#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cwtnet/autodiff.hpp"

namespace cwtnet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    explicit AdamState(const Parameters<T>& params) {
        for (const auto& e : params) {
            m.emplace_back(e.value.shape());
            v.emplace_back(e.value.shape());
        }
    }
};

// Bias-corrected adaptive-moment update using the gradients stored in params.
template <typename T>
void adam_step(Parameters<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t e = 0; e < params.size(); ++e) {
        auto& entry = params[e];
        Tensor<T>& m = state.m[e];
        Tensor<T>& v = state.v[e];
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            const double g = entry.grad[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
            entry.value[i] = static_cast<T>(entry.value[i] - update);
        }
    }
}

} // namespace cwtnet
