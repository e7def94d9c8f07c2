#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/rng.hpp"

namespace cwtnet {

using RgbMeans = std::array<double, 3>;

inline constexpr RgbMeans kPathologyMeans{0.7204, 0.4298, 0.6379};

// Residual-block and WR-stack depth for an upsampling factor:
// x2 -> (2, 4), and each further doubling adds one RB and two WRBs.
inline std::pair<int, int> depth_for_scale(int scale) {
    int steps = 0;
    switch (scale) {
    case 2: steps = 1; break;
    case 4: steps = 2; break;
    case 8: steps = 3; break;
    default: throw ConfigError("unsupported scale " + std::to_string(scale) + " (expected 2, 4 or 8)");
    }
    return {2 + (steps - 1), 4 + 2 * (steps - 1)};
}

inline int log2_scale(int scale) {
    switch (scale) {
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
    default: throw ConfigError("unsupported scale " + std::to_string(scale) + " (expected 2, 4 or 8)");
    }
}

struct BlockConfig {
    int channels = 64;
    int kernel = 3;
    int ca_reduction = 8;
    int rb_per_wt_block = 2;
    int wrb_count = 4;
    int wrb_width = 0; // inner width of the WRB convs; 0 means `channels`

    [[nodiscard]] int inner_width() const noexcept { return wrb_width > 0 ? wrb_width : channels; }

    void validate() const {
        if (channels <= 0) throw ConfigError("channels must be positive");
        if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("block kernel must be odd");
        if (ca_reduction <= 0 || channels % ca_reduction != 0) {
            throw ConfigError("channels " + std::to_string(channels) + " not divisible by channel-attention reduction " +
                              std::to_string(ca_reduction));
        }
        if (rb_per_wt_block < 1 || wrb_count < 0 || wrb_width < 0) throw ConfigError("invalid block depth");
    }
};

// ---------------------------------------------------------------------------
// Parameter registration
// ---------------------------------------------------------------------------

enum class Init { KaimingUniform, StandardNormal, Zero };

// Weight (c_out, c_in, k, k) plus bias (c_out, 1, 1, 1). Kaiming-uniform uses
// the fan-in bound 1/sqrt(c_in * k * k); biases start at zero.
template <typename T>
void add_conv(Parameters<T>& params, Rng& rng, const std::string& name, int c_in, int c_out, int k,
              Init init = Init::KaimingUniform) {
    Tensor<T> w(Shape{static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in), static_cast<std::size_t>(k),
                      static_cast<std::size_t>(k)});
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    for (auto& v : w.data()) {
        switch (init) {
        case Init::KaimingUniform: v = static_cast<T>(rng.uniform(-bound, bound)); break;
        case Init::StandardNormal: v = static_cast<T>(rng.normal()); break;
        case Init::Zero: v = T(0); break;
        }
    }
    params.add(name + ".weight", std::move(w));
    params.add(name + ".bias", Tensor<T>(Shape{static_cast<std::size_t>(c_out), 1, 1, 1}));
}

template <typename T>
void add_residual_block(Parameters<T>& params, Rng& rng, const std::string& prefix, const BlockConfig& cfg) {
    add_conv(params, rng, prefix + ".conv1", cfg.channels, cfg.channels, cfg.kernel);
    add_conv(params, rng, prefix + ".conv2", cfg.channels, cfg.channels, cfg.kernel);
}

template <typename T>
void add_channel_attention(Parameters<T>& params, Rng& rng, const std::string& prefix, int channels, int reduction,
                           Init init = Init::KaimingUniform) {
    add_conv(params, rng, prefix + ".down", channels, channels / reduction, 1, init);
    add_conv(params, rng, prefix + ".up", channels / reduction, channels, 1, init);
}

template <typename T>
void add_wrb(Parameters<T>& params, Rng& rng, const std::string& prefix, const BlockConfig& cfg,
             Init init = Init::KaimingUniform) {
    add_conv(params, rng, prefix + ".conv1", cfg.channels, cfg.inner_width(), cfg.kernel, init);
    add_conv(params, rng, prefix + ".conv2", cfg.inner_width(), cfg.channels, cfg.kernel, init);
    add_channel_attention(params, rng, prefix + ".ca", cfg.channels, cfg.ca_reduction, init);
}

template <typename T>
void add_wr_module(Parameters<T>& params, Rng& rng, const std::string& prefix, const BlockConfig& cfg,
                   Init init = Init::KaimingUniform) {
    for (int i = 0; i < cfg.wrb_count; ++i) add_wrb(params, rng, prefix + ".wrb." + std::to_string(i), cfg, init);
    add_conv(params, rng, prefix + ".tail", cfg.channels, cfg.channels, cfg.kernel, init);
}

template <typename T>
void add_upsampler(Parameters<T>& params, Rng& rng, const std::string& prefix, int channels, int scale, int kernel) {
    const int stages = log2_scale(scale);
    for (int i = 0; i < stages; ++i) {
        add_conv(params, rng, prefix + ".stage." + std::to_string(i), channels, 4 * channels, kernel);
    }
    add_conv(params, rng, prefix + ".tail", channels, 3, kernel);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

// Convolution with "same" padding for odd kernels, none for 2x2.
template <typename T>
Var<T> conv(const ParamScope<T>& scope, const Var<T>& x, std::size_t stride = 1) {
    Var<T> w = scope["weight"];
    const std::size_t k = w.shape().h;
    return conv2d(x, w, std::optional<Var<T>>(scope["bias"]), stride, k % 2 == 1 ? k / 2 : 0);
}

// sign -1 subtracts the per-channel means, +1 restores them.
template <typename T>
Var<T> mean_shift(const Var<T>& x, const RgbMeans& means, int sign) {
    if (x.shape().c != means.size()) {
        throw ShapeError("mean_shift: expected " + std::to_string(means.size()) + " channels, got " + x.shape().str());
    }
    if (sign != 1 && sign != -1) throw UsageError("mean_shift: sign must be +1 or -1");
    std::vector<T> offsets(means.size());
    for (std::size_t c = 0; c < means.size(); ++c) offsets[c] = static_cast<T>(sign * means[c]);
    return add_channel_constant(x, offsets);
}

// x + conv2(relu(conv1(x)))
template <typename T>
Var<T> residual_block(const Var<T>& x, const ParamScope<T>& scope) {
    return add(x, conv(scope.sub("conv2"), relu(conv(scope.sub("conv1"), x))));
}

// x scaled per channel by sigmoid(up(relu(down(avgpool(x))))).
template <typename T>
Var<T> channel_attention(const Var<T>& x, const ParamScope<T>& scope, int reduction) {
    const std::size_t c = x.shape().c;
    if (reduction <= 0 || c % static_cast<std::size_t>(reduction) != 0) {
        throw ConfigError("channel_attention: " + std::to_string(c) + " channels not divisible by reduction " +
                          std::to_string(reduction));
    }
    Var<T> down_w = scope.sub("down")["weight"];
    if (down_w.shape().n != c / static_cast<std::size_t>(reduction)) {
        throw ConfigError("channel_attention: parameters " + down_w.shape().str() + " do not match reduction " +
                          std::to_string(reduction));
    }
    Var<T> pooled = avg_pool_global(x);
    Var<T> squeezed = relu(conv2d(pooled, down_w, std::optional<Var<T>>(scope.sub("down")["bias"]), 1, 0));
    Var<T> factors = sigmoid(conv(scope.sub("up"), squeezed));
    return broadcast_mul(x, factors);
}

// Wavelet-reconstruction block: conv -> relu -> conv -> channel attention, plus identity.
template <typename T>
Var<T> wrb(const Var<T>& x, const ParamScope<T>& scope, int reduction) {
    Var<T> y = conv(scope.sub("conv2"), relu(conv(scope.sub("conv1"), x)));
    return add(x, channel_attention(y, scope.sub("ca"), reduction));
}

template <typename T>
Var<T> wr_module(const Var<T>& x, const ParamScope<T>& scope, int wrb_count, int reduction) {
    Var<T> y = x;
    for (int i = 0; i < wrb_count; ++i) y = wrb(y, scope.sub("wrb." + std::to_string(i)), reduction);
    return conv(scope.sub("tail"), y);
}

// log2(scale) x [conv to 4c -> pixel shuffle 2], then conv to 3 channels.
template <typename T>
Var<T> upsampler(const Var<T>& x, int scale, const ParamScope<T>& scope) {
    const int stages = log2_scale(scale);
    Var<T> y = x;
    for (int i = 0; i < stages; ++i) y = pixel_shuffle(conv(scope.sub("stage." + std::to_string(i)), y), 2);
    return conv(scope.sub("tail"), y);
}

} // namespace cwtnet
