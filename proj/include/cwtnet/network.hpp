#pragma once

// Dual-branch network. The SR branch lifts the LR image to features, runs
// them through n cross-scale blocks and upsamples; the WT branch starts from
// the diagonal Haar subband of a finer-level image (or, without one, from
// features reconstructed out of the LR image) and feeds keys/values to each
// block's texture transformer.

#include <cstdint>
#include <optional>
#include <string>

#include "cwtnet/attention.hpp"
#include "cwtnet/autodiff.hpp"
#include "cwtnet/blocks.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/rng.hpp"
#include "cwtnet/wavelet.hpp"

namespace cwtnet {

// Where the WT branch gets its input.
//   CrossScale: Haar HH subband of the finer-level image I_GT'.
//   WrTest:     WR-stack reconstruction from the LR image; I_GT' is never read.
//   Sisr:       the LR image itself.
enum class Mode { CrossScale, WrTest, Sisr };

inline const char* mode_name(Mode m) {
    switch (m) {
    case Mode::CrossScale: return "cross-scale";
    case Mode::WrTest: return "wr-test";
    case Mode::Sisr: return "sisr";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "cross-scale") return Mode::CrossScale;
    if (s == "wr-test") return Mode::WrTest;
    if (s == "sisr") return Mode::Sisr;
    throw UsageError("unknown mode '" + s + "' (expected cross-scale, wr-test or sisr)");
}

struct Ablation {
    bool sr_only = false;     // drop the WT branch and every transformer
    bool disable_dwt = false; // WT head convolves I_GT' directly (stride 2)
    bool disable_wr = false;  // no WR stack

    bool operator==(const Ablation&) const = default;
};

struct NetworkConfig {
    int scale = 2;
    int cwtb_count = 12;
    int channels = 64;
    BlockConfig block{};
    Mode mode = Mode::CrossScale;
    RgbMeans rgb_means = kPathologyMeans;
    std::uint64_t seed = 0;
    Ablation ablation{};
    bool wr_normal_init = false; // standard-normal WR weights instead of Kaiming-uniform
    bool wr_aux = true;          // train WR to imitate the cross-scale WT features
    AttentionConfig attention{};

    // Config with the depth rules for `scale` applied.
    static NetworkConfig make(int scale, int cwtb_count, int channels) {
        NetworkConfig cfg;
        cfg.scale = scale;
        cfg.cwtb_count = cwtb_count;
        cfg.channels = channels;
        cfg.block.channels = channels;
        const auto [rb, wrbs] = depth_for_scale(scale);
        cfg.block.rb_per_wt_block = rb;
        cfg.block.wrb_count = wrbs;
        return cfg;
    }

    [[nodiscard]] bool has_wt_branch() const noexcept { return !ablation.sr_only; }
    [[nodiscard]] bool has_wr() const noexcept { return !ablation.sr_only && !ablation.disable_wr; }

    void validate() const {
        log2_scale(scale);
        if (cwtb_count < 1) throw ConfigError("cwtb_count must be >= 1");
        if (channels <= 0) throw ConfigError("channels must be positive");
        if (block.channels != channels) {
            throw ConfigError("block.channels " + std::to_string(block.channels) + " differs from channels " +
                              std::to_string(channels));
        }
        block.validate();
        if (ablation.sr_only && (ablation.disable_wr || ablation.disable_dwt)) {
            throw ConfigError("sr_only already removes the WT branch; it cannot be combined with disable_wr/disable_dwt");
        }
        if (attention.patch == 0 || attention.patch % 2 == 0) throw ConfigError("attention patch must be odd");
        if (attention.value_resample < 1) throw ConfigError("attention value_resample must be >= 1");
    }
};

// Apply ablation flags to a configuration; parameters must be rebuilt.
inline NetworkConfig ablate(NetworkConfig cfg, const Ablation& flags) {
    cfg.ablation = flags;
    cfg.validate();
    return cfg;
}

// Registers every learnable array in a fixed order, initialised from cfg.seed.
template <typename T>
Parameters<T> build_parameters(const NetworkConfig& cfg) {
    cfg.validate();
    Parameters<T> params;
    Rng rng(cfg.seed, 0x5EED);
    const int c = cfg.channels, k = cfg.block.kernel;
    add_conv(params, rng, "sr.head", 3, c, k);
    for (int m = 0; m < cfg.cwtb_count; ++m) add_residual_block(params, rng, "sr.rb." + std::to_string(m), cfg.block);
    if (cfg.has_wt_branch()) {
        add_conv(params, rng, "wt.head", 3, c, k);
        for (int m = 0; m < cfg.cwtb_count; ++m) {
            for (int j = 0; j < cfg.block.rb_per_wt_block; ++j) {
                add_residual_block(params, rng, "wt.rb." + std::to_string(m) + "." + std::to_string(j), cfg.block);
            }
            add_conv(params, rng, "tf." + std::to_string(m), 2 * c, c, k);
        }
        add_conv(params, rng, "wt.tail", c, 3, k);
    }
    if (cfg.has_wr()) {
        const Init init = cfg.wr_normal_init ? Init::StandardNormal : Init::KaimingUniform;
        add_conv(params, rng, "wr.head", 3, c, k, init);
        add_wr_module(params, rng, "wr", cfg.block, init);
    }
    add_upsampler(params, rng, "up", c, cfg.scale, k);
    return params;
}

inline std::size_t parameter_count(const NetworkConfig& cfg) { return build_parameters<float>(cfg).count(); }

// Parameters that only influence the WT-branch output I_WT.
inline bool is_wt_only_parameter(const std::string& name) { return name.rfind("wt.tail.", 0) == 0; }

template <typename T>
struct ForwardResult {
    Var<T> i_hr;                         // (n, 3, p*scale, p*scale)
    Var<T> i_wt;                         // (n, 3, p, p)
    std::optional<Var<T>> wr_features;   // WR reconstruction (aux training only)
    std::optional<Var<T>> wt_features;   // cross-scale WT head features, detached
};

template <typename T>
ForwardResult<T> forward(const NetworkConfig& cfg, Parameters<T>& params, const Var<T>& i_lr,
                         const std::optional<Var<T>>& wt_input, Mode mode, bool with_wr_aux = false) {
    Tape<T>& tape = i_lr.tape();
    ParamScope<T> root(tape, params);
    const Shape ls = i_lr.shape();
    if (ls.c != 3) throw ShapeError("forward[i_lr]: expected 3 channels, got " + ls.str());

    Var<T> x = mean_shift(i_lr, cfg.rgb_means, -1);
    Var<T> f0 = conv(root.sub("sr.head"), x);

    std::optional<Var<T>> g;
    ForwardResult<T> result;
    if (cfg.has_wt_branch()) {
        switch (mode) {
        case Mode::CrossScale: {
            if (!wt_input) throw UsageError("forward[wt_input]: cross-scale mode needs the finer-level image");
            const Shape ws = wt_input->shape();
            if (ws.n != ls.n || ws.c != 3 || ws.h != 2 * ls.h || ws.w != 2 * ls.w) {
                throw ShapeError("forward[wt_input]: expected (" + std::to_string(ls.n) + ", 3, " +
                                 std::to_string(2 * ls.h) + ", " + std::to_string(2 * ls.w) + "), got " + ws.str());
            }
            g = cfg.ablation.disable_dwt ? conv(root.sub("wt.head"), *wt_input, 2)
                                         : conv(root.sub("wt.head"), dwt_hh(*wt_input));
            if (with_wr_aux && cfg.has_wr()) {
                result.wr_features = wr_module(conv(root.sub("wr.head"), x), root.sub("wr"), cfg.block.wrb_count,
                                               cfg.block.ca_reduction);
                result.wt_features = detach(*g);
            }
            break;
        }
        case Mode::WrTest:
            if (wt_input) throw UsageError("forward[wt_input]: wr-test mode must not receive a cross-scale image");
            if (!cfg.has_wr()) throw ConfigError("forward: wr-test mode requires the WR stack (disable_wr is set)");
            g = wr_module(conv(root.sub("wr.head"), x), root.sub("wr"), cfg.block.wrb_count, cfg.block.ca_reduction);
            break;
        case Mode::Sisr:
            if (wt_input) throw UsageError("forward[wt_input]: sisr mode takes no cross-scale image");
            g = conv(root.sub("wt.head"), x);
            break;
        }
    }

    Var<T> f = f0;
    for (int m = 0; m < cfg.cwtb_count; ++m) {
        const std::string ms = std::to_string(m);
        Var<T> s = residual_block(f, root.sub("sr.rb." + ms));
        if (!g) {
            f = s;
            continue;
        }
        for (int j = 0; j < cfg.block.rb_per_wt_block; ++j) {
            g = residual_block(*g, root.sub("wt.rb." + ms + "." + std::to_string(j)));
        }
        f = add(s, texture_transformer(s, *g, root.sub("tf." + ms), cfg.attention));
    }
    f = add(f0, f);
    result.i_hr = mean_shift(upsampler(f, cfg.scale, root.sub("up")), cfg.rgb_means, +1);
    result.i_wt = g ? conv(root.sub("wt.tail"), *g) : tape.constant(Tensor<T>(Shape{ls.n, 3, ls.h, ls.w}));
    return result;
}

} // namespace cwtnet
