#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "cwtnet/errors.hpp"
#include "cwtnet/network.hpp"
#include "cwtnet/objective.hpp"
#include "cwtnet/optim.hpp"

namespace cwtnet {

using nlohmann::json;

// Branch-weight strategies: only-sr zeroes the WT weight, only-wt the SR
// weight, weight-exchange swaps the two.
enum class OptStrategy { Ours, OnlySr, OnlyWt, WeightExchange };

inline const char* strategy_name(OptStrategy s) {
    switch (s) {
    case OptStrategy::Ours: return "ours";
    case OptStrategy::OnlySr: return "only-sr";
    case OptStrategy::OnlyWt: return "only-wt";
    case OptStrategy::WeightExchange: return "weight-exchange";
    }
    return "?";
}

inline OptStrategy parse_strategy(const std::string& s) {
    if (s == "ours") return OptStrategy::Ours;
    if (s == "only-sr") return OptStrategy::OnlySr;
    if (s == "only-wt") return OptStrategy::OnlyWt;
    if (s == "weight-exchange") return OptStrategy::WeightExchange;
    throw UsageError("unknown optimization strategy '" + s + "' (expected ours, only-sr, only-wt or weight-exchange)");
}

inline const char* loss_kind_name(LossKind k) {
    switch (k) {
    case LossKind::Ours: return "ours";
    case LossKind::OnlyL1: return "only-l1";
    case LossKind::OnlyMse: return "only-mse";
    }
    return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "ours") return LossKind::Ours;
    if (s == "only-l1") return LossKind::OnlyL1;
    if (s == "only-mse") return LossKind::OnlyMse;
    throw UsageError("unknown loss '" + s + "' (expected ours, only-l1 or only-mse)");
}

inline LossWeights apply_strategy(LossWeights w, OptStrategy s) {
    switch (s) {
    case OptStrategy::Ours: break;
    case OptStrategy::OnlySr: w.wt = 0.0; break;
    case OptStrategy::OnlyWt: w.sr = 0.0; break;
    case OptStrategy::WeightExchange: std::swap(w.sr, w.wt); break;
    }
    return w;
}

struct DataConfig {
    std::string source = "synthetic"; // "synthetic" or "dir"
    std::uint64_t seed = 7;
    std::size_t count = 4;            // synthetic triples
    std::string dir;                  // dataset root for source "dir"
    std::string split = "train";
    double cell_density = 1.0;
    bool bicubic_levels = false;
};

struct RunConfig {
    std::string preset = "desk";
    NetworkConfig network = NetworkConfig::make(2, 2, 16);
    LossWeights weights{};
    LossKind loss = LossKind::Ours;
    OptStrategy strategy = OptStrategy::Ours;
    AdamConfig adam{};
    DataConfig data{};
    std::size_t patch = 32;
    std::size_t batch = 4;
    std::uint64_t steps = 300;
    std::uint64_t checkpoint_every = 100;
    std::uint64_t log_every = 10;
    std::uint64_t eval_every = 0; // 0: evaluate only at the end
    bool augment = true;
    std::uint64_t seed = 0;       // batch order and augmentation
    int threads = 0;

    [[nodiscard]] LossWeights effective_weights() const { return apply_strategy(weights, strategy); }

    void validate() const {
        network.validate();
        weights.validate();
        if (patch == 0 || patch % 2 != 0) throw ConfigError("patch must be a positive even number");
        if (patch < SsimParams::window) {
            throw ConfigError("patch " + std::to_string(patch) + " is smaller than the SSIM window");
        }
        if (batch == 0) throw ConfigError("batch must be >= 1");
        if (steps == 0) throw ConfigError("steps must be >= 1");
        if (adam.lr <= 0 || adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1 || adam.eps <= 0) {
            throw ConfigError("invalid optimizer settings");
        }
        if (data.source == "synthetic") {
            if (data.count == 0) throw ConfigError("data.count must be >= 1");
        } else if (data.source == "dir") {
            if (data.dir.empty()) throw ConfigError("data.dir is required for source 'dir'");
        } else {
            throw ConfigError("data.source must be 'synthetic' or 'dir', got '" + data.source + "'");
        }
        if (network.mode == Mode::WrTest) throw ConfigError("training in wr-test mode is not supported");
    }
};

// Full-size profile: 12 CWTBs, 64 channels, 64x64 LR patches.
inline RunConfig full_preset(int scale = 2) {
    RunConfig c;
    c.preset = "full";
    c.network = NetworkConfig::make(scale, 12, 64);
    c.patch = 64;
    c.batch = 16;
    c.steps = 1000;
    c.checkpoint_every = 100;
    c.data.count = 120;
    return c;
}

// Desk profile: 2 CWTBs, 16 channels, 32x32 LR patches, 300 steps.
inline RunConfig desk_preset(int scale = 2) {
    RunConfig c;
    c.preset = "desk";
    c.network = NetworkConfig::make(scale, 2, 16);
    c.patch = 32;
    c.batch = 4;
    c.steps = 300;
    c.adam.lr = 2e-3;
    c.checkpoint_every = 100;
    c.data.count = 4;
    return c;
}

inline RunConfig preset(const std::string& name, int scale = 2) {
    if (name == "full") return full_preset(scale);
    if (name == "desk") return desk_preset(scale);
    throw ConfigError("unknown preset '" + name + "' (expected full or desk)");
}

inline json to_json(const RunConfig& c) {
    const NetworkConfig& n = c.network;
    return json{
        {"preset", c.preset},
        {"network",
         {{"scale", n.scale},
          {"cwtb_count", n.cwtb_count},
          {"channels", n.channels},
          {"kernel", n.block.kernel},
          {"ca_reduction", n.block.ca_reduction},
          {"rb_per_wt_block", n.block.rb_per_wt_block},
          {"wrb_count", n.block.wrb_count},
          {"wrb_width", n.block.wrb_width},
          {"mode", mode_name(n.mode)},
          {"rgb_means", n.rgb_means},
          {"seed", n.seed},
          {"sr_only", n.ablation.sr_only},
          {"disable_dwt", n.ablation.disable_dwt},
          {"disable_wr", n.ablation.disable_wr},
          {"wr_normal_init", n.wr_normal_init},
          {"wr_aux", n.wr_aux},
          {"attention_block_rows", n.attention.block_rows},
          {"value_resample", n.attention.value_resample}}},
        {"loss",
         {{"kind", loss_kind_name(c.loss)},
          {"strategy", strategy_name(c.strategy)},
          {"lambda_sr", c.weights.sr},
          {"lambda_wt", c.weights.wt},
          {"lambda_ssim_sr", c.weights.ssim_sr},
          {"lambda_ssim_wt", c.weights.ssim_wt},
          {"lambda_wr_aux", c.weights.wr_aux}}},
        {"optimizer", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
        {"data",
         {{"source", c.data.source},
          {"seed", c.data.seed},
          {"count", c.data.count},
          {"dir", c.data.dir},
          {"split", c.data.split},
          {"cell_density", c.data.cell_density},
          {"bicubic_levels", c.data.bicubic_levels}}},
        {"train",
         {{"patch", c.patch},
          {"batch", c.batch},
          {"steps", c.steps},
          {"checkpoint_every", c.checkpoint_every},
          {"log_every", c.log_every},
          {"eval_every", c.eval_every},
          {"augment", c.augment},
          {"seed", c.seed},
          {"threads", c.threads}}}};
}

namespace detail {

inline void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items()) {
        if (!known.contains(k)) throw ConfigError("unknown config key '" + section + (section.empty() ? "" : ".") + k + "'");
    }
}

template <typename V>
void read(const json& obj, const char* key, V& out) {
    if (obj.contains(key)) out = obj.at(key).get<V>();
}

} // namespace detail

// Missing keys keep the value of the named preset (default "desk"); unknown
// keys are rejected so typos cannot silently fall back to defaults.
inline RunConfig run_config_from_json(const json& j) {
    using detail::read;
    try {
        detail::reject_unknown(j, "", {"preset", "network", "loss", "optimizer", "data", "train"});
        int scale = 2;
        if (j.contains("network") && j["network"].contains("scale")) scale = j["network"]["scale"].get<int>();
        RunConfig c = preset(j.value("preset", std::string("desk")), scale);

        if (j.contains("network")) {
            const json& n = j["network"];
            detail::reject_unknown(n, "network",
                                   {"scale", "cwtb_count", "channels", "kernel", "ca_reduction", "rb_per_wt_block",
                                    "wrb_count", "wrb_width", "mode", "rgb_means", "seed", "sr_only", "disable_dwt",
                                    "disable_wr", "wr_normal_init", "wr_aux", "attention_block_rows", "value_resample"});
            NetworkConfig& nc = c.network;
            read(n, "cwtb_count", nc.cwtb_count);
            read(n, "channels", nc.channels);
            nc.block.channels = nc.channels;
            read(n, "kernel", nc.block.kernel);
            read(n, "ca_reduction", nc.block.ca_reduction);
            read(n, "rb_per_wt_block", nc.block.rb_per_wt_block);
            read(n, "wrb_count", nc.block.wrb_count);
            read(n, "wrb_width", nc.block.wrb_width);
            if (n.contains("mode")) nc.mode = parse_mode(n["mode"].get<std::string>());
            read(n, "rgb_means", nc.rgb_means);
            read(n, "seed", nc.seed);
            read(n, "sr_only", nc.ablation.sr_only);
            read(n, "disable_dwt", nc.ablation.disable_dwt);
            read(n, "disable_wr", nc.ablation.disable_wr);
            read(n, "wr_normal_init", nc.wr_normal_init);
            read(n, "wr_aux", nc.wr_aux);
            read(n, "attention_block_rows", nc.attention.block_rows);
            read(n, "value_resample", nc.attention.value_resample);
        }
        if (j.contains("loss")) {
            const json& l = j["loss"];
            detail::reject_unknown(l, "loss",
                                   {"kind", "strategy", "lambda_sr", "lambda_wt", "lambda_ssim_sr", "lambda_ssim_wt",
                                    "lambda_wr_aux"});
            if (l.contains("kind")) c.loss = parse_loss_kind(l["kind"].get<std::string>());
            if (l.contains("strategy")) c.strategy = parse_strategy(l["strategy"].get<std::string>());
            read(l, "lambda_sr", c.weights.sr);
            read(l, "lambda_wt", c.weights.wt);
            read(l, "lambda_ssim_sr", c.weights.ssim_sr);
            read(l, "lambda_ssim_wt", c.weights.ssim_wt);
            read(l, "lambda_wr_aux", c.weights.wr_aux);
        }
        if (j.contains("optimizer")) {
            const json& o = j["optimizer"];
            detail::reject_unknown(o, "optimizer", {"lr", "beta1", "beta2", "eps"});
            read(o, "lr", c.adam.lr);
            read(o, "beta1", c.adam.beta1);
            read(o, "beta2", c.adam.beta2);
            read(o, "eps", c.adam.eps);
        }
        if (j.contains("data")) {
            const json& d = j["data"];
            detail::reject_unknown(d, "data", {"source", "seed", "count", "dir", "split", "cell_density", "bicubic_levels"});
            read(d, "source", c.data.source);
            read(d, "seed", c.data.seed);
            read(d, "count", c.data.count);
            read(d, "dir", c.data.dir);
            read(d, "split", c.data.split);
            read(d, "cell_density", c.data.cell_density);
            read(d, "bicubic_levels", c.data.bicubic_levels);
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            detail::reject_unknown(t, "train",
                                   {"patch", "batch", "steps", "checkpoint_every", "log_every", "eval_every", "augment",
                                    "seed", "threads"});
            read(t, "patch", c.patch);
            read(t, "batch", c.batch);
            read(t, "steps", c.steps);
            read(t, "checkpoint_every", c.checkpoint_every);
            read(t, "log_every", c.log_every);
            read(t, "eval_every", c.eval_every);
            read(t, "augment", c.augment);
            read(t, "seed", c.seed);
            read(t, "threads", c.threads);
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

inline RunConfig run_config_from_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

} // namespace cwtnet
