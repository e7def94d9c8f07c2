#pragma once

// Finite-difference checks for every differentiable block plus a small
// end-to-end network. Each case registers its input as a parameter so input
// gradients are covered as well.

#include <functional>
#include <string>
#include <vector>

#include "cwtnet/attention.hpp"
#include "cwtnet/blocks.hpp"
#include "cwtnet/gradcheck.hpp"
#include "cwtnet/network.hpp"
#include "cwtnet/objective.hpp"
#include "cwtnet/wavelet.hpp"

namespace cwtnet {

struct GradCheckCase {
    std::string name;
    GradCheckReport report;
};

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Scalar probe sum(w * y) with fixed random w, so every output element matters.
inline Var<double> probe(const Var<double>& y, std::uint64_t seed) {
    Rng rng(seed, 0x9E0B);
    Tensor<double> w = random_tensor(rng, y.shape());
    return sum(broadcast_mul(y, y.tape().constant(std::move(w))));
}

} // namespace detail

inline GradCheckOptions default_suite_options() {
    GradCheckOptions o;
    o.step = 1e-5;
    o.tolerance = 1e-3;
    o.samples = 200;
    o.min_pass_fraction = 0.99;
    return o;
}

// Network used by the end-to-end case: one CWTB, eight channels, 12 x 12 LR.
inline NetworkConfig micro_network(NetworkConfig base = NetworkConfig::make(2, 1, 8)) {
    NetworkConfig cfg = NetworkConfig::make(base.scale, 1, 8);
    cfg.mode = base.mode;
    cfg.ablation = base.ablation;
    cfg.wr_aux = base.wr_aux;
    cfg.wr_normal_init = false;
    cfg.rgb_means = base.rgb_means;
    cfg.seed = base.seed;
    return cfg;
}

inline std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckOptions& opt = default_suite_options(),
                                                      const NetworkConfig& net_base = NetworkConfig::make(2, 1, 8)) {
    std::vector<GradCheckCase> out;
    BlockConfig bc;
    bc.channels = 8;
    bc.ca_reduction = 4;
    bc.wrb_count = 2;
    const Shape feat{2, 8, 6, 6};

    auto run = [&](const std::string& name, std::uint64_t seed,
                   const std::function<void(Parameters<double>&, Rng&)>& setup,
                   const std::function<Var<double>(Tape<double>&, Parameters<double>&)>& loss) {
        Parameters<double> params;
        Rng rng(seed, 0xC4EC);
        setup(params, rng);
        GradCheckOptions o = opt;
        o.seed = seed;
        out.push_back({name, check_gradients(params, loss, o)});
    };
    auto input = [](Tape<double>& t, Parameters<double>& p) { return t.parameter(p, p.index_of("input")); };

    run("residual_block", 1,
        [&](Parameters<double>& p, Rng& rng) {
            add_residual_block(p, rng, "rb", bc);
            p.add("input", detail::random_tensor(rng, feat));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            return detail::probe(residual_block(input(t, p), ParamScope<double>(t, p, "rb")), 11);
        });

    run("channel_attention", 2,
        [&](Parameters<double>& p, Rng& rng) {
            add_channel_attention(p, rng, "ca", bc.channels, bc.ca_reduction);
            p.add("input", detail::random_tensor(rng, feat));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            return detail::probe(channel_attention(input(t, p), ParamScope<double>(t, p, "ca"), bc.ca_reduction), 12);
        });

    run("wrb", 3,
        [&](Parameters<double>& p, Rng& rng) {
            add_wrb(p, rng, "wrb", bc);
            p.add("input", detail::random_tensor(rng, feat));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            return detail::probe(wrb(input(t, p), ParamScope<double>(t, p, "wrb"), bc.ca_reduction), 13);
        });

    run("wr_module", 4,
        [&](Parameters<double>& p, Rng& rng) {
            add_wr_module(p, rng, "wr", bc);
            p.add("input", detail::random_tensor(rng, feat));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            return detail::probe(wr_module(input(t, p), ParamScope<double>(t, p, "wr"), bc.wrb_count, bc.ca_reduction),
                                 14);
        });

    run("upsampler", 5,
        [&](Parameters<double>& p, Rng& rng) {
            add_upsampler(p, rng, "up", bc.channels, 4, 3);
            p.add("input", detail::random_tensor(rng, Shape{1, 8, 4, 4}));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            return detail::probe(upsampler(input(t, p), 4, ParamScope<double>(t, p, "up")), 15);
        });

    run("haar_hh", 6,
        [&](Parameters<double>& p, Rng& rng) { p.add("input", detail::random_tensor(rng, Shape{2, 3, 8, 8})); },
        [&](Tape<double>& t, Parameters<double>& p) { return detail::probe(dwt_hh(input(t, p)), 16); });

    run("attention_fuse", 7,
        [&](Parameters<double>& p, Rng& rng) {
            add_conv(p, rng, "tf", 2 * bc.channels, bc.channels, 3);
            p.add("input", detail::random_tensor(rng, feat));
            p.add("key", detail::random_tensor(rng, feat));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            Var<double> k = t.parameter(p, p.index_of("key"));
            return detail::probe(texture_transformer(input(t, p), k, ParamScope<double>(t, p, "tf")), 17);
        });

    run("ssim_loss", 8,
        [&](Parameters<double>& p, Rng& rng) {
            p.add("input", detail::random_tensor(rng, Shape{1, 3, 14, 14}, 0.1, 0.9));
        },
        [&](Tape<double>& t, Parameters<double>& p) {
            Rng rng(18, 0x55);
            Var<double> b = t.constant(detail::random_tensor(rng, Shape{1, 3, 14, 14}, 0.1, 0.9));
            return ssim_loss(input(t, p), b);
        });

    const NetworkConfig net = micro_network(net_base);
    const std::size_t lr = 12;
    const std::size_t s = static_cast<std::size_t>(net.scale);
    Rng data_rng(19, 0xDA7A);
    const Tensor<double> x = detail::random_tensor(data_rng, Shape{1, 3, lr, lr}, 0.0, 1.0);
    const Tensor<double> gt = detail::random_tensor(data_rng, Shape{1, 3, lr * s, lr * s}, 0.0, 1.0);
    const Tensor<double> gtp = detail::random_tensor(data_rng, Shape{1, 3, 2 * lr, 2 * lr}, 0.0, 1.0);
    {
        Parameters<double> params = build_parameters<double>(net);
        GradCheckOptions o = opt;
        o.seed = 9;
        const Mode mode = net.mode == Mode::WrTest ? Mode::CrossScale : net.mode;
        auto loss = [&](Tape<double>& t, Parameters<double>& p) {
            std::optional<Var<double>> wt;
            if (mode == Mode::CrossScale) wt = t.constant(gtp);
            // The auxiliary WR term stops gradients at its target, so it is not
            // the derivative of its own value and stays out of this check.
            ForwardResult<double> r = forward(net, p, t.constant(x), wt, mode, false);
            return composite_loss(r.i_hr, t.constant(gt), r.i_wt, t.constant(dwt_hh(gtp)), LossWeights{}).total;
        };
        out.push_back({"micro_network", check_gradients(params, loss, o)});
    }
    return out;
}

} // namespace cwtnet
