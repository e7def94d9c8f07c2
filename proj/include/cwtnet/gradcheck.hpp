#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/rng.hpp"

namespace cwtnet {

struct GradCheckOptions {
    double step = 1e-3;             // central-difference step
    double tolerance = 1e-3;        // relative error threshold per coordinate
    double min_pass_fraction = 0.99;
    double abs_floor = 1e-6;        // denominator floor for near-zero gradients
    std::size_t samples = 200;
    std::uint64_t seed = 1;
};

struct GradCheckFailure {
    std::string name;
    std::size_t index;
    double analytic;
    double numeric;
    double rel_error;
};

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t passed = 0;
    double max_rel = 0.0;
    double mean_rel = 0.0;
    double min_pass_fraction = 0.99;
    std::vector<GradCheckFailure> failures;

    [[nodiscard]] double pass_fraction() const {
        return checked == 0 ? 0.0 : static_cast<double>(passed) / static_cast<double>(checked);
    }
    [[nodiscard]] bool ok() const { return checked > 0 && pass_fraction() >= min_pass_fraction; }
};

// Compares reverse-mode gradients with central finite differences on a random
// sample of coordinates. `loss_fn(tape, params)` must rebuild the scalar loss
// from scratch; inputs that need checking belong in `params` too.
template <typename LossFn>
GradCheckReport check_gradients(Parameters<double>& params, LossFn&& loss_fn, const GradCheckOptions& opt = {}) {
    params.zero_grad();
    {
        Tape<double> tape;
        Var<double> loss = loss_fn(tape, params);
        tape.backward(loss);
    }
    auto eval = [&]() {
        Tape<double> tape(false);
        return loss_fn(tape, params).value()[0];
    };

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t e = 0; e < params.size(); ++e)
        for (std::size_t i = 0; i < params[e].value.size(); ++i) coords.emplace_back(e, i);
    Rng rng(opt.seed, 0x6C4EC);
    rng.shuffle(coords);
    if (coords.size() > opt.samples) coords.resize(opt.samples);

    GradCheckReport report;
    report.min_pass_fraction = opt.min_pass_fraction;
    double rel_sum = 0.0;
    for (const auto& [e, i] : coords) {
        double& v = params[e].value[i];
        const double saved = v;
        v = saved + opt.step;
        const double plus = eval();
        v = saved - opt.step;
        const double minus = eval();
        v = saved;
        const double numeric = (plus - minus) / (2.0 * opt.step);
        const double analytic = params[e].grad[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.checked;
        rel_sum += rel;
        report.max_rel = std::max(report.max_rel, rel);
        if (rel < opt.tolerance) {
            ++report.passed;
        } else {
            report.failures.push_back({params[e].name, i, analytic, numeric, rel});
        }
    }
    report.mean_rel = report.checked ? rel_sum / static_cast<double>(report.checked) : 0.0;
    return report;
}

} // namespace cwtnet
