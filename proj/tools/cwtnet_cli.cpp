#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "cwtnet/cwtnet.hpp"
#include "cwtnet/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using namespace cwtnet;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot open config " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct SynthArgs {
    std::uint64_t seed = 7;
    std::size_t count = 12;
    int scale = 2;
    std::size_t patch = 32;
    std::string out;
    bool bicubic_levels = false;
    double density = 1.0;
};

int cmd_synth(const SynthArgs& a) {
    if (a.count == 0) throw UsageError("synth: --count must be at least 1");
    PyramidStyle style;
    style.bicubic_levels = a.bicubic_levels;
    style.cell_density = a.density;
    const auto triples = synthetic_triples(a.seed, a.count, a.scale, a.patch, style);
    const Manifest m = save_dataset(a.out, triples, a.seed);
    std::cout << "wrote " << a.count << " triples to " << a.out << " (" << m.train.size() << " train / "
              << m.test.size() << " test, x" << a.scale << ", lr " << a.patch << "px)\n";
    return kOk;
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::string resume;
    std::string loss;
    std::string opt;
    std::string preset = "desk";
    std::uint64_t steps = 0;
    bool emit_default = false;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    if (a.emit_default) {
        std::cout << to_json(preset(a.preset)).dump(2) << '\n';
        return kOk;
    }
    if (a.out.empty()) throw UsageError("train: --out is required");

    std::optional<Trainer> trainer;
    if (!a.resume.empty()) {
        Checkpoint ck = load_checkpoint(a.resume);
        if (!a.config.empty()) {
            RunConfig given = run_config_from_string(read_text(a.config));
            RunConfig stored = ck.config;
            given.steps = stored.steps = 0;
            if (to_json(given) != to_json(stored)) {
                throw UsageError("train: --config differs from the configuration stored in " + a.resume);
            }
        }
        if (!a.loss.empty() || !a.opt.empty()) {
            throw UsageError("train: --loss/--opt cannot change a resumed run");
        }
        if (a.steps) ck.config.steps = a.steps;
        auto data = load_training_data(ck.config);
        trainer.emplace(std::move(ck), std::move(data));
        std::cout << "resuming at step " << trainer->current_step() << '\n';
    } else {
        RunConfig cfg = a.config.empty() ? preset(a.preset) : run_config_from_string(read_text(a.config));
        if (!a.loss.empty()) cfg.loss = parse_loss_kind(a.loss);
        if (!a.opt.empty()) cfg.strategy = parse_strategy(a.opt);
        if (a.steps) cfg.steps = a.steps;
        cfg.validate();
        auto data = load_training_data(cfg);
        trainer.emplace(std::move(cfg), std::move(data));
    }
    std::cout << "parameters: " << trainer->params().count() << ", steps: " << trainer->config().steps << '\n';
    std::cout << kMetricsHeader << '\n';
    const TrainOutcome res = run_training(*trainer, a.out, a.quiet ? nullptr : &std::cout);
    std::cout << "final step " << res.final_step << ", checkpoint " << res.last_checkpoint.string() << '\n';
    return kOk;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string mode = "wr-test";
    std::string split = "test";
    std::string grids;
    std::string report;
};

int cmd_eval(const EvalArgs& a) {
    const Mode mode = parse_mode(a.mode);
    Checkpoint ck = load_checkpoint(a.ckpt);
    PatchDataset ds = load_patch_dir(a.data, a.split, mode == Mode::CrossScale);
    if (ds.scale != ck.config.network.scale) {
        throw DataError("eval: dataset scale x" + std::to_string(ds.scale) + " but checkpoint scale x" +
                        std::to_string(ck.config.network.scale));
    }
    std::optional<fs::path> grids;
    if (!a.grids.empty()) grids = fs::path(a.grids);
    const EvalReport rep = evaluate(ck.config.network, ck.params, ds.items, ds.ids, mode, grids);
    std::cout << "mode " << mode_name(mode) << ", checkpoint step " << ck.step << '\n';
    std::cout << std::left << std::setw(10) << "id" << std::right << std::setw(12) << "psnr_db" << std::setw(10) << "ssim"
              << std::setw(14) << "bicubic_psnr" << std::setw(14) << "bicubic_ssim" << '\n';
    auto line = [](const std::string& id, double p, double s, double bp, double bs) {
        std::cout << std::left << std::setw(10) << id << std::right << std::setw(12) << format_metric(p) << std::setw(10)
                  << std::setprecision(4) << std::fixed << s << std::setw(14) << format_metric(bp) << std::setw(14)
                  << bs << '\n';
    };
    for (const auto& m : rep.images) line(m.id, m.psnr_db, m.ssim, m.bicubic_psnr_db, m.bicubic_ssim);
    line("mean", rep.psnr_db, rep.ssim, rep.bicubic_psnr_db, rep.bicubic_ssim);
    if (!a.report.empty()) write_eval_csv(a.report, rep);
    return kOk;
}

struct InferArgs {
    std::string ckpt;
    std::string in;
    std::string out;
    std::string mode = "wr-test";
    std::string ref;
    bool crop_odd = false;
};

Tensor<float> even_image(Tensor<float> img, const std::string& path, bool crop_odd) {
    const Shape s = img.shape();
    if (s.h % 2 == 0 && s.w % 2 == 0) return img;
    if (!crop_odd) {
        throw DataError("infer: " + path + " is " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                        "; odd sizes need --crop-odd");
    }
    std::cerr << "warning: cropping " << path << " from " << s.h << "x" << s.w << " to " << s.h / 2 * 2 << "x"
              << s.w / 2 * 2 << '\n';
    return crop(img, 0, 0, s.h / 2 * 2, s.w / 2 * 2);
}

int cmd_infer(const InferArgs& a) {
    const Mode mode = parse_mode(a.mode);
    Checkpoint ck = load_checkpoint(a.ckpt);
    const Tensor<float> lr = even_image(read_png(a.in), a.in, a.crop_odd);
    std::optional<Tensor<float>> ref;
    if (mode == Mode::CrossScale) {
        if (a.ref.empty()) throw UsageError("infer: cross-scale mode needs --ref (finer-level image, twice the input size)");
        ref = read_png(a.ref);
    } else if (!a.ref.empty()) {
        throw UsageError(std::string("infer: --ref is only used in cross-scale mode, not ") + mode_name(mode));
    }
    const Tensor<float> sr = super_resolve(ck.config.network, ck.params, lr, ref, mode);
    write_png(a.out, sr);
    std::cout << a.in << " (" << lr.shape().h << "x" << lr.shape().w << ") -> " << a.out << " (" << sr.shape().h << "x"
              << sr.shape().w << ")\n";
    return kOk;
}

struct GradArgs {
    std::string config;
    std::string fault;
    std::size_t samples = 200;
    double tolerance = 1e-3;
};

int cmd_gradcheck(const GradArgs& a) {
    NetworkConfig base = NetworkConfig::make(2, 1, 8);
    if (!a.config.empty()) base = run_config_from_string(read_text(a.config)).network;
    if (!a.fault.empty()) {
        if (a.fault != "haar") throw UsageError("gradcheck: unknown fault '" + a.fault + "' (expected haar)");
        haar_gradient_fault() = true;
    }
    GradCheckOptions opt = default_suite_options();
    opt.samples = a.samples;
    opt.tolerance = a.tolerance;
    const auto cases = run_gradcheck_suite(opt, base);
    haar_gradient_fault() = false;
    bool ok = true;
    std::cout << std::left << std::setw(20) << "block" << std::right << std::setw(9) << "checked" << std::setw(10)
              << "passed" << std::setw(14) << "worst_rel" << std::setw(14) << "mean_rel" << "  status\n";
    for (const auto& c : cases) {
        ok = ok && c.report.ok();
        std::cout << std::left << std::setw(20) << c.name << std::right << std::setw(9) << c.report.checked
                  << std::setw(9) << std::fixed << std::setprecision(1) << 100.0 * c.report.pass_fraction() << '%'
                  << std::setw(14) << std::scientific << std::setprecision(3) << c.report.max_rel << std::setw(14)
                  << c.report.mean_rel << "  " << (c.report.ok() ? "PASS" : "FAIL") << '\n';
        std::cout << std::defaultfloat;
    }
    std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << '\n';
    return ok ? kOk : kNumeric;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-scale wavelet transformer super-resolution"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic patch-triple dataset");
    synth->add_option("--seed", sa.seed, "Generator seed");
    synth->add_option("--count", sa.count, "Number of triples");
    synth->add_option("--scale", sa.scale, "Upsampling factor (2, 4 or 8)");
    synth->add_option("--patch", sa.patch, "LR patch size in pixels");
    synth->add_option("--out", sa.out, "Output dataset root")->required();
    synth->add_flag("--bicubic-levels", sa.bicubic_levels, "Derive coarser pyramid levels by bicubic halving");
    synth->add_option("--density", sa.density, "Relative cell density");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a network");
    train->add_option("--config", ta.config, "Run configuration (JSON)");
    train->add_option("--out", ta.out, "Output directory");
    train->add_option("--resume", ta.resume, "Checkpoint to continue from");
    train->add_option("--loss", ta.loss, "Loss strategy: ours | only-l1 | only-mse");
    train->add_option("--opt", ta.opt, "Branch weighting: ours | only-sr | only-wt | weight-exchange");
    train->add_option("--preset", ta.preset, "Preset used without --config: desk | full");
    train->add_option("--steps", ta.steps, "Override the number of steps");
    train->add_flag("--emit-default-config", ta.emit_default, "Print the full default configuration and exit");
    train->add_flag("--quiet", ta.quiet, "Do not echo metric rows");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    eval->add_option("--ckpt", ea.ckpt, "Checkpoint")->required();
    eval->add_option("--data", ea.data, "Dataset root")->required();
    eval->add_option("--mode", ea.mode, "cross-scale | wr-test | sisr");
    eval->add_option("--split", ea.split, "train | test");
    eval->add_option("--grids", ea.grids, "Directory for LR | bicubic | SR | GT comparison PNGs");
    eval->add_option("--report", ea.report, "Per-image CSV report");

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "Super-resolve one PNG");
    infer->add_option("--ckpt", ia.ckpt, "Checkpoint")->required();
    infer->add_option("--in", ia.in, "Input PNG")->required();
    infer->add_option("--out", ia.out, "Output PNG")->required();
    infer->add_option("--mode", ia.mode, "cross-scale | wr-test | sisr");
    infer->add_option("--ref", ia.ref, "Finer-level image for cross-scale mode");
    infer->add_flag("--crop-odd", ia.crop_odd, "Crop odd-sized inputs to even size instead of failing");

    GradArgs ga;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every block");
    grad->add_option("--config", ga.config, "Run configuration whose network flags are used");
    grad->add_option("--inject-fault", ga.fault, "Corrupt a gradient rule on purpose: haar");
    grad->add_option("--samples", ga.samples, "Coordinates per block");
    grad->add_option("--tolerance", ga.tolerance, "Relative error threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*synth) return cmd_synth(sa);
        if (*train) return cmd_train(ta);
        if (*eval) return cmd_eval(ea);
        if (*infer) return cmd_infer(ia);
        if (*grad) return cmd_gradcheck(ga);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kUsage;
}
