#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cwtnet/checkpoint.hpp"
#include "cwtnet/config.hpp"
#include "cwtnet/data.hpp"
#include "cwtnet/dataset_io.hpp"
#include "cwtnet/image_io.hpp"
#include "cwtnet/network.hpp"
#include "cwtnet/objective.hpp"
#include "cwtnet/optim.hpp"
#include "cwtnet/parallel.hpp"
#include "cwtnet/wavelet.hpp"

namespace cwtnet {

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

// Training triples described by cfg.data. Inconsistencies with the network
// config surface here, before any step runs.
inline std::vector<PatchTriple> load_training_data(const RunConfig& cfg) {
    if (cfg.data.source == "synthetic") {
        PyramidStyle style;
        style.cell_density = cfg.data.cell_density;
        style.bicubic_levels = cfg.data.bicubic_levels;
        style.target_means = cfg.network.rgb_means;
        return synthetic_triples(cfg.data.seed, cfg.data.count, cfg.network.scale, cfg.patch, style);
    }
    const bool need_gtp = cfg.network.mode == Mode::CrossScale;
    PatchDataset ds = load_patch_dir(cfg.data.dir, cfg.data.split, need_gtp);
    if (ds.scale != cfg.network.scale) {
        throw ConfigError("dataset " + cfg.data.dir + " has scale " + std::to_string(ds.scale) + " but the network uses " +
                          std::to_string(cfg.network.scale));
    }
    if (ds.items.front().i_lr.shape().h != cfg.patch) {
        throw ConfigError("dataset " + cfg.data.dir + " has LR patches of " +
                          std::to_string(ds.items.front().i_lr.shape().h) + " px but the config says " +
                          std::to_string(cfg.patch));
    }
    return std::move(ds.items);
}

struct Batch {
    Tensor<float> lr;
    Tensor<float> gt;
    std::optional<Tensor<float>> gtp;
};

// Item order is a pure function of (seed, epoch, position); augmentation of
// (seed, global sample index).
inline std::size_t sample_index(std::uint64_t seed, std::uint64_t global, std::size_t count) {
    const std::uint64_t epoch = global / count;
    const std::size_t pos = static_cast<std::size_t>(global % count);
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng = Rng(seed, 0xE90C).fork(epoch);
    rng.shuffle(order);
    return order[pos];
}

inline Batch make_batch(const std::vector<PatchTriple>& data, const RunConfig& cfg, std::uint64_t step) {
    std::vector<Tensor<float>> lr, gt, gtp;
    bool all_gtp = true;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::uint64_t global = step * cfg.batch + b;
        const PatchTriple& src = data[sample_index(cfg.seed, global, data.size())];
        PatchTriple t = src;
        if (cfg.augment) {
            Rng rng = Rng(cfg.seed, 0xA06).fork(global);
            t = augment(src, rng);
        }
        lr.push_back(std::move(t.i_lr));
        gt.push_back(std::move(t.i_gt));
        all_gtp = all_gtp && t.has_gt_prime;
        if (t.has_gt_prime) gtp.push_back(std::move(t.i_gt_prime));
    }
    Batch batch{stack_batch(lr), stack_batch(gt), std::nullopt};
    if (all_gtp) batch.gtp = stack_batch(gtp);
    return batch;
}

// ---------------------------------------------------------------------------
// Loss evaluation shared by training and reporting
// ---------------------------------------------------------------------------

struct StepRecord {
    std::uint64_t step = 0; // number of completed updates after this step
    double loss = 0;
    double loss_sr = 0;
    double loss_wt = 0;
    double loss_aux = 0;
    double psnr_db = 0;
    double ssim = 0;
};

template <typename T>
struct BatchLoss {
    LossTerms<T> terms;
    ForwardResult<T> out;
};

// Builds the full objective for one batch on `tape`.
template <typename T>
BatchLoss<T> batch_loss(Tape<T>& tape, const RunConfig& cfg, Parameters<T>& params, const Batch& batch, Mode mode) {
    if (!batch.gtp) throw DataError("training batch lacks I_GT' images (gtp.png)");
    Var<T> lr = tape.constant(batch.lr.template cast<T>());
    Var<T> gt = tape.constant(batch.gt.template cast<T>());
    const Tensor<T> gtp = batch.gtp->template cast<T>();
    std::optional<Var<T>> wt_input;
    if (mode == Mode::CrossScale) wt_input = tape.constant(gtp);
    const bool aux = cfg.network.wr_aux && mode == Mode::CrossScale && cfg.network.has_wr() && cfg.weights.wr_aux > 0;
    ForwardResult<T> out = forward(cfg.network, params, lr, wt_input, mode, aux);
    Var<T> target = tape.constant(dwt_hh(gtp));
    std::optional<std::pair<Var<T>, Var<T>>> aux_pair;
    if (out.wr_features && out.wt_features) aux_pair.emplace(*out.wr_features, *out.wt_features);
    LossTerms<T> terms = composite_loss(out.i_hr, gt, out.i_wt, target, cfg.effective_weights(), cfg.loss, aux_pair);
    return BatchLoss<T>{std::move(terms), std::move(out)};
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

class Trainer {
public:
    Trainer(RunConfig cfg, std::vector<PatchTriple> data)
        : cfg_(std::move(cfg)), data_(std::move(data)), params_(build_parameters<float>(cfg_.network)), adam_(params_) {
        init();
    }

    // Continue from a checkpoint; the checkpoint's config governs the run.
    Trainer(Checkpoint ck, std::vector<PatchTriple> data)
        : cfg_(std::move(ck.config)), data_(std::move(data)), params_(std::move(ck.params)), adam_(std::move(ck.adam)),
          step_(ck.step) {
        init();
    }

    StepRecord step() {
        const Batch batch = make_batch(data_, cfg_, step_);
        params_.zero_grad();
        Tape<float> tape;
        BatchLoss<float> bl = batch_loss(tape, cfg_, params_, batch, cfg_.network.mode);
        StepRecord rec;
        rec.loss = bl.terms.total_value();
        rec.loss_sr = bl.terms.sr_value();
        rec.loss_wt = bl.terms.wt_value();
        rec.loss_aux = bl.terms.aux_value();
        if (!std::isfinite(rec.loss)) {
            throw NumericError("non-finite loss at step " + std::to_string(step_ + 1));
        }
        const Tensor<float> sr = clamp01(bl.out.i_hr.value());
        rec.psnr_db = psnr(sr, batch.gt);
        rec.ssim = ssim_value(sr, batch.gt);
        tape.backward(bl.terms.total);
        adam_step(params_, adam_, cfg_.adam);
        ++step_;
        rec.step = step_;
        return rec;
    }

    [[nodiscard]] std::uint64_t current_step() const noexcept { return step_; }
    [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] RunConfig& config() noexcept { return cfg_; }
    [[nodiscard]] Parameters<float>& params() noexcept { return params_; }
    [[nodiscard]] const std::vector<PatchTriple>& data() const noexcept { return data_; }
    [[nodiscard]] Checkpoint checkpoint() const { return Checkpoint(cfg_, step_, params_, adam_); }

    static Tensor<float> clamp01(Tensor<float> x) {
        for (auto& v : x.data()) v = std::clamp(v, 0.0f, 1.0f);
        return x;
    }

private:
    void init() {
        cfg_.validate();
        if (data_.empty()) throw DataError("no training data");
        for (const auto& t : data_) {
            check_triple(t);
            if (t.scale != cfg_.network.scale || t.i_lr.shape().h != cfg_.patch || t.i_lr.shape().w != cfg_.patch) {
                throw ConfigError("training triple " + t.i_lr.shape().str() + " at x" + std::to_string(t.scale) +
                                  " does not match patch " + std::to_string(cfg_.patch) + " at x" +
                                  std::to_string(cfg_.network.scale));
            }
            if (!t.has_gt_prime) throw DataError("training requires gtp.png for every triple");
        }
        set_num_threads(static_cast<unsigned>(std::max(0, cfg_.threads)));
    }

    RunConfig cfg_;
    std::vector<PatchTriple> data_;
    Parameters<float> params_;
    AdamState<float> adam_;
    std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation and inference
// ---------------------------------------------------------------------------

struct ImageMetrics {
    std::string id;
    double psnr_db = 0;
    double ssim = 0;
    double bicubic_psnr_db = 0;
    double bicubic_ssim = 0;
};

struct EvalReport {
    Mode mode = Mode::WrTest;
    std::vector<ImageMetrics> images;
    double psnr_db = 0;         // means over images
    double ssim = 0;
    double bicubic_psnr_db = 0;
    double bicubic_ssim = 0;
};

inline Tensor<float> bicubic_upscale(const Tensor<float>& lr, int scale) {
    return Trainer::clamp01(resize_bicubic(lr, Ratio{scale, 1}));
}

// SR image for one LR input (n = 1), clamped to [0, 1].
inline Tensor<float> super_resolve(const NetworkConfig& net, Parameters<float>& params, const Tensor<float>& lr,
                                   const std::optional<Tensor<float>>& wt_input, Mode mode) {
    Tape<float> tape(false);
    std::optional<Var<float>> wt;
    if (mode == Mode::CrossScale) {
        if (!wt_input) throw UsageError("cross-scale inference needs a finer-level image");
        wt = tape.constant(*wt_input);
    }
    return Trainer::clamp01(forward(net, params, tape.constant(lr), wt, mode).i_hr.value());
}

// Mean of per-image PSNR; infinite PSNR (identical images) keeps the mean infinite.
inline EvalReport evaluate(const NetworkConfig& net, Parameters<float>& params, const std::vector<PatchTriple>& items,
                           const std::vector<std::string>& ids, Mode mode,
                           const std::optional<std::filesystem::path>& grid_dir = std::nullopt) {
    if (items.empty()) throw DataError("nothing to evaluate");
    EvalReport rep;
    rep.mode = mode;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const PatchTriple& t = items[i];
        if (mode == Mode::CrossScale && !t.has_gt_prime) {
            throw DataError("cross-scale evaluation needs gtp.png for item " + (i < ids.size() ? ids[i] : std::to_string(i)));
        }
        std::optional<Tensor<float>> wt;
        if (mode == Mode::CrossScale) wt = t.i_gt_prime;
        const Tensor<float> sr = super_resolve(net, params, t.i_lr, wt, mode);
        const Tensor<float> bic = bicubic_upscale(t.i_lr, t.scale);
        ImageMetrics m;
        m.id = i < ids.size() ? ids[i] : triple_id(i);
        m.psnr_db = psnr(sr, t.i_gt);
        m.ssim = ssim_value(sr, t.i_gt);
        m.bicubic_psnr_db = psnr(bic, t.i_gt);
        m.bicubic_ssim = ssim_value(bic, t.i_gt);
        rep.images.push_back(m);
        if (grid_dir) {
            const Tensor<float> lr_big = resize_nearest(t.i_lr, t.scale);
            write_png(*grid_dir / (m.id + ".png"), hconcat<float>({lr_big, bic, sr, t.i_gt}));
        }
    }
    const double n = static_cast<double>(rep.images.size());
    for (const auto& m : rep.images) {
        rep.psnr_db += m.psnr_db / n;
        rep.ssim += m.ssim / n;
        rep.bicubic_psnr_db += m.bicubic_psnr_db / n;
        rep.bicubic_ssim += m.bicubic_ssim / n;
    }
    return rep;
}

// Total training objective over a whole triple set with fixed parameters,
// no augmentation; comparable across modes with identical data.
inline double dataset_loss(const RunConfig& cfg, Parameters<float>& params, const std::vector<PatchTriple>& items,
                           Mode mode) {
    double acc = 0;
    for (const auto& t : items) {
        Tape<float> tape(false);
        Batch b{t.i_lr, t.i_gt, std::nullopt};
        if (t.has_gt_prime) b.gtp = t.i_gt_prime;
        acc += batch_loss(tape, cfg, params, b, mode).terms.total_value();
    }
    return acc / static_cast<double>(items.size());
}

inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

inline void write_eval_csv(const std::filesystem::path& path, const EvalReport& rep) {
    std::ofstream out(path);
    out << "id,psnr_db,ssim,bicubic_psnr_db,bicubic_ssim\n";
    for (const auto& m : rep.images) {
        out << m.id << ',' << format_metric(m.psnr_db) << ',' << format_metric(m.ssim) << ','
            << format_metric(m.bicubic_psnr_db) << ',' << format_metric(m.bicubic_ssim) << '\n';
    }
    out << "mean," << format_metric(rep.psnr_db) << ',' << format_metric(rep.ssim) << ','
        << format_metric(rep.bicubic_psnr_db) << ',' << format_metric(rep.bicubic_ssim) << '\n';
    if (!out) throw DataError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

// Exclusive ownership of an output directory for the lifetime of the object.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
        std::filesystem::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw DataError("output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                            " if it is stale)");
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;
    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

inline std::string checkpoint_name(std::uint64_t step) {
    std::string s = std::to_string(step);
    return "ckpt_" + std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s + ".bin";
}

inline constexpr const char* kMetricsHeader = "step,L,L_SR,L_WT,psnr_db,ssim";

inline std::string metrics_row(const StepRecord& r) {
    return std::to_string(r.step) + "," + format_metric(r.loss) + "," + format_metric(r.loss_sr) + "," +
           format_metric(r.loss_wt) + "," + format_metric(r.psnr_db) + "," + format_metric(r.ssim);
}

struct TrainOutcome {
    std::uint64_t final_step = 0;
    StepRecord last{};
    std::filesystem::path last_checkpoint;
};

// Trains until trainer.config().steps, logging to <out>/metrics.csv and
// writing <out>/ckpt_<step>.bin at the cadence plus <out>/last.bin at the end.
inline TrainOutcome run_training(Trainer& trainer, const std::filesystem::path& out, std::ostream* log = nullptr) {
    DirLock lock(out);
    const RunConfig& cfg = trainer.config();
    const std::filesystem::path csv = out / "metrics.csv";
    const bool fresh = trainer.current_step() == 0 || !std::filesystem::exists(csv);
    std::ofstream metrics(csv, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw DataError("cannot write " + csv.string());
    if (fresh) metrics << kMetricsHeader << '\n';
    {
        std::ofstream c(out / "config.json");
        c << to_json(cfg).dump(2) << '\n';
    }
    TrainOutcome res;
    while (trainer.current_step() < cfg.steps) {
        const StepRecord r = trainer.step();
        res.last = r;
        const bool last = r.step == cfg.steps;
        if (last || (cfg.log_every > 0 && r.step % cfg.log_every == 0)) {
            metrics << metrics_row(r) << '\n';
            metrics.flush();
            if (log) *log << metrics_row(r) << '\n';
        }
        if (last || (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0)) {
            res.last_checkpoint = out / checkpoint_name(r.step);
            save_checkpoint(res.last_checkpoint, trainer.checkpoint());
        }
    }
    if (!res.last_checkpoint.empty()) {
        std::filesystem::copy_file(res.last_checkpoint, out / "last.bin",
                                   std::filesystem::copy_options::overwrite_existing);
    }
    res.final_step = trainer.current_step();
    return res;
}

} // namespace cwtnet
