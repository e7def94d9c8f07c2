#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cwtnet/blocks.hpp"
#include "cwtnet/errors.hpp"
#include "cwtnet/resize.hpp"
#include "cwtnet/rng.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

using Image = Tensor<float>; // (1, 3, h, w), values in [0, 1]

struct Pyramid {
    std::vector<Image> levels;                // level k is 1 / 2^k of the base resolution
    std::vector<double> microns_per_pixel;    // doubles per level
};

struct PyramidStyle {
    std::size_t levels = 4;
    double cell_density = 1.0;    // relative to ~1 cell per 260 px^2 of base area
    bool bicubic_levels = false;  // derive levels by bicubic 1/2 instead of 2x2 area averaging
    RgbMeans target_means = kPathologyMeans;
};

// Relative sampling levels of a patch triple; larger means finer.
struct Levels {
    int gt = 1;
    int gt_prime = 1;
    int lr = 0;

    bool operator==(const Levels&) const = default;
    [[nodiscard]] bool ordered() const noexcept { return gt >= gt_prime && gt_prime >= lr; }
};

struct PatchTriple {
    Image i_gt;        // (1, 3, p*s, p*s)
    Image i_gt_prime;  // (1, 3, 2p, 2p), same field of view and centre as i_gt
    Image i_lr;        // (1, 3, p, p) = bicubic(i_gt, 1/s)
    int scale = 2;
    Levels levels{};
    std::array<std::size_t, 2> center{}; // (row, col) at base resolution
    bool has_gt_prime = true;
};

// ---------------------------------------------------------------------------
// Image helpers
// ---------------------------------------------------------------------------

// 2x2 area average of every plane.
template <typename T>
Tensor<T> area_downsample(const Tensor<T>& x) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("area_downsample: odd dims " + s.str());
    Tensor<T> out(Shape{s.n, s.c, s.h / 2, s.w / 2});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < s.h / 2; ++i)
                for (std::size_t j = 0; j < s.w / 2; ++j) {
                    const double sum = static_cast<double>(x(n, c, 2 * i, 2 * j)) + x(n, c, 2 * i, 2 * j + 1) +
                                       x(n, c, 2 * i + 1, 2 * j) + x(n, c, 2 * i + 1, 2 * j + 1);
                    out(n, c, i, j) = static_cast<T>(sum / 4.0);
                }
    return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    const Shape s = x.shape();
    if (top + h > s.h || left + w > s.w) {
        throw ShapeError("crop: window (" + std::to_string(top) + ", " + std::to_string(left) + ", " +
                         std::to_string(h) + ", " + std::to_string(w) + ") outside " + s.str());
    }
    Tensor<T> out(Shape{s.n, s.c, h, w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) out(n, c, y, xx) = x(n, c, top + y, left + xx);
    return out;
}

// Counter-clockwise rotation by quarter_turns * 90 degrees.
template <typename T>
Tensor<T> rotate90(const Tensor<T>& x, int quarter_turns) {
    const int k = ((quarter_turns % 4) + 4) % 4;
    if (k == 0) return x;
    const Shape s = x.shape();
    const Shape os = (k % 2 == 1) ? Shape{s.n, s.c, s.w, s.h} : s;
    Tensor<T> out(os);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t xx = 0; xx < s.w; ++xx) {
                    const T v = x(n, c, y, xx);
                    switch (k) {
                    case 1: out(n, c, s.w - 1 - xx, y) = v; break;
                    case 2: out(n, c, s.h - 1 - y, s.w - 1 - xx) = v; break;
                    case 3: out(n, c, xx, s.h - 1 - y) = v; break;
                    }
                }
    return out;
}

template <typename T>
std::array<double, 3> channel_means(const Tensor<T>& x) {
    const Shape s = x.shape();
    if (s.c != 3) throw ShapeError("channel_means: expected 3 channels, got " + s.str());
    std::array<double, 3> m{};
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < 3; ++c) {
            const T* p = x.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) m[c] += p[i];
        }
    for (auto& v : m) v /= static_cast<double>(s.n * s.plane());
    return m;
}

// ---------------------------------------------------------------------------
// Synthetic tissue pyramid
// ---------------------------------------------------------------------------

// Cell-like texture at base resolution: a smooth stromal background with
// elliptical cells bounded by thin dark membranes, optional nuclei, then a
// per-channel shift toward the target means. Coarser levels are 2x2 area
// averages (or bicubic halvings when style.bicubic_levels).
inline Pyramid synth_pyramid(std::uint64_t seed, std::size_t base_size, const PyramidStyle& style = {}) {
    if (base_size == 0 || base_size % 8 != 0) {
        throw ConfigError("synth_pyramid: base size " + std::to_string(base_size) + " must be a positive multiple of 8");
    }
    if (style.levels == 0) throw ConfigError("synth_pyramid: at least one level required");
    if ((base_size >> (style.levels - 1)) == 0 || base_size % (std::size_t{1} << (style.levels - 1)) != 0) {
        throw ConfigError("synth_pyramid: base size " + std::to_string(base_size) + " too small for " +
                          std::to_string(style.levels) + " levels");
    }
    Rng rng(seed, 0x7155E);
    const std::size_t n = base_size;
    std::vector<double> plane[3];
    for (auto& p : plane) p.assign(n * n, 0.0);

    // Stroma: pink with low-frequency modulation.
    const std::array<double, 3> stroma{0.90, 0.58, 0.78};
    struct Wave {
        double fy, fx, phase, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i) {
        waves.push_back({rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0, 2 * std::numbers::pi),
                         rng.uniform(0.02, 0.06)});
    }
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            double mod = 0;
            for (const auto& w : waves) {
                mod += w.amp * std::cos(2 * std::numbers::pi * (w.fy * y + w.fx * x) / static_cast<double>(n) + w.phase);
            }
            for (int c = 0; c < 3; ++c) plane[c][y * n + x] = stroma[c] + mod;
        }

    const std::array<double, 3> cytoplasm{0.62, 0.32, 0.66};
    const std::array<double, 3> membrane{0.28, 0.08, 0.40};
    const std::array<double, 3> nucleus{0.36, 0.16, 0.52};
    const std::size_t cells = static_cast<std::size_t>(style.cell_density * static_cast<double>(n * n) / 260.0) + 1;
    for (std::size_t i = 0; i < cells; ++i) {
        const double cy = rng.uniform(0, static_cast<double>(n));
        const double cx = rng.uniform(0, static_cast<double>(n));
        const double ra = rng.uniform(3.0, 8.0);
        const double rb = ra * rng.uniform(0.55, 1.0);
        const double th = rng.uniform(0, std::numbers::pi);
        const double thickness = rng.uniform(0.8, 1.4);
        const bool has_nucleus = rng.uniform() < 0.6;
        const double nr = rng.uniform(0.3, 0.5);
        const double shade = rng.uniform(-0.06, 0.06);
        const double ct = std::cos(th), st = std::sin(th);
        const long y0 = std::max<long>(0, static_cast<long>(cy - ra - 2));
        const long y1 = std::min<long>(static_cast<long>(n) - 1, static_cast<long>(cy + ra + 2));
        const long x0 = std::max<long>(0, static_cast<long>(cx - ra - 2));
        const long x1 = std::min<long>(static_cast<long>(n) - 1, static_cast<long>(cx + ra + 2));
        for (long y = y0; y <= y1; ++y)
            for (long x = x0; x <= x1; ++x) {
                const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
                const double u = (dx * ct + dy * st) / ra, v = (-dx * st + dy * ct) / rb;
                const double r = std::sqrt(u * u + v * v);
                const double edge = std::abs(r - 1.0) * rb; // approx distance to the membrane in pixels
                const std::size_t idx = static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x);
                if (edge < thickness * 0.5) {
                    for (int c = 0; c < 3; ++c) plane[c][idx] = membrane[c];
                } else if (r < 1.0) {
                    const auto& col = (has_nucleus && r < nr) ? nucleus : cytoplasm;
                    for (int c = 0; c < 3; ++c) plane[c][idx] = col[c] + shade;
                }
            }
    }

    // Steer channel means toward the target.
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (double v : plane[c]) mean += v;
        mean /= static_cast<double>(n * n);
        const double shift = style.target_means[static_cast<std::size_t>(c)] - mean;
        for (double& v : plane[c]) v = std::clamp(v + shift, 0.0, 1.0);
    }

    Image base(Shape{1, 3, n, n});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n * n; ++i) base.plane(0, c)[i] = static_cast<float>(plane[c][i]);

    Pyramid pyr;
    pyr.levels.push_back(std::move(base));
    pyr.microns_per_pixel.push_back(0.243);
    for (std::size_t k = 1; k < style.levels; ++k) {
        const Image& prev = pyr.levels.back();
        Image next = style.bicubic_levels ? resize_bicubic(prev, Ratio{1, 2}) : area_downsample(prev);
        if (style.bicubic_levels) {
            for (auto& v : next.data()) v = std::clamp(v, 0.0f, 1.0f);
        }
        pyr.levels.push_back(std::move(next));
        pyr.microns_per_pixel.push_back(pyr.microns_per_pixel.back() * 2.0);
    }
    return pyr;
}

// ---------------------------------------------------------------------------
// Triples
// ---------------------------------------------------------------------------

// Relative levels for scale s: LR 0, I_GT' one level finer, I_GT log2(s).
inline Levels levels_for_scale(int scale) { return Levels{log2_scale(scale), 1, 0}; }

inline void check_triple(const PatchTriple& t) {
    if (!t.levels.ordered()) throw DataError("patch triple violates level ordering gt >= gt' >= lr");
    const Shape lr = t.i_lr.shape();
    const auto s = static_cast<std::size_t>(t.scale);
    if (t.i_gt.shape() != Shape{lr.n, 3, lr.h * s, lr.w * s}) {
        throw DataError("patch triple: gt " + t.i_gt.shape().str() + " is not lr " + lr.str() + " x" +
                        std::to_string(t.scale));
    }
    if (t.has_gt_prime && t.i_gt_prime.shape() != Shape{lr.n, 3, lr.h * 2, lr.w * 2}) {
        throw DataError("patch triple: gt' " + t.i_gt_prime.shape().str() + " is not twice lr " + lr.str());
    }
}

// Cut an aligned triple around a random centre. I_GT comes from the base
// level, I_GT' from the level one step finer than the LR level (the base
// level itself for x2), and I_LR is the bicubic degradation of I_GT.
inline PatchTriple sample_triple(const Pyramid& pyr, int scale, std::size_t p, Rng& rng) {
    if (p == 0 || p % 2 != 0) throw ConfigError("sample_triple: patch size must be even, got " + std::to_string(p));
    const int steps = log2_scale(scale);
    const std::size_t fine = static_cast<std::size_t>(steps - 1);
    if (pyr.levels.size() <= fine) {
        throw ConfigError("sample_triple: pyramid has " + std::to_string(pyr.levels.size()) + " levels, scale x" +
                          std::to_string(scale) + " needs " + std::to_string(fine + 1));
    }
    const std::size_t s = static_cast<std::size_t>(scale);
    const std::size_t factor = std::size_t{1} << fine;
    const Image& base = pyr.levels[0];
    const Image& level = pyr.levels[fine];
    const std::size_t win = 2 * p;
    if (level.shape().h < win || level.shape().w < win || base.shape().h < p * s || base.shape().w < p * s) {
        throw DataError("sample_triple: window of " + std::to_string(p * s) + " base pixels does not fit pyramid " +
                        base.shape().str());
    }
    const std::size_t top = rng.below(level.shape().h - win + 1);
    const std::size_t left = rng.below(level.shape().w - win + 1);

    PatchTriple t;
    t.scale = scale;
    t.levels = levels_for_scale(scale);
    t.i_gt_prime = crop(level, top, left, win, win);
    t.i_gt = crop(base, top * factor, left * factor, p * s, p * s);
    t.i_lr = resize_bicubic(t.i_gt, Ratio{1, scale});
    t.center = {top * factor + p * s / 2, left * factor + p * s / 2};
    check_triple(t);
    return t;
}

// Same random quarter turn applied to all three images.
inline PatchTriple augment(const PatchTriple& t, Rng& rng) {
    const int k = static_cast<int>(rng.below(4));
    PatchTriple out = t;
    out.i_gt = rotate90(t.i_gt, k);
    out.i_lr = rotate90(t.i_lr, k);
    if (t.has_gt_prime) out.i_gt_prime = rotate90(t.i_gt_prime, k);
    return out;
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// 5:1 train/test partition of [0, count), a pure function of seed.
inline Split split_indices(std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng(seed, 0x59117);
    rng.shuffle(order);
    const std::size_t n_test = (count + 3) / 6;
    Split s;
    s.test.assign(order.begin(), order.begin() + static_cast<long>(n_test));
    s.train.assign(order.begin() + static_cast<long>(n_test), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

// Base size that leaves room for random crops of a p-pixel LR patch at scale s.
inline std::size_t synthetic_base_size(int scale, std::size_t p) {
    const std::size_t need = 2 * p * static_cast<std::size_t>(scale);
    return (need + 7) / 8 * 8;
}

// Triple i depends only on (seed, i).
inline PatchTriple synthetic_triple(std::uint64_t seed, std::size_t index, int scale, std::size_t p,
                                    PyramidStyle style = {}) {
    Rng root(seed, 0xDA7A);
    Rng item = root.fork(index);
    style.levels = std::max<std::size_t>(style.levels, static_cast<std::size_t>(log2_scale(scale)));
    Pyramid pyr = synth_pyramid(item.next_u64(), synthetic_base_size(scale, p), style);
    return sample_triple(pyr, scale, p, item);
}

inline std::vector<PatchTriple> synthetic_triples(std::uint64_t seed, std::size_t count, int scale, std::size_t p,
                                                  const PyramidStyle& style = {}) {
    std::vector<PatchTriple> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_triple(seed, i, scale, p, style));
    return out;
}

} // namespace cwtnet
