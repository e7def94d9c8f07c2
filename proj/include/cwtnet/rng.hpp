#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace cwtnet {

// Counter-based generator: the n-th draw of stream (seed, stream) is a pure
// function of (seed, stream, n). Distributions are implemented here rather
// than through <random> so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix(seed ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

    // Derive an independent generator for a sub-task, e.g. fork(epoch).
    [[nodiscard]] Rng fork(std::uint64_t stream) const noexcept {
        Rng r(0);
        r.key_ = mix(key_ ^ mix(stream + 0x9E3779B97F4A7C15ULL));
        return r;
    }

    std::uint64_t next_u64() noexcept {
        return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
    }

    // Uniform in [0, 1).
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; consumes two draws.
    double normal() noexcept {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace cwtnet
