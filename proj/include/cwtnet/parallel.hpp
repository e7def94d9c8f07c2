#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cwtnet {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
    static std::atomic<unsigned> n{0};
    return n;
}
} // namespace detail

// 0 means "use hardware concurrency". Kernels split work only over
// independent items (batch entries, output rows), so results do not depend
// on this value.
inline void set_num_threads(unsigned n) noexcept { detail::thread_setting() = n; }

inline unsigned num_threads() noexcept {
    unsigned n = detail::thread_setting();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

// Calls fn(i) for every i in [0, count). Each index is handled by exactly one
// thread; fn must only write state owned by index i.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(num_threads(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    auto work = [&](std::size_t slot) {
        try {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        } catch (...) {
            errors[slot] = std::current_exception();
        }
    };
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work, t);
    work(0);
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace cwtnet
