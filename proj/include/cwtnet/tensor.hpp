#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cwtnet/errors.hpp"

namespace cwtnet {

// (batch, channels, rows, cols)
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    [[nodiscard]] constexpr std::size_t numel() const noexcept { return n * c * h * w; }
    [[nodiscard]] constexpr std::size_t plane() const noexcept { return h * w; }
    [[nodiscard]] constexpr bool valid() const noexcept { return n > 0 && c > 0 && h > 0 && w > 0; }
    constexpr bool operator==(const Shape&) const noexcept = default;

    [[nodiscard]] std::string str() const {
        return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
               ", " + std::to_string(w) + ")";
    }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

// Dense rank-4 array in NCHW order. Value type; copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape) {
        if (!shape.valid()) throw ShapeError("tensor dimensions must be >= 1, got " + shape.str());
        data_.assign(shape.numel(), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (!shape.valid()) throw ShapeError("tensor dimensions must be >= 1, got " + shape.str());
        if (data_.size() != shape.numel()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape.str());
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<T> data() & noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const& noexcept { return data_; }
    // Owning copy for temporaries, so range-for over f(x).data() stays valid.
    [[nodiscard]] std::vector<T> data() && noexcept { return std::move(data_); }
    [[nodiscard]] T* ptr() noexcept { return data_.data(); }
    [[nodiscard]] const T* ptr() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    [[nodiscard]] std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[index(n, c, y, x)];
    }
    const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[index(n, c, y, x)];
    }

    // Pointer to the (n, c) plane.
    T* plane(std::size_t n, std::size_t c) noexcept { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const T* plane(std::size_t n, std::size_t c) const noexcept {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    // Pointer to batch item n.
    T* item(std::size_t n) noexcept { return data_.data() + n * shape_.c * shape_.plane(); }
    const T* item(std::size_t n) const noexcept { return data_.data() + n * shape_.c * shape_.plane(); }

    void fill(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(shape_, o.shape_, "tensor +=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    [[nodiscard]] Tensor reshaped(Shape s) const {
        if (s.numel() != shape_.numel()) {
            throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
        }
        return Tensor(s, data_);
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    [[nodiscard]] T sum() const noexcept {
        T s = 0;
        for (T v : data_) s += v;
        return s;
    }

    bool operator==(const Tensor& o) const noexcept { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_{};
    std::vector<T> data_;
};

// Extract batch item(s) [first, first + count).
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t first, std::size_t count = 1) {
    const Shape& s = x.shape();
    if (first + count > s.n) throw ShapeError("slice_batch out of range for " + s.str());
    const std::size_t per = s.c * s.plane();
    std::vector<T> out(x.data().begin() + first * per, x.data().begin() + (first + count) * per);
    return Tensor<T>(Shape{count, s.c, s.h, s.w}, std::move(out));
}

// Concatenate along the batch dimension.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    if (items.empty()) throw ShapeError("stack_batch: no items");
    Shape s = items.front().shape();
    std::vector<T> out;
    out.reserve(s.numel() * items.size());
    std::size_t n = 0;
    for (const auto& t : items) {
        const Shape& ts = t.shape();
        if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
            throw ShapeError("stack_batch: item shape " + ts.str() + " vs " + s.str());
        }
        out.insert(out.end(), t.data().begin(), t.data().end());
        n += ts.n;
    }
    s.n = n;
    return Tensor<T>(s, std::move(out));
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
    return m;
}

} // namespace cwtnet
