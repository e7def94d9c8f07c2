#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cwtnet/errors.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Snap values to the 8-bit grid a PNG round trip would produce.
template <typename T>
Tensor<T> quantize8(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.data()) v = static_cast<T>(to_byte(v) / 255.0);
    return out;
}

// 8-bit RGB PNG -> (1, 3, h, w) in [0, 1].
inline Tensor<float> read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw DataError("cannot read PNG " + path.string() + ": " + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot decode PNG " + path.string() + ": " + msg);
    }
    const std::size_t h = img.height, w = img.width;
    Tensor<float> out(Shape{1, 3, h, w});
    for (std::size_t c = 0; c < 3; ++c) {
        float* p = out.plane(0, c);
        for (std::size_t i = 0; i < h * w; ++i) p[i] = static_cast<float>(buf[i * 3 + c] / 255.0);
    }
    return out;
}

template <typename T>
void write_png(const std::filesystem::path& path, const Tensor<T>& image) {
    const Shape s = image.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("write_png: expected (1, 3, h, w), got " + s.str());
    std::vector<std::uint8_t> buf(s.h * s.w * 3);
    for (std::size_t c = 0; c < 3; ++c) {
        const T* p = image.plane(0, c);
        for (std::size_t i = 0; i < s.h * s.w; ++i) buf[i * 3 + c] = to_byte(static_cast<double>(p[i]));
    }
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(s.w);
    img.height = static_cast<png_uint_32>(s.h);
    img.format = PNG_FORMAT_RGB;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw DataError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int factor) {
    const Shape s = x.shape();
    const auto f = static_cast<std::size_t>(factor);
    Tensor<T> out(Shape{s.n, s.c, s.h * f, s.w * f});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h * f; ++y)
                for (std::size_t xx = 0; xx < s.w * f; ++xx) out(n, c, y, xx) = x(n, c, y / f, xx / f);
    return out;
}

// Horizontal strip of equally tall images separated by a white gutter.
template <typename T>
Tensor<T> hconcat(const std::vector<Tensor<T>>& images, std::size_t gutter = 2) {
    if (images.empty()) throw UsageError("hconcat: no images");
    const std::size_t h = images.front().shape().h;
    std::size_t w = 0;
    for (const auto& im : images) {
        if (im.shape().n != 1 || im.shape().c != 3 || im.shape().h != h) {
            throw ShapeError("hconcat: image " + im.shape().str() + " does not match height " + std::to_string(h));
        }
        w += im.shape().w;
    }
    w += gutter * (images.size() - 1);
    Tensor<T> out(Shape{1, 3, h, w});
    out.fill(T(1));
    std::size_t x0 = 0;
    for (const auto& im : images) {
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < im.shape().w; ++x) out(0, c, y, x0 + x) = im(0, c, y, x);
        x0 += im.shape().w + gutter;
    }
    return out;
}

} // namespace cwtnet
