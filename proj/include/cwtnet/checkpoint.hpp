#pragma once

// Binary checkpoint, little-endian throughout. Layout in docs/checkpoint_format.md.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/config.hpp"
#include "cwtnet/errors.hpp"
#include "cwtnet/optim.hpp"

namespace cwtnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'C', 'W', 'T', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    RunConfig config;
    std::uint64_t step = 0;
    Parameters<float> params;
    AdamState<float> adam;

    Checkpoint(RunConfig cfg, std::uint64_t s, Parameters<float> p, AdamState<float> a)
        : config(std::move(cfg)), step(s), params(std::move(p)), adam(std::move(a)) {}
};

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

class Writer {
public:
    template <typename U>
    void put(U v) {
        std::uint8_t b[sizeof(U)];
        std::memcpy(b, &v, sizeof(U));
        bytes.insert(bytes.end(), b, b + sizeof(U));
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& b, std::size_t end, std::string source)
        : bytes_(b), end_(end), source_(std::move(source)) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    [[nodiscard]] std::size_t pos() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (n > end_ || pos_ > end_ - n) throw DataError("checkpoint " + source_ + " is truncated");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string source_;
};

} // namespace detail

inline std::vector<std::uint8_t> serialize(const Checkpoint& ck) {
    detail::Writer w;
    w.put_bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.put(kCheckpointVersion);
    w.put_string(to_json(ck.config).dump());
    w.put(ck.step);
    w.put(ck.adam.step);
    w.put(static_cast<std::uint32_t>(ck.params.size()));
    std::uint64_t offset = 0;
    for (const auto& e : ck.params) {
        w.put_string(e.name);
        w.put(std::uint32_t{4});
        const Shape s = e.value.shape();
        for (std::uint64_t d : {s.n, s.c, s.h, s.w}) w.put(d);
        w.put(offset);
        offset += e.value.size() * sizeof(float);
    }
    w.put(offset * 3);
    for (const auto& e : ck.params) w.put_bytes(e.value.ptr(), e.value.size() * sizeof(float));
    for (const auto& m : ck.adam.m) w.put_bytes(m.ptr(), m.size() * sizeof(float));
    for (const auto& v : ck.adam.v) w.put_bytes(v.ptr(), v.size() * sizeof(float));
    w.put(fnv1a64(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

inline Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>") {
    if (bytes.size() < sizeof kCheckpointMagic + 4 + 8) throw DataError("checkpoint " + source + " is truncated");
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, 8);
    if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw DataError("checkpoint " + source + " has a bad magic header");
    }
    if (fnv1a64(bytes.data(), body) != stored) {
        throw DataError("checkpoint " + source + " failed checksum verification; refusing to load");
    }
    detail::Reader r(bytes, body, source);
    r.take(sizeof kCheckpointMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint " + source + " has unsupported version " + std::to_string(version));
    }
    RunConfig cfg;
    try {
        cfg = run_config_from_string(r.get_string());
    } catch (const ConfigError& e) {
        throw DataError("checkpoint " + source + " carries an invalid config: " + e.what());
    }
    const auto step = r.get<std::uint64_t>();
    const auto adam_step = r.get<std::uint64_t>();
    const auto count = r.get<std::uint32_t>();
    struct Item {
        std::string name;
        Shape shape;
        std::uint64_t offset;
    };
    std::vector<Item> items;
    std::uint64_t expected = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        Item it;
        it.name = r.get_string();
        if (r.get<std::uint32_t>() != 4) throw DataError("checkpoint " + source + ": parameter '" + it.name + "' is not rank 4");
        std::uint64_t d[4];
        for (auto& x : d) x = r.get<std::uint64_t>();
        it.shape = Shape{d[0], d[1], d[2], d[3]};
        it.offset = r.get<std::uint64_t>();
        if (it.offset != expected || !it.shape.valid()) {
            throw DataError("checkpoint " + source + ": inconsistent manifest entry '" + it.name + "'");
        }
        expected += it.shape.numel() * sizeof(float);
        items.push_back(std::move(it));
    }
    const auto payload = r.get<std::uint64_t>();
    if (payload != expected * 3) throw DataError("checkpoint " + source + ": payload size does not match manifest");

    Parameters<float> params;
    for (const auto& it : items) {
        Tensor<float> t(it.shape);
        std::memcpy(t.ptr(), r.take(t.size() * sizeof(float)), t.size() * sizeof(float));
        params.add(it.name, std::move(t));
    }
    AdamState<float> adam(params);
    adam.step = adam_step;
    for (auto& m : adam.m) std::memcpy(m.ptr(), r.take(m.size() * sizeof(float)), m.size() * sizeof(float));
    for (auto& v : adam.v) std::memcpy(v.ptr(), r.take(v.size() * sizeof(float)), v.size() * sizeof(float));
    if (r.pos() != body) throw DataError("checkpoint " + source + " has trailing bytes");

    const Parameters<float> reference = build_parameters<float>(cfg.network);
    if (reference.size() != params.size()) {
        throw DataError("checkpoint " + source + ": parameter set does not match its config");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (reference[i].name != params[i].name || reference[i].value.shape() != params[i].value.shape()) {
            throw DataError("checkpoint " + source + ": parameter '" + params[i].name + "' does not match its config");
        }
    }
    return Checkpoint(std::move(cfg), step, std::move(params), std::move(adam));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Written to a temporary sibling and renamed, so readers never see a partial file.
inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file_bytes(path, serialize(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize(read_file_bytes(path), path.string());
}

} // namespace cwtnet
