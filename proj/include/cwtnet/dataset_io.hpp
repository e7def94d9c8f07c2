#pragma once

// On-disk patch triples:
//   <root>/manifest.json
//   <root>/<split>/<id>/gt.png | gtp.png | lr.png

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwtnet/data.hpp"
#include "cwtnet/errors.hpp"
#include "cwtnet/image_io.hpp"

namespace cwtnet {

namespace fs = std::filesystem;

struct PatchDataset {
    int scale = 2;
    std::size_t patch = 0;
    Levels levels{};
    std::array<double, 3> means{};
    std::vector<std::string> ids;
    std::vector<PatchTriple> items;

    [[nodiscard]] std::size_t size() const noexcept { return items.size(); }
};

struct Manifest {
    int scale = 2;
    std::size_t patch = 0;
    Levels levels{};
    std::array<double, 3> means{};
    std::uint64_t seed = 0;
    std::vector<std::string> train;
    std::vector<std::string> test;

    [[nodiscard]] const std::vector<std::string>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "test") return test;
        throw UsageError("unknown split '" + name + "' (expected train or test)");
    }
};

inline nlohmann::json to_json(const Manifest& m) {
    return nlohmann::json{{"format", "cwtnet-patches"},
                          {"version", 1},
                          {"scale", m.scale},
                          {"patch", m.patch},
                          {"levels", {{"gt", m.levels.gt}, {"gt_prime", m.levels.gt_prime}, {"lr", m.levels.lr}}},
                          {"means", m.means},
                          {"seed", m.seed},
                          {"splits", {{"train", m.train}, {"test", m.test}}}};
}

inline Manifest read_manifest(const fs::path& root) {
    const fs::path file = root / "manifest.json";
    if (!fs::is_regular_file(file)) throw DataError("dataset " + root.string() + ": missing " + file.string());
    std::ifstream in(file);
    try {
        const auto j = nlohmann::json::parse(in);
        Manifest m;
        m.scale = j.at("scale").get<int>();
        m.patch = j.value("patch", std::size_t{0});
        if (j.contains("levels")) {
            const auto& lv = j.at("levels");
            m.levels = Levels{lv.at("gt").get<int>(), lv.at("gt_prime").get<int>(), lv.at("lr").get<int>()};
        } else {
            m.levels = levels_for_scale(m.scale);
        }
        if (j.contains("means")) m.means = j.at("means").get<std::array<double, 3>>();
        m.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("splits")) {
            const auto& sp = j.at("splits");
            if (sp.contains("train")) m.train = sp.at("train").get<std::vector<std::string>>();
            if (sp.contains("test")) m.test = sp.at("test").get<std::vector<std::string>>();
        }
        log2_scale(m.scale);
        if (!m.levels.ordered()) throw DataError(file.string() + ": levels violate gt >= gt' >= lr");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed " + file.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(file.string() + ": " + e.what());
    }
}

inline void write_manifest(const fs::path& root, const Manifest& m) {
    fs::create_directories(root);
    std::ofstream out(root / "manifest.json", std::ios::binary);
    out << to_json(m).dump(2) << '\n';
    if (!out) throw DataError("cannot write " + (root / "manifest.json").string());
}

inline void save_triple(const PatchTriple& t, const fs::path& dir) {
    check_triple(t);
    fs::create_directories(dir);
    write_png(dir / "gt.png", t.i_gt);
    write_png(dir / "lr.png", t.i_lr);
    if (t.has_gt_prime) write_png(dir / "gtp.png", t.i_gt_prime);
}

inline std::string triple_id(std::size_t index) {
    std::string s = std::to_string(index);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

// Writes every triple under train/ or test/ according to the 5:1 split of seed.
inline Manifest save_dataset(const fs::path& root, const std::vector<PatchTriple>& triples, std::uint64_t seed) {
    if (triples.empty()) throw UsageError("save_dataset: no triples");
    const Split split = split_indices(triples.size(), seed);
    Manifest m;
    m.scale = triples.front().scale;
    m.patch = triples.front().i_lr.shape().h;
    m.levels = triples.front().levels;
    m.seed = seed;
    std::array<double, 3> sum{};
    for (const auto& t : triples) {
        const auto cm = channel_means(t.i_gt);
        for (std::size_t c = 0; c < 3; ++c) sum[c] += cm[c];
    }
    for (std::size_t c = 0; c < 3; ++c) m.means[c] = sum[c] / static_cast<double>(triples.size());
    for (std::size_t i : split.train) {
        m.train.push_back(triple_id(i));
        save_triple(triples[i], root / "train" / m.train.back());
    }
    for (std::size_t i : split.test) {
        m.test.push_back(triple_id(i));
        save_triple(triples[i], root / "test" / m.test.back());
    }
    write_manifest(root, m);
    return m;
}

// Loads one split. gtp.png may be absent only when require_gt_prime is false.
inline PatchDataset load_patch_dir(const fs::path& root, const std::string& split = "train",
                                   bool require_gt_prime = true) {
    if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
    const Manifest m = read_manifest(root);
    std::vector<std::string> ids = m.split(split);
    const fs::path dir = root / split;
    if (!fs::is_directory(dir)) throw DataError("dataset " + root.string() + ": missing split directory " + dir.string());

    std::vector<std::string> present;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) throw DataError("malformed dataset: unexpected file " + entry.path().string());
        present.push_back(entry.path().filename().string());
    }
    std::sort(present.begin(), present.end());
    if (ids.empty()) ids = present;
    for (const auto& id : ids) {
        if (!std::binary_search(present.begin(), present.end(), id)) {
            throw DataError("dataset " + root.string() + ": manifest lists " + (dir / id).string() + " which is missing");
        }
    }
    if (ids.empty()) throw DataError("dataset " + root.string() + ": split '" + split + "' is empty");

    PatchDataset ds;
    ds.scale = m.scale;
    ds.patch = m.patch;
    ds.levels = m.levels;
    ds.means = m.means;
    const auto s = static_cast<std::size_t>(m.scale);
    for (const auto& id : ids) {
        const fs::path item = dir / id;
        for (const char* name : {"gt.png", "lr.png"}) {
            if (!fs::is_regular_file(item / name)) throw DataError("incomplete triple: missing " + (item / name).string());
        }
        PatchTriple t;
        t.scale = m.scale;
        t.levels = m.levels;
        t.i_gt = read_png(item / "gt.png");
        t.i_lr = read_png(item / "lr.png");
        t.has_gt_prime = fs::is_regular_file(item / "gtp.png");
        if (t.has_gt_prime) {
            t.i_gt_prime = read_png(item / "gtp.png");
        } else if (require_gt_prime) {
            throw DataError("incomplete triple: missing " + (item / "gtp.png").string());
        }
        const Shape lr = t.i_lr.shape();
        auto dims = [](const Shape& sh) { return std::to_string(sh.h) + "x" + std::to_string(sh.w); };
        if (m.patch != 0 && (lr.h != m.patch || lr.w != m.patch)) {
            throw DataError("validation error: " + (item / "lr.png").string() + " is " + dims(lr) + ", manifest patch is " +
                            std::to_string(m.patch));
        }
        if (t.i_gt.shape().h != lr.h * s || t.i_gt.shape().w != lr.w * s) {
            throw DataError("validation error: " + (item / "gt.png").string() + " is " + dims(t.i_gt.shape()) +
                            ", expected lr x" + std::to_string(m.scale) + " = " + std::to_string(lr.h * s) + "x" +
                            std::to_string(lr.w * s));
        }
        if (t.has_gt_prime && (t.i_gt_prime.shape().h != 2 * lr.h || t.i_gt_prime.shape().w != 2 * lr.w)) {
            throw DataError("validation error: " + (item / "gtp.png").string() + " is " + dims(t.i_gt_prime.shape()) +
                            ", expected " + std::to_string(2 * lr.h) + "x" + std::to_string(2 * lr.w));
        }
        ds.ids.push_back(id);
        ds.items.push_back(std::move(t));
    }
    return ds;
}

} // namespace cwtnet
