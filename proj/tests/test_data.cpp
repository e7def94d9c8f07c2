#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cwtnet/data.hpp"
#include "cwtnet/dataset_io.hpp"
#include "cwtnet/image_io.hpp"
#include "cwtnet/resize.hpp"
#include "cwtnet/wavelet.hpp"

using namespace cwtnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cwtnet_test_data_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const DataError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Pyramid, DeterministicAndInUnitRange) {
    const auto a = synth_pyramid(11, 64), b = synth_pyramid(11, 64), c = synth_pyramid(12, 64);
    ASSERT_EQ(a.levels.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(a.levels[k] == b.levels[k]);
    EXPECT_FALSE(a.levels[0] == c.levels[0]);
    for (float v : a.levels[0].data()) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
    EXPECT_THROW(synth_pyramid(1, 60), ConfigError);
}

TEST(Pyramid, LevelsAreAreaAveragesWithStableMeans) {
    const auto p = synth_pyramid(5, 128);
    for (std::size_t k = 1; k < p.levels.size(); ++k) {
        EXPECT_EQ(p.levels[k].shape().h, 128u >> k);
        EXPECT_TRUE(p.levels[k] == area_downsample(p.levels[k - 1]));
        EXPECT_NEAR(p.microns_per_pixel[k], 0.243 * static_cast<double>(1u << k), 1e-12);
        const auto m0 = channel_means(p.levels[0]), mk = channel_means(p.levels[k]);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(mk[c], m0[c], 1e-5);
    }
    const auto m = channel_means(p.levels[0]);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(m[c], kPathologyMeans[c], 0.1);
}

TEST(Triples, ScaleTwoUsesGtAsFinerImage) {
    Rng r(1);
    const auto pyr = synth_pyramid(2, 64);
    const auto t = sample_triple(pyr, 2, 16, r);
    EXPECT_TRUE(t.i_gt_prime == t.i_gt);
    EXPECT_EQ(t.i_lr.shape(), (Shape{1, 3, 16, 16}));
    EXPECT_TRUE(t.i_lr == resize_bicubic(t.i_gt, Ratio{1, 2}));
    EXPECT_EQ(t.levels, (Levels{1, 1, 0}));
}

TEST(Triples, CoarserScalesShareFieldOfView) {
    for (int scale : {4, 8}) {
        Rng r(static_cast<std::uint64_t>(scale));
        const std::size_t p = 8;
        const auto pyr = synth_pyramid(3, synthetic_base_size(scale, p));
        const auto t = sample_triple(pyr, scale, p, r);
        const auto s = static_cast<std::size_t>(scale);
        EXPECT_EQ(t.i_gt.shape(), (Shape{1, 3, p * s, p * s}));
        EXPECT_EQ(t.i_gt_prime.shape(), (Shape{1, 3, 2 * p, 2 * p}));
        EXPECT_EQ(dwt_hh(t.i_gt_prime).shape(), t.i_lr.shape());
        Image down = t.i_gt;
        while (down.shape().h > 2 * p) down = area_downsample(down);
        EXPECT_TRUE(down == t.i_gt_prime) << "scale " << scale;
        EXPECT_TRUE(t.i_lr == resize_bicubic(t.i_gt, Ratio{1, scale}));
        EXPECT_TRUE(t.levels.ordered());
        EXPECT_EQ(t.levels.gt, scale == 4 ? 2 : 3);
    }
}

TEST(Triples, RejectsBadRequests) {
    Rng r(3);
    const auto pyr = synth_pyramid(4, 32);
    EXPECT_THROW(sample_triple(pyr, 2, 15, r), ConfigError);
    EXPECT_THROW(sample_triple(pyr, 4, 16, r), DataError);
    PatchTriple t = sample_triple(pyr, 2, 8, r);
    t.levels = Levels{0, 1, 0};
    EXPECT_THROW(check_triple(t), DataError);
}

TEST(Triples, SyntheticSetIsReproducible) {
    const auto a = synthetic_triples(9, 3, 2, 8), b = synthetic_triples(9, 3, 2, 8);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_TRUE(a[i].i_gt == b[i].i_gt);
        EXPECT_TRUE(a[i].i_lr == b[i].i_lr);
    }
    EXPECT_TRUE(synthetic_triple(9, 2, 2, 8).i_gt == a[2].i_gt);
    EXPECT_FALSE(a[0].i_gt == a[1].i_gt);
}

TEST(Augment, RotationsComposeAndCommuteWithBicubic) {
    Rng r(4);
    const auto pyr = synth_pyramid(4, 64);
    const auto t = sample_triple(pyr, 2, 16, r);
    Image x = t.i_gt;
    for (int i = 0; i < 4; ++i) x = rotate90(x, 1);
    EXPECT_TRUE(x == t.i_gt);
    EXPECT_TRUE(rotate90(rotate90(t.i_gt, 1), 3) == t.i_gt);

    const Image a = resize_bicubic(rotate90(t.i_gt, 2), Ratio{1, 2});
    const Image b = rotate90(resize_bicubic(t.i_gt, Ratio{1, 2}), 2);
    EXPECT_LT(max_abs_diff(a, b), 1e-6f);

    Rng ra(7);
    for (int i = 0; i < 8; ++i) {
        const auto aug = augment(t, ra);
        check_triple(aug);
        EXPECT_LT(max_abs_diff(aug.i_lr, resize_bicubic(aug.i_gt, Ratio{1, 2})), 1e-6f);
    }
}

TEST(Split, FiveToOnePartition) {
    const auto s = split_indices(12, 3);
    EXPECT_EQ(s.train.size(), 10u);
    EXPECT_EQ(s.test.size(), 2u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 12u);
    const auto again = split_indices(12, 3);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(split_indices(6, 0).test.size(), 1u);
    EXPECT_EQ(split_indices(120, 0).test.size(), 20u);
}

TEST(PngIo, RoundTripWithinOneQuantum) {
    const auto dir = scratch("png");
    const auto t = synthetic_triple(1, 0, 2, 16);
    write_png(dir / "x.png", t.i_gt);
    const auto back = read_png(dir / "x.png");
    EXPECT_EQ(back.shape(), t.i_gt.shape());
    EXPECT_LE(max_abs_diff(back, t.i_gt), 0.5f / 255.0f + 1e-6f);
    EXPECT_THROW(read_png(dir / "missing.png"), DataError);
    fs::remove_all(dir);
}

TEST(DatasetDir, SaveAndLoadSplits) {
    const auto dir = scratch("roundtrip");
    const auto triples = synthetic_triples(2, 6, 2, 12);
    const auto m = save_dataset(dir, triples, 5);
    EXPECT_EQ(m.train.size(), 5u);
    EXPECT_EQ(m.test.size(), 1u);
    const auto ds = load_patch_dir(dir, "train");
    EXPECT_EQ(ds.size(), 5u);
    EXPECT_EQ(ds.scale, 2);
    EXPECT_EQ(ds.patch, 12u);
    const auto idx = static_cast<std::size_t>(std::stoul(ds.ids[0]));
    EXPECT_TRUE(ds.items[0].i_gt == quantize8(triples[idx].i_gt));
    EXPECT_EQ(load_patch_dir(dir, "test").size(), 1u);
    EXPECT_THROW(load_patch_dir(dir, "valid"), UsageError);
    fs::remove_all(dir);
}

TEST(DatasetDir, ReportsMalformedInput) {
    const auto dir = scratch("malformed");
    save_dataset(dir, synthetic_triples(3, 6, 2, 12), 1);
    const auto ds = load_patch_dir(dir, "train");
    const fs::path item = dir / "train" / ds.ids[0];

    { std::ofstream(dir / "train" / "notes.txt") << "x"; }
    EXPECT_NE(error_of([&] { load_patch_dir(dir, "train"); }).find("malformed dataset"), std::string::npos);
    fs::remove(dir / "train" / "notes.txt");

    fs::rename(item / "gtp.png", dir / "gtp.bak");
    EXPECT_NE(error_of([&] { load_patch_dir(dir, "train"); }).find("missing"), std::string::npos);
    EXPECT_EQ(load_patch_dir(dir, "train", false).items[0].has_gt_prime, false);
    fs::rename(dir / "gtp.bak", item / "gtp.png");

    write_png(item / "gt.png", Tensor<float>(Shape{1, 3, 36, 36}, 0.5f));
    const auto msg = error_of([&] { load_patch_dir(dir, "train"); });
    EXPECT_NE(msg.find("validation error"), std::string::npos) << msg;
    EXPECT_NE(msg.find("36x36"), std::string::npos) << msg;

    fs::remove(item / "lr.png");
    EXPECT_NE(error_of([&] { load_patch_dir(dir, "train"); }).find("lr.png"), std::string::npos);

    fs::remove(dir / "manifest.json");
    EXPECT_FALSE(error_of([&] { load_patch_dir(dir, "train"); }).empty());
    fs::remove_all(dir);
}
