#include <gtest/gtest.h>

#include <cmath>

#include "cwtnet/attention.hpp"
#include "cwtnet/blocks.hpp"
#include "cwtnet/gradcheck.hpp"
#include "cwtnet/rng.hpp"

using namespace cwtnet;

namespace {

template <typename T>
Tensor<T> rand_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
    Rng r(seed);
    Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(r.uniform(lo, hi));
    return t;
}

struct Brute {
    std::vector<std::size_t> index;
    std::vector<double> best;
};

// O(L^2) scan over zero-padded 3x3 patches in long double.
template <typename T>
Brute brute_force(const Tensor<T>& q, const Tensor<T>& k) {
    const Shape s = q.shape();
    const std::size_t l = s.h * s.w;
    auto patch = [&](const Tensor<T>& x, std::size_t n, std::size_t pos) {
        std::vector<long double> v;
        const long y = static_cast<long>(pos / s.w), xx = static_cast<long>(pos % s.w);
        for (std::size_t c = 0; c < s.c; ++c)
            for (long dy = -1; dy <= 1; ++dy)
                for (long dx = -1; dx <= 1; ++dx) {
                    const long yy = y + dy, xw = xx + dx;
                    const bool in = yy >= 0 && xw >= 0 && yy < static_cast<long>(s.h) && xw < static_cast<long>(s.w);
                    v.push_back(in ? static_cast<long double>(
                                         x(n, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xw)))
                                   : 0.0L);
                }
        long double nrm = 0;
        for (auto e : v) nrm += e * e;
        nrm = std::sqrt(nrm);
        if (nrm > 0)
            for (auto& e : v) e /= nrm;
        return v;
    };
    Brute out;
    for (std::size_t n = 0; n < s.n; ++n) {
        std::vector<std::vector<long double>> kp;
        for (std::size_t j = 0; j < l; ++j) kp.push_back(patch(k, n, j));
        for (std::size_t i = 0; i < l; ++i) {
            const auto qp = patch(q, n, i);
            long double best = -10;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < l; ++j) {
                long double r = 0;
                for (std::size_t d = 0; d < qp.size(); ++d) r += qp[d] * kp[j][d];
                if (r > best) {
                    best = r;
                    arg = j;
                }
            }
            out.index.push_back(arg);
            out.best.push_back(static_cast<double>(best));
        }
    }
    return out;
}

template <typename T>
AttentionOutputs<T> attend(Tape<T>& tape, const Tensor<T>& q, const Tensor<T>& k, std::size_t block_rows = 256) {
    AttentionConfig cfg;
    cfg.block_rows = block_rows;
    return texture_attention(tape.constant(q), tape.constant(k), cfg);
}

} // namespace

TEST(Attention, MatchesBruteForceScan) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto q = rand_tensor<double>(Shape{2, 4, 8, 8}, seed);
        const auto k = rand_tensor<double>(Shape{2, 4, 8, 8}, seed + 1000);
        const Brute ref = brute_force(q, k);
        Tape<double> tape(false);
        const auto att = attend(tape, q, k, 7);
        ASSERT_EQ(att.h_index, ref.index);
        for (std::size_t i = 0; i < ref.best.size(); ++i) EXPECT_NEAR(att.s_map.value()[i], ref.best[i], 1e-12);
    }
}

TEST(Attention, FloatMatchesBruteForceScan) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto q = rand_tensor<float>(Shape{1, 8, 8, 8}, seed + 50);
        const auto k = rand_tensor<float>(Shape{1, 8, 8, 8}, seed + 60);
        const Brute ref = brute_force(q, k);
        Tape<float> tape(false);
        const auto att = attend(tape, q, k);
        for (std::size_t i = 0; i < ref.best.size(); ++i) {
            EXPECT_NEAR(att.s_map.value()[i], ref.best[i], 1e-5);
            if (att.h_index[i] != ref.index[i]) {
                // Only acceptable for a float-level near tie.
                EXPECT_NEAR(ref.best[i], att.s_map.value()[i], 1e-6);
            }
        }
    }
}

TEST(Attention, BlockedScanEqualsFullMatrix) {
    const auto q = rand_tensor<double>(Shape{1, 3, 6, 7}, 3);
    const auto k = rand_tensor<double>(Shape{1, 3, 6, 7}, 4);
    const auto r = relevance(unfold_forward(q, 3, 1, 1), unfold_forward(k, 3, 1, 1));
    const auto [idx, best] = hard_soft_attention(r);
    for (std::size_t rows : {1u, 5u, 42u, 1000u}) {
        Tape<double> tape(false);
        const auto att = attend(tape, q, k, rows);
        EXPECT_EQ(att.h_index, idx);
        for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(att.s_map.value()[i], best[i]);
    }
}

TEST(Attention, TiesResolveToSmallestIndex) {
    Tensor<double> r(Shape{1, 1, 3, 3});
    r(0, 0, 0, 0) = 0.2;
    r(0, 0, 0, 1) = 0.9;
    r(0, 0, 0, 2) = 0.9;
    r(0, 0, 1, 0) = 0.5;
    r(0, 0, 1, 1) = 0.5;
    r(0, 0, 1, 2) = 0.5;
    r(0, 0, 2, 2) = 1.0;
    const auto [idx, best] = hard_soft_attention(r);
    EXPECT_EQ(idx, (std::vector<std::size_t>{1, 0, 2}));
    EXPECT_EQ(best[0], 0.9);
}

TEST(Attention, InvariantUnderPositiveRescalingOfK) {
    const auto q = rand_tensor<float>(Shape{1, 6, 8, 8}, 5);
    const auto k = rand_tensor<float>(Shape{1, 6, 8, 8}, 6);
    Tape<float> tape(false);
    const auto base = attend(tape, q, k);
    for (float f : {0.125f, 4.0f, 1024.0f}) {
        Tensor<float> ks = k;
        for (auto& v : ks.data()) v *= f;
        const auto att = attend(tape, q, ks);
        EXPECT_EQ(att.h_index, base.h_index);
        EXPECT_TRUE(att.s_map.value() == base.s_map.value());
    }
    const auto qd = rand_tensor<double>(Shape{1, 6, 8, 8}, 7);
    const auto kd = rand_tensor<double>(Shape{1, 6, 8, 8}, 8);
    Tape<double> td(false);
    const auto based = attend(td, qd, kd);
    for (double f : {0.3, 3.7, 1e3}) {
        Tensor<double> ks = kd;
        for (auto& v : ks.data()) v *= f;
        const auto att = attend(td, qd, ks);
        EXPECT_EQ(att.h_index, based.h_index);
        EXPECT_LT(max_abs_diff(att.s_map.value(), based.s_map.value()), 1e-12);
    }
}

TEST(Attention, SelfAttentionPicksOwnPatch) {
    const auto q = rand_tensor<double>(Shape{1, 4, 5, 5}, 9);
    Tape<double> tape(false);
    const auto att = attend(tape, q, q);
    for (std::size_t i = 0; i < 25; ++i) {
        EXPECT_EQ(att.h_index[i], i);
        EXPECT_NEAR(att.s_map.value()[i], 1.0, 1e-12);
    }
}

TEST(Attention, GradientsOfSoftMapMatchFiniteDifferences) {
    Parameters<double> p;
    p.add("q", rand_tensor<double>(Shape{1, 3, 5, 5}, 10));
    p.add("k", rand_tensor<double>(Shape{1, 3, 5, 5}, 11));
    GradCheckOptions opt;
    opt.step = 1e-6;
    const auto rep = check_gradients(
        p,
        [](Tape<double>& t, Parameters<double>& ps) {
            auto att = texture_attention(t.parameter(ps, 0), t.parameter(ps, 1));
            return sum(broadcast_mul(att.s_map, t.constant(rand_tensor<double>(att.s_map.shape(), 12))));
        },
        opt);
    EXPECT_TRUE(rep.ok()) << rep.max_rel;
}

TEST(Transfer, IdentityIndexReproducesValues) {
    const auto v = rand_tensor<double>(Shape{2, 3, 5, 4}, 13);
    std::vector<std::size_t> idx;
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 20; ++i) idx.push_back(i);
    EXPECT_LT(max_abs_diff(transfer_forward(v, idx), v), 1e-15);
}

TEST(Transfer, InteriorConstantIndexCopiesThatPatchCentre) {
    // Every query pointing at one interior key: interior outputs average the
    // nine entries of the key's 3x3 neighbourhood.
    const auto v = rand_tensor<double>(Shape{1, 1, 6, 6}, 14);
    const std::size_t key = 2 * 6 + 3;
    const std::vector<std::size_t> idx(36, key);
    const auto out = transfer_forward(v, idx);
    double mean = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) mean += v(0, 0, static_cast<std::size_t>(2 + dy), static_cast<std::size_t>(3 + dx));
    EXPECT_NEAR(out(0, 0, 3, 3), mean / 9.0, 1e-15);
}

TEST(Transfer, GradientMatchesFiniteDifferences) {
    Parameters<double> p;
    p.add("v", rand_tensor<double>(Shape{1, 2, 4, 5}, 15));
    Rng r(16);
    std::vector<std::size_t> idx(20);
    for (auto& i : idx) i = r.below(20);
    const auto rep = check_gradients(p, [&](Tape<double>& t, Parameters<double>& ps) {
        Var<double> y = transfer(t.parameter(ps, 0), idx);
        return sum(broadcast_mul(y, t.constant(rand_tensor<double>(y.shape(), 17))));
    });
    EXPECT_TRUE(rep.ok());
}

TEST(TransferDeathTest, OutOfRangeIndexAborts) {
    const auto v = rand_tensor<double>(Shape{1, 1, 3, 3}, 18);
    std::vector<std::size_t> idx(9, 0);
    idx[4] = 9;
    EXPECT_DEATH((void)transfer_forward(v, idx), "");
}

TEST(Fuse, ZeroWeightsReduceToQuery) {
    Parameters<double> p;
    Rng r(19);
    add_conv(p, r, "tf", 8, 4, 3, Init::Zero);
    Tape<double> tape(false);
    const auto q = rand_tensor<double>(Shape{1, 4, 6, 6}, 20);
    const auto k = rand_tensor<double>(Shape{1, 4, 6, 6}, 21);
    const auto out = texture_transformer(tape.constant(q), tape.constant(k), ParamScope<double>(tape, p, "tf"));
    EXPECT_TRUE(out.value() == q);
}

TEST(Fuse, ShapeMismatchIsReported) {
    Parameters<double> p;
    Rng r(22);
    add_conv(p, r, "tf", 8, 4, 3);
    Tape<double> tape(false);
    EXPECT_THROW(texture_transformer(tape.constant(rand_tensor<double>(Shape{1, 4, 6, 6}, 1)),
                                     tape.constant(rand_tensor<double>(Shape{1, 4, 6, 4}, 2)),
                                     ParamScope<double>(tape, p, "tf")),
                 ShapeError);
}
