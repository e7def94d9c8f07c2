#include <gtest/gtest.h>

#include "cwtnet/gradcheck.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/rng.hpp"
#include "cwtnet/wavelet.hpp"

using namespace cwtnet;

namespace {

Tensor<double> tiled(std::array<double, 4> block, std::size_t size = 8, std::size_t channels = 3) {
    Tensor<double> t(Shape{1, channels, size, size});
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) t(0, c, y, x) = block[(y % 2) * 2 + (x % 2)];
    return t;
}

Tensor<double> random_image(std::uint64_t seed, Shape s = Shape{1, 3, 16, 16}) {
    Rng r(seed);
    Tensor<double> t(s);
    for (auto& v : t.data()) v = r.uniform();
    return t;
}

double energy(const Tensor<double>& t) {
    double e = 0;
    for (double v : t.data()) e += v * v;
    return e;
}

} // namespace

TEST(DwtHH, ConstantImageIsExactlyZero) {
    for (double v : {0.0, 0.5, 1.0, -3.25}) {
        for (double o : dwt_hh(Tensor<double>(Shape{2, 3, 6, 10}, v)).data()) EXPECT_EQ(o, 0.0);
        for (float o : dwt_hh(Tensor<float>(Shape{1, 1, 4, 4}, static_cast<float>(v))).data()) EXPECT_EQ(o, 0.0f);
    }
}

TEST(DwtHH, HandEvaluatedBlocks) {
    for (double v : dwt_hh(tiled({1, 5, 2, 4})).data()) EXPECT_NEAR(v, -1.0, 1e-7);
    for (double v : dwt_hh(tiled({1, 2, 3, 4})).data()) EXPECT_NEAR(v, 0.0, 1e-7);
    for (double v : dwt_hh(tiled({4, 1, 1, 4})).data()) EXPECT_NEAR(v, 3.0, 1e-7);
    for (double v : dwt_hh(tiled({1, -1, -1, 1})).data()) EXPECT_NEAR(v, 2.0, 1e-7);
}

TEST(DwtHH, MatchesStencilFormula) {
    const auto x = random_image(1, Shape{2, 3, 8, 6});
    const auto y = dwt_hh(x);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 4, 3}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 3; ++j) {
                    const double ref = 0.5 * (x(n, c, 2 * i, 2 * j) - x(n, c, 2 * i, 2 * j + 1) -
                                              x(n, c, 2 * i + 1, 2 * j) + x(n, c, 2 * i + 1, 2 * j + 1));
                    EXPECT_DOUBLE_EQ(y(n, c, i, j), ref);
                }
}

TEST(DwtHH, OddSizeIsRejectedWithCropHint) {
    try {
        (void)dwt_hh(Tensor<double>(Shape{1, 3, 7, 8}));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("crop"), std::string::npos);
    }
}

TEST(DwtHH, AnnihilatesRowOrColumnConstantImages) {
    Tensor<double> rows(Shape{1, 1, 6, 6}), cols(Shape{1, 1, 6, 6});
    Rng r(3);
    for (std::size_t y = 0; y < 6; ++y) {
        const double a = r.uniform(), b = r.uniform();
        for (std::size_t x = 0; x < 6; ++x) {
            rows(0, 0, y, x) = a;
            cols(0, 0, x, y) = b;
        }
    }
    for (double v : dwt_hh(rows).data()) EXPECT_NEAR(v, 0.0, 1e-15);
    for (double v : dwt_hh(cols).data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(DwtHH, IsLinear) {
    const auto a = random_image(4), b = random_image(5);
    Tensor<double> mix(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 2.0 * a[i] - 0.5 * b[i];
    const auto ha = dwt_hh(a), hb = dwt_hh(b), hm = dwt_hh(mix);
    for (std::size_t i = 0; i < hm.size(); ++i) EXPECT_NEAR(hm[i], 2.0 * ha[i] - 0.5 * hb[i], 1e-12);
}

TEST(DwtHH, EqualsHHSubbandOfFullTransform) {
    const auto x = random_image(6);
    EXPECT_TRUE(dwt_hh(x) == dwt_full(x).hh);
}

TEST(DwtFull, RoundTripAndEnergy) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = random_image(100 + seed);
        const auto sb = dwt_full(x);
        EXPECT_LT(max_abs_diff(idwt_full(sb), x), 1e-6);
        const double e = energy(sb.ll) + energy(sb.lh) + energy(sb.hl) + energy(sb.hh);
        EXPECT_NEAR(e / energy(x), 1.0, 1e-4);
    }
}

TEST(DwtFull, ConstantAndDelta) {
    const auto sb = dwt_full(Tensor<double>(Shape{1, 1, 4, 4}, 0.3));
    for (double v : sb.ll.data()) EXPECT_NEAR(v, 0.6, 1e-15);
    for (const auto* t : {&sb.lh, &sb.hl, &sb.hh})
        for (double v : t->data()) EXPECT_EQ(v, 0.0);

    Tensor<double> delta(Shape{1, 1, 6, 6});
    delta(0, 0, 3, 2) = 1.0;
    const auto d = dwt_full(delta);
    std::size_t nonzero = 0;
    for (const auto* t : {&d.ll, &d.lh, &d.hl, &d.hh}) {
        std::size_t here = 0;
        for (double v : t->data()) {
            if (v != 0.0) {
                ++here;
                EXPECT_EQ(std::abs(v), 0.5);
            }
        }
        EXPECT_EQ(here, 1u);
        nonzero += here;
    }
    EXPECT_EQ(nonzero, 4u);
}

TEST(DwtHH, GradientIsTransposeStencil) {
    Parameters<double> p;
    p.add("x", random_image(7, Shape{1, 2, 6, 6}));
    Rng r(8);
    Tensor<double> w(Shape{1, 2, 3, 3});
    for (auto& v : w.data()) v = r.uniform(-1, 1);
    Tape<double> tape;
    tape.backward(sum(broadcast_mul(dwt_hh(tape.parameter(p, 0)), tape.constant(w))));
    const auto& g = p[0].grad;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) {
                const double sign = ((y % 2) == (x % 2)) ? 0.5 : -0.5;
                EXPECT_DOUBLE_EQ(g(0, c, y, x), sign * w(0, c, y / 2, x / 2));
            }
}

TEST(DwtHH, FaultHookBreaksGradientCheck) {
    auto check = [] {
        Parameters<double> p;
        p.add("x", random_image(9, Shape{1, 1, 4, 4}));
        return check_gradients(p, [](Tape<double>& t, Parameters<double>& ps) {
            Var<double> y = dwt_hh(t.parameter(ps, 0));
            return sum(broadcast_mul(y, y));
        });
    };
    EXPECT_TRUE(check().ok());
    haar_gradient_fault() = true;
    const auto bad = check();
    haar_gradient_fault() = false;
    EXPECT_FALSE(bad.ok());
    EXPECT_FALSE(bad.failures.empty());
}
