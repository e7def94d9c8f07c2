#include <gtest/gtest.h>

#include <functional>

#include "cwtnet/gradcheck.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/resize.hpp"
#include "cwtnet/rng.hpp"

using namespace cwtnet;

namespace {

Tensor<double> rand_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
    Rng r(seed);
    Tensor<double> t(s);
    for (auto& v : t.data()) v = r.uniform(lo, hi);
    return t;
}

// Direct convolution with zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, std::size_t stride,
                          std::size_t pad) {
    const Shape xs = x.shape(), ws = w.shape();
    const std::size_t oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    Tensor<double> out(Shape{xs.n, ws.n, oh, ow});
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t co = 0; co < ws.n; ++co)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x0 = 0; x0 < ow; ++x0) {
                    double acc = b[co];
                    for (std::size_t ci = 0; ci < xs.c; ++ci)
                        for (std::size_t ky = 0; ky < ws.h; ++ky)
                            for (std::size_t kx = 0; kx < ws.w; ++kx) {
                                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(x0 * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w))
                                    continue;
                                acc += w(co, ci, ky, kx) * x(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                    out(n, co, y, x0) = acc;
                }
    return out;
}

GradCheckReport check_unary(const Tensor<double>& x0, const std::function<Var<double>(const Var<double>&)>& f) {
    Parameters<double> p;
    p.add("x", x0);
    GradCheckOptions opt;
    opt.step = 1e-6;
    return check_gradients(
        p,
        [&](Tape<double>& t, Parameters<double>& ps) {
            Var<double> y = f(t.parameter(ps, 0));
            Tensor<double> w = rand_tensor(y.shape(), 99);
            return sum(broadcast_mul(y, t.constant(w)));
        },
        opt);
}

} // namespace

TEST(Conv2d, MatchesDirectConvolution) {
    for (auto [k, stride, pad] : {std::array<std::size_t, 3>{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {5, 1, 2}, {2, 2, 0}}) {
        const auto x = rand_tensor(Shape{2, 3, 8, 8}, 1);
        const auto w = rand_tensor(Shape{4, 3, k, k}, 2);
        const auto b = rand_tensor(Shape{4, 1, 1, 1}, 3);
        const auto got = conv2d_forward(x, w, &b, stride, pad);
        const auto ref = naive_conv(x, w, b, stride, pad);
        ASSERT_EQ(got.shape(), ref.shape());
        EXPECT_LT(max_abs_diff(got, ref), 1e-12) << "k=" << k << " stride=" << stride;
    }
}

TEST(Conv2d, RejectsMismatchedOrEvenKernels) {
    const auto x = rand_tensor(Shape{1, 3, 8, 8}, 1);
    const Tensor<double>* no_bias = nullptr;
    EXPECT_THROW(conv2d_forward(x, rand_tensor(Shape{4, 2, 3, 3}, 2), no_bias, 1, 1), ShapeError);
    EXPECT_THROW(conv2d_forward(x, rand_tensor(Shape{4, 3, 4, 4}, 2), no_bias, 1, 1), ConfigError);
    EXPECT_THROW(conv2d_forward(x, rand_tensor(Shape{4, 3, 2, 2}, 2), no_bias, 1, 0), ConfigError);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
    Parameters<double> p;
    p.add("x", rand_tensor(Shape{2, 3, 7, 7}, 4));
    p.add("w", rand_tensor(Shape{4, 3, 3, 3}, 5));
    p.add("b", rand_tensor(Shape{4, 1, 1, 1}, 6));
    for (std::size_t stride : {1u, 2u}) {
        GradCheckOptions opt;
        opt.step = 1e-6;
        const auto rep = check_gradients(
            p,
            [&](Tape<double>& t, Parameters<double>& ps) {
                Var<double> y = conv2d(t.parameter(ps, 0), t.parameter(ps, 1),
                                       std::optional<Var<double>>(t.parameter(ps, 2)), stride, 1);
                return sum(broadcast_mul(y, t.constant(rand_tensor(y.shape(), 7))));
            },
            opt);
        EXPECT_TRUE(rep.ok()) << "stride " << stride << " max rel " << rep.max_rel;
    }
}

TEST(PixelShuffle, FollowsDepthToSpaceConvention) {
    // out(n, c, y*r + i, x*r + j) = in(n, c*r*r + i*r + j, y, x)
    const auto x = rand_tensor(Shape{1, 8, 3, 3}, 8);
    Tape<double> t(false);
    const auto y = pixel_shuffle(t.constant(x), 2).value();
    ASSERT_EQ(y.shape(), (Shape{1, 2, 6, 6}));
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t yy = 0; yy < 3; ++yy)
            for (std::size_t xx = 0; xx < 3; ++xx)
                for (std::size_t i = 0; i < 2; ++i)
                    for (std::size_t j = 0; j < 2; ++j)
                        EXPECT_EQ(y(0, c, yy * 2 + i, xx * 2 + j), x(0, c * 4 + i * 2 + j, yy, xx));
    EXPECT_THROW(pixel_shuffle(t.constant(rand_tensor(Shape{1, 6, 2, 2}, 1)), 2), ConfigError);
}

TEST(UnfoldFold, FoldOfUnfoldIsIdentityUnderCoverageAveraging) {
    const auto x = rand_tensor(Shape{2, 3, 5, 6}, 9);
    const auto cols = unfold_forward(x, 3, 1, 1);
    EXPECT_EQ(cols.shape(), (Shape{2, 27, 1, 30}));
    const auto back = fold_forward(cols, x.shape(), 3, 1, 1);
    EXPECT_LT(max_abs_diff(back, x), 1e-12);
}

TEST(UnfoldFold, CoverageCountsInteriorAndCorner) {
    const auto c = coverage_counts<double>(5, 5, 3, 1, 1);
    EXPECT_EQ(c[0], 4.0);
    EXPECT_EQ(c[2], 6.0);
    EXPECT_EQ(c[12], 9.0);
}

TEST(ElementwiseOps, GradientsMatchFiniteDifferences) {
    const auto x = rand_tensor(Shape{2, 4, 3, 3}, 10);
    EXPECT_TRUE(check_unary(x, [](const Var<double>& v) { return sigmoid(v); }).ok());
    EXPECT_TRUE(check_unary(x, [](const Var<double>& v) { return avg_pool_global(v); }).ok());
    EXPECT_TRUE(check_unary(x, [](const Var<double>& v) { return concat_channels(v, scale(v, 2.0)); }).ok());
    EXPECT_TRUE(check_unary(x, [](const Var<double>& v) { return broadcast_mul(v, avg_pool_global(v)); }).ok());
    EXPECT_TRUE(check_unary(x, [](const Var<double>& v) { return pixel_shuffle(v, 2); }).ok());
    EXPECT_TRUE(check_unary(x, [](const Var<double>& v) { return unfold(v, 3, 1, 1); }).ok());
    EXPECT_TRUE(check_unary(unfold_forward(x, 3, 1, 1), [&](const Var<double>& v) {
                    return fold(v, x.shape(), 3, 1, 1);
                }).ok());
}

TEST(Bicubic, KernelValues) {
    EXPECT_DOUBLE_EQ(cubic_kernel(0.0), 1.0);
    EXPECT_DOUBLE_EQ(cubic_kernel(1.0), 0.0);
    EXPECT_DOUBLE_EQ(cubic_kernel(2.0), 0.0);
    EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
    EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
    EXPECT_DOUBLE_EQ(cubic_kernel(-1.5), -0.0625);
}

TEST(Bicubic, OutputSizesAndConstantPreservation) {
    Tensor<double> c(Shape{1, 3, 12, 12}, 0.3);
    for (Ratio r : {Ratio{2, 1}, Ratio{1, 2}, Ratio{1, 4}, Ratio{4, 1}, Ratio{1, 3}}) {
        const auto y = resize_bicubic(c, r);
        EXPECT_EQ(y.shape().h, (12 * static_cast<std::size_t>(r.num) + r.den - 1) / r.den);
        for (double v : y.data()) EXPECT_NEAR(v, 0.3, 1e-12);
    }
    EXPECT_THROW(resize_bicubic(c, Ratio{0, 1}), ConfigError);
}

TEST(Bicubic, RotationBy180Commutes) {
    const auto x = rand_tensor(Shape{1, 3, 16, 16}, 11);
    auto rot = [](const Tensor<double>& t) {
        Tensor<double> o(t.shape());
        const Shape s = t.shape();
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t xx = 0; xx < s.w; ++xx) o(0, c, s.h - 1 - y, s.w - 1 - xx) = t(0, c, y, xx);
        return o;
    };
    for (Ratio r : {Ratio{1, 2}, Ratio{2, 1}, Ratio{1, 4}}) {
        EXPECT_LT(max_abs_diff(resize_bicubic(rot(x), r), rot(resize_bicubic(x, r))), 1e-12);
    }
}

TEST(Bicubic, UpscaleReproducesLinearRampAwayFromBorders) {
    Tensor<double> x(Shape{1, 1, 8, 8});
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t xx = 0; xx < 8; ++xx) x(0, 0, y, xx) = 0.1 * static_cast<double>(xx);
    const auto up = resize_bicubic(x, Ratio{2, 1});
    for (std::size_t xx = 4; xx < 12; ++xx) {
        const double src = (static_cast<double>(xx) + 0.5) / 2.0 - 0.5;
        EXPECT_NEAR(up(0, 0, 5, xx), 0.1 * src, 1e-12);
    }
}

TEST(Bicubic, BackwardIsAdjointOfForward) {
    for (Ratio r : {Ratio{2, 1}, Ratio{1, 2}}) {
        EXPECT_TRUE(check_unary(rand_tensor(Shape{1, 2, 6, 6}, 12), [r](const Var<double>& v) {
                        return resize_bicubic(v, r);
                    }).ok());
    }
}
