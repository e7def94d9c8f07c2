#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "cwtnet/autodiff.hpp"
#include "cwtnet/kernels.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/optim.hpp"
#include "cwtnet/parallel.hpp"
#include "cwtnet/rng.hpp"
#include "cwtnet/tensor.hpp"

using namespace cwtnet;

TEST(Rng, SameSeedSameStream) {
    Rng a(42, 3), b(42, 3), c(42, 4);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        EXPECT_NE(x, c.next_u64());
    }
}

TEST(Rng, UniformAndBelowRanges) {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(r.below(7), 7u);
    }
}

TEST(Rng, NormalMoments) {
    Rng r(9);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
    Rng r(5);
    r.shuffle(v);
    EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
}

TEST(Tensor, RejectsZeroDims) {
    EXPECT_THROW(Tensor<float>(Shape{1, 0, 2, 2}), ShapeError);
    EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, IndexingIsRowMajorNchw) {
    Tensor<int> t(Shape{2, 3, 4, 5});
    t(1, 2, 3, 4) = 7;
    EXPECT_EQ(t[t.size() - 1], 7);
    EXPECT_EQ(t.index(1, 0, 0, 0), 60u);
}

TEST(Tensor, SliceAndStackRoundTrip) {
    Tensor<float> t(Shape{3, 2, 2, 2});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
    std::vector<Tensor<float>> parts;
    for (std::size_t n = 0; n < 3; ++n) parts.push_back(slice_batch(t, n));
    EXPECT_TRUE(stack_batch(parts) == t);
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
    auto run = [](unsigned threads) {
        set_num_threads(threads);
        std::vector<double> out(64);
        parallel_for(out.size(), [&](std::size_t i) {
            double acc = 0;
            for (int k = 1; k < 1000; ++k) acc += 1.0 / (static_cast<double>(i) + k);
            out[i] = acc;
        });
        return out;
    };
    const auto a = run(1);
    const auto b = run(4);
    set_num_threads(0);
    EXPECT_EQ(a, b);
}

TEST(Parallel, PropagatesExceptions) {
    set_num_threads(3);
    EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                     if (i == 7) throw DataError("boom");
                 }),
                 DataError);
    set_num_threads(0);
}

TEST(Kernels, GemmMatchesNaiveTripleLoop) {
    Rng r(3);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 7, 19}, {8, 16, 33}, {13, 3, 64}}) {
        std::vector<double> a(m * k), b(k * n), c(m * n), ref(m * n);
        for (auto& v : a) v = r.uniform(-1, 1);
        for (auto& v : b) v = r.uniform(-1, 1);
        for (std::size_t i = 0; i < m * n; ++i) c[i] = ref[i] = r.uniform(-1, 1);
        kernels::gemm_acc(c.data(), a.data(), b.data(), m, k, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = ref[i * n + j];
                for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
                EXPECT_NEAR(c[i * n + j], acc, 1e-12);
            }
    }
}

TEST(Kernels, Im2colCol2imAdjoint) {
    // <im2col(x), y> == <x, col2im(y)>
    const auto g = kernels::ConvGeometry::make(2, 5, 6, 3, 2, 1);
    Rng r(4);
    std::vector<double> x(2 * 5 * 6), y(g.rows() * g.cols()), cx(y.size()), gy(x.size(), 0.0);
    for (auto& v : x) v = r.uniform(-1, 1);
    for (auto& v : y) v = r.uniform(-1, 1);
    kernels::im2col(x.data(), g, cx.data());
    kernels::col2im_acc(y.data(), g, gy.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gy[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Parameters, DuplicateAndUnknownNames) {
    Parameters<float> p;
    p.add("a", Tensor<float>(Shape{1, 1, 1, 2}));
    EXPECT_THROW(p.add("a", Tensor<float>(Shape{1, 1, 1, 1})), ConfigError);
    EXPECT_THROW((void)p.index_of("b"), UsageError);
    EXPECT_EQ(p.count(), 2u);
}

TEST(Tape, GradientOfSharedSubexpressionAccumulates) {
    Parameters<double> p;
    p.add("x", Tensor<double>(Shape{1, 1, 1, 3}, 2.0));
    Tape<double> tape;
    Var<double> x = tape.parameter(p, 0);
    Var<double> y = sum(add(scale(x, 3.0), broadcast_mul(x, x)));
    tape.backward(y);
    for (double g : p[0].grad.data()) EXPECT_DOUBLE_EQ(g, 3.0 + 2 * 2.0);
}

TEST(Tape, BackwardNeedsScalar) {
    Tape<double> tape;
    Var<double> v = tape.variable(Tensor<double>(Shape{1, 1, 1, 2}));
    EXPECT_THROW(tape.backward(v), UsageError);
}

TEST(Tape, DetachBlocksGradient) {
    Parameters<double> p;
    p.add("x", Tensor<double>(Shape{1, 1, 1, 2}, 1.5));
    Tape<double> tape;
    Var<double> x = tape.parameter(p, 0);
    tape.backward(sum(add(x, detach(scale(x, 5.0)))));
    for (double g : p[0].grad.data()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Parameters<float> p;
    p.add("w", Tensor<float>(Shape{1, 1, 2, 2}, 0.25f));
    AdamState<float> st(p);
    for (int i = 0; i < 10; ++i) adam_step(p, st, AdamConfig{});
    for (float v : p[0].value.data()) EXPECT_EQ(v, 0.25f);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
    Parameters<double> p;
    p.add("w", Tensor<double>(Shape{1, 1, 1, 1}, 0.0));
    AdamState<double> st(p);
    AdamConfig cfg;
    cfg.lr = 1e-3;
    double prev = 0;
    for (int i = 0; i < 2000; ++i) {
        p[0].grad[0] = 0.37;
        adam_step(p, st, cfg);
        const double delta = prev - p[0].value[0];
        prev = p[0].value[0];
        EXPECT_LE(delta, cfg.lr * (1 + 1e-6));
        if (i > 1000) {
            EXPECT_NEAR(delta, cfg.lr, 1e-6);
        }
    }
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
    auto run = [] {
        Parameters<float> p;
        p.add("w", Tensor<float>(Shape{1, 2, 3, 3}, 0.1f));
        AdamState<float> st(p);
        Rng r(8);
        for (int s = 0; s < 50; ++s) {
            for (auto& g : p[0].grad.data()) g = static_cast<float>(r.normal());
            adam_step(p, st, AdamConfig{});
        }
        return p[0].value;
    };
    EXPECT_TRUE(run() == run());
}
