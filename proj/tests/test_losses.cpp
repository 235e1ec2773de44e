#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "restore/losses.hpp"
#include "test_util.hpp"

using namespace restore;
using namespace restore::testing;
using D = BasicTensor<double>;

namespace {

template <class T>
RoutingStats<T> stats_from(std::vector<T> w, std::vector<double> s) {
    RoutingStats<T> st;
    const int n = static_cast<int>(w.size());
    st.w_totals = BasicTensor<T>({n}, std::move(w));
    st.s_totals = std::move(s);
    return st;
}

// Mean |[Re;Im]| of the naive DFT of (p - t), one plane at a time.
double brute_fft_loss(const D& p, const D& t) {
    const int planes = p.dim(0) * p.dim(1), H = p.dim(2), W = p.dim(3);
    double acc = 0;
    for (int q = 0; q < planes; ++q)
        for (int u = 0; u < H; ++u)
            for (int v = 0; v < W; ++v) {
                std::complex<double> f = 0;
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        const std::size_t i = (static_cast<std::size_t>(q) * H + y) * W + x;
                        const double ang = -2.0 * std::numbers::pi * (double(u * y) / H + double(v * x) / W);
                        f += (p.data()[i] - t.data()[i]) * std::polar(1.0, ang);
                    }
                acc += std::abs(f.real()) + std::abs(f.imag());
            }
    return acc / (2.0 * p.numel());
}

}  // namespace

TEST(Charbonnier, IdenticalInputsGiveEpsExactly) {
    auto p = random_tensor<float>({2, 3, 8, 8}, 1);
    EXPECT_EQ(charbonnier(p, p, 1e-3).item(), 1e-3f);
}

TEST(Charbonnier, ReducesToAbsoluteResidual) {
    EXPECT_DOUBLE_EQ(charbonnier(D::scalar(3.0), D::scalar(0.0), 0.0).item(), 3.0);
    EXPECT_NEAR(charbonnier(Tensor::scalar(-3.0f), Tensor::scalar(0.0f), 0.0).item(), 3.0f, 1e-6);
}

TEST(Charbonnier, GradientAtZeroResidualIsFinite) {
    auto t = random_tensor<double>({1, 2, 4, 4}, 2);
    auto p = t;
    p = D(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    p.set_requires_grad(true);
    backward(charbonnier(p, t, 1e-3));
    for (double g : p.grad()) {
        EXPECT_TRUE(std::isfinite(g));
        EXPECT_EQ(g, 0.0);
    }
    EXPECT_LT(finite_diff_check<double>([&](const D& v) { return charbonnier(v, t, 1e-3); }, p, kStepF64), kGradTol);
}

TEST(Charbonnier, GradientCheck) {
    for (unsigned s : kSeeds) {
        auto t = D({1, 3, 4, 4}, 0.5);
        auto p = random_tensor<double>({1, 3, 4, 4}, s, 0.2, 0.5);
        EXPECT_LT(finite_diff_check<double>([&](const D& v) { return charbonnier(v, t, 1e-3); }, p, kStepF64),
                  kGradTol);
    }
}

TEST(Charbonnier, AtLeastEps) {
    for (unsigned s : kSeeds) {
        auto p = random_tensor<float>({1, 3, 8, 8}, s), t = random_tensor<float>({1, 3, 8, 8}, s + 1);
        EXPECT_GT(charbonnier(p, t, 1e-3).item(), 1e-3f);
    }
    EXPECT_THROW(charbonnier(Tensor({2}), Tensor({3}), 1e-3), ShapeError);
}

TEST(Balance, UniformIsZero) {
    EXPECT_EQ(balance_loss(stats_from<float>({3, 3, 3, 3}, {8, 8, 8, 8}), 1e-8).item(), 0.0f);
}

TEST(Balance, HandEvaluatedTwoExperts) {
    // W=(0,2): mean 1, sd 1, so sd/mean^2 = 1; S uniform adds 0.
    EXPECT_DOUBLE_EQ(balance_loss(stats_from<double>({0, 2}, {4, 4}), 0.0).item(), 1.0);
    // Squared variant: var 1 / mean^2 1 = 1 as well; (0,4) separates them.
    EXPECT_DOUBLE_EQ(balance_loss(stats_from<double>({0, 4}, {4, 4}), 0.0).item(), 0.5);
    EXPECT_DOUBLE_EQ(balance_loss(stats_from<double>({0, 4}, {4, 4}), 0.0, true).item(), 1.0);
}

TEST(Balance, DecreasesTowardUniform) {
    double prev = 1e300;
    for (double a : {0.2, 0.4, 0.6, 0.8, 0.95, 1.0}) {
        const double v = balance_loss(stats_from<double>({a, 2.0 - a}, {3, 5}), 1e-8).item();
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Balance, NonNegativeAndZeroOnlyWhenConstant) {
    for (unsigned s : kSeeds) {
        auto w = uniform_tensor<double>({4}, s, 0.0, 10.0);
        const double v = balance_loss(stats_from<double>({w.data().begin(), w.data().end()}, {1, 2, 3, 4}), 1e-8).item();
        EXPECT_GT(v, 0.0);
    }
    EXPECT_GT(balance_loss(stats_from<double>({2, 2}, {1, 3}), 1e-8).item(), 0.0);
    EXPECT_THROW(balance_loss(RoutingStats<float>{}, 1e-8), std::invalid_argument);
}

TEST(Balance, GradientOnlyThroughConfidence) {
    for (unsigned s : kSeeds) {
        auto w = uniform_tensor<double>({4}, s, 1.0, 3.0);
        EXPECT_LT(finite_diff_check<double>(
                      [&](const D& v) {
                          RoutingStats<double> st;
                          st.w_totals = v;
                          st.s_totals = {1, 2, 2, 7};
                          return balance_loss(st, 1e-8);
                      },
                      w, kStepF64),
                  kGradTol);
    }
}

TEST(FftLoss, IdenticalIsZero) {
    auto p = random_tensor<float>({1, 3, 8, 8}, 1);
    EXPECT_EQ(fft_loss(p, p).item(), 0.0f);
}

TEST(FftLoss, ConstantShiftHitsOnlyDc) {
    for (double c : {0.1, 0.25, -0.3}) {
        auto t = random_tensor<double>({1, 1, 4, 4}, 3);
        auto p = add(t, D(t.shape(), c));
        EXPECT_NEAR(fft_loss(p, t).item(), std::abs(c) / 2.0, 1e-12);
        EXPECT_NEAR(brute_fft_loss(p, t), std::abs(c) / 2.0, 1e-12);
    }
}

TEST(FftLoss, MatchesBruteForceDft) {
    for (unsigned s : kSeeds) {
        auto p = random_tensor<double>({2, 3, 8, 4}, s), t = random_tensor<double>({2, 3, 8, 4}, s + 10);
        EXPECT_NEAR(fft_loss(p, t).item(), brute_fft_loss(p, t), 1e-10);
    }
}

TEST(FftLoss, GradientCheck) {
    for (unsigned s : kSeeds) {
        auto p = random_tensor<double>({1, 1, 4, 4}, s), t = random_tensor<double>({1, 1, 4, 4}, s + 10);
        EXPECT_LT(finite_diff_check<double>([&](const D& v) { return fft_loss(v, t); }, p, kStepF64), kGradTol);
    }
}

TEST(FftLoss, ZeroOnlyForEqualInputs) {
    for (unsigned s : kSeeds) {
        auto p = random_tensor<float>({1, 3, 8, 8}, s);
        auto q = p;
        q = Tensor(p.shape(), std::vector<float>(p.data().begin(), p.data().end()));
        q.data()[5 + s] += 1e-3f;
        EXPECT_GT(fft_loss(p, q).item(), 1e-6f);
    }
    EXPECT_THROW(fft_loss(Tensor({1, 1, 6, 6}), Tensor({1, 1, 6, 6})), ShapeError);
}

TEST(TotalLoss, WeightsZeroGivesCharbonnier) {
    LossWeights w;
    w.lambda1 = w.lambda2 = 0;
    auto p = random_tensor<float>({1, 3, 8, 8}, 1), t = random_tensor<float>({1, 3, 8, 8}, 2);
    auto r = total_loss(p, t, {stats_from<float>({1, 5}, {2, 9})}, w);
    EXPECT_EQ(r.total.item(), r.charbonnier.item());
}

TEST(TotalLoss, IdentityWithUniformRouting) {
    auto p = random_tensor<float>({1, 3, 8, 8}, 1);
    auto r = total_loss(p, p, {stats_from<float>({4, 4, 4, 4}, {8, 8, 8, 8})}, LossWeights{});
    EXPECT_EQ(r.total.item(), 1e-3f);
}

TEST(TotalLoss, ReportDecomposition) {
    const LossWeights w;
    EXPECT_DOUBLE_EQ(w.lambda1, 0.01);
    EXPECT_DOUBLE_EQ(w.lambda2, 0.1);
    for (unsigned s : kSeeds) {
        auto p = random_tensor<float>({2, 3, 8, 8}, s), t = random_tensor<float>({2, 3, 8, 8}, s + 3);
        std::vector<RoutingStats<float>> st{stats_from<float>({1, 5, 3}, {2, 9, 1}), stats_from<float>({2, 2, 3}, {4, 4, 4})};
        auto r = total_loss(p, t, st, w);
        const double expect = double(r.charbonnier.item()) + 0.01 * r.balance.item() + 0.1 * r.fft.item();
        EXPECT_NEAR(r.total.item(), expect, 1e-6);
        EXPECT_NEAR(r.balance.item(), balance_loss(st[0], 1e-8).item() + balance_loss(st[1], 1e-8).item(), 1e-6);
    }
    LossWeights bad;
    bad.lambda1 = -1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(TotalLoss, GradientCheck) {
    for (unsigned s : kSeeds) {
        // Residuals kept well above eps, where the Charbonnier curvature is ~1/eps.
        auto p = random_tensor<double>({1, 3, 4, 4}, s);
        auto t = add(p, uniform_tensor<double>({1, 3, 4, 4}, s + 3, 0.2, 1.0));
        EXPECT_LT(finite_diff_check<double>([&](const D& v) {
                      RoutingStats<double> st;
                      st.w_totals = scale(sum_per_channel(reshape(v, {1, 3, 4, 4})), 0.1);
                      st.s_totals = {1, 2, 3};
                      return total_loss(v, t, {st}, LossWeights{}).total;
                  }, p, kStepF64),
                  kGradTol);
    }
}
