#include <gtest/gtest.h>

#include <cmath>

#include "restore/ops.hpp"
#include "restore/optim.hpp"

using namespace restore;

TEST(Schedule, WarmupEndpoints) {
    WarmupCosine s{2e-4, 100, 1000};
    EXPECT_DOUBLE_EQ(s(0), 2e-4 / 100);
    EXPECT_DOUBLE_EQ(s(99), 2e-4);
    EXPECT_DOUBLE_EQ(s(100), 2e-4);
    EXPECT_NEAR(s(1000), 0.0, 1e-18);
    EXPECT_NEAR(s(550), 1e-4, 1e-12);
}

TEST(Schedule, MonotoneInEachPhase) {
    WarmupCosine s{1e-3, 20, 200, 1e-5};
    for (long t = 1; t < 20; ++t) EXPECT_GT(s(t), s(t - 1));
    for (long t = 21; t <= 200; ++t) EXPECT_LT(s(t), s(t - 1));
    EXPECT_NEAR(s(200), 1e-5, 1e-15);
}

TEST(AdamW, MatchesScalarReference) {
    Tensor w({2}, {0.5f, -1.0f});
    w.set_requires_grad(true);
    AdamW opt({{"w", w}}, {});
    double ref[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
    const double lr = 1e-2;
    for (int t = 1; t <= 5; ++t) {
        backward(sum(mul(mul(w, w), Tensor({2}, {1.0f, 3.0f}))));
        for (int i = 0; i < 2; ++i) {
            const double g = 2.0 * ref[i] * (i ? 3.0 : 1.0);
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            ref[i] -= lr * 1e-4 * ref[i];
            ref[i] -= lr * (m[i] / (1 - std::pow(0.9, t))) / (std::sqrt(v[i] / (1 - std::pow(0.999, t))) + 1e-8);
        }
        opt.step(lr);
        for (int i = 0; i < 2; ++i) EXPECT_NEAR(w.data()[i], ref[i], 1e-6);
        EXPECT_FALSE(w.has_grad());
    }
}

TEST(AdamW, FirstStepMovesByLearningRate) {
    Tensor w({3}, {1.0f, 2.0f, -3.0f});
    w.set_requires_grad(true);
    AdamW opt({{"w", w}}, {0.9, 0.999, 1e-8, 0.0});
    backward(sum(scale(w, 5.0f)));
    opt.step(0.1);
    EXPECT_NEAR(w.data()[0], 0.9f, 1e-6);
    EXPECT_NEAR(w.data()[2], -3.1f, 1e-6);
}

TEST(AdamW, DecayIsDecoupled) {
    Tensor w({1}, {2.0f});
    w.set_requires_grad(true);
    AdamW opt({{"w", w}}, {0.9, 0.999, 1e-8, 0.5});
    opt.step(0.1);  // no gradient at all
    EXPECT_NEAR(w.data()[0], 2.0f * (1 - 0.05f), 1e-6);
}

TEST(AdamW, MinimizesQuadratic) {
    Tensor w({4}, {3.0f, -2.0f, 0.5f, 1.0f});
    w.set_requires_grad(true);
    AdamW opt({{"w", w}}, {});
    for (int t = 0; t < 2000; ++t) {
        backward(sum(mul(w, w)));
        opt.step(1e-2);
    }
    for (float v : w.data()) EXPECT_NEAR(v, 0.0f, 1e-2);
}
