#include <gtest/gtest.h>

#include <cmath>

#include "restore/adec.hpp"
#include "test_util.hpp"

using namespace restore;
using namespace restore::testing;
using D = BasicTensor<double>;

namespace {

AdecConfig small_config(int c, int n, int k) {
    AdecConfig cfg;
    cfg.channels = c;
    cfg.experts = n;
    cfg.top_k = k;
    cfg.feature_dim = 8;
    cfg.similarity_dim = 3;
    return cfg;
}

template <class T>
PriorBundle<T> random_prior(const AdecConfig& cfg, int batch, unsigned seed) {
    auto logits = random_tensor<T>({batch, cfg.similarity_dim}, seed + 1);
    return {random_tensor<T>({batch, cfg.feature_dim}, seed), softmax_axis(logits, 1)};
}

// Scales every weight so routing logits and expert outputs are well spread.
AdecParams<double> lively_adec(const AdecConfig& cfg, unsigned seed) {
    Rng rng(seed);
    auto p = init_adec<double>(cfg, rng);
    unsigned k = 0;
    p.for_each_param([&](const std::string& name, D& t) {
        if (name.find("gamma") != std::string::npos || name.find("temperature") != std::string::npos) return;
        t = random_tensor<double>(t.shape(), seed * 1000 + ++k, 0.4);
    }, "adec");
    return p;
}

// Identity through gelu: gelu(z) - gelu(-z) = z.
template <class T>
ExpertParams<T> identity_expert(int c) {
    std::vector<T> w1(2 * c * c, T(0)), w2(2 * c * c, T(0));
    for (int i = 0; i < c; ++i) {
        w1[i * c + i] = T(1);
        w1[(c + i) * c + i] = T(-1);
        w2[i * 2 * c + i] = T(1);
        w2[i * 2 * c + c + i] = T(-1);
    }
    return {{BasicTensor<T>({2 * c, c}, w1), BasicTensor<T>({2 * c}, T(0))},
            {BasicTensor<T>({c, 2 * c}, w2), BasicTensor<T>({c}, T(0))}};
}

// Every expert on every pixel, masked to the selected slots.
template <class T>
BasicTensor<T> dense_oracle(const BasicTensor<T>& x, const RoutingDecision<T>& d, const ExpertLibrary<T>& lib) {
    const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<T> out(x.numel(), T(0));
    for (int id = 0; id <= lib.size(); ++id) {
        auto y = expert_forward(x, lib.at(id));
        for (int b = 0; b < B; ++b)
            for (int k = 0; k < d.slots; ++k)
                for (int i = 0; i < HW; ++i) {
                    const std::size_t slot = (static_cast<std::size_t>(b) * d.slots + k) * HW + i;
                    if (d.ids[slot] != id) continue;
                    for (int c = 0; c < C; ++c) {
                        const std::size_t at = (static_cast<std::size_t>(b) * C + c) * HW + i;
                        out[at] += d.weights.data()[slot] * y.data()[at];
                    }
                }
    }
    return BasicTensor<T>(x.shape(), std::move(out));
}

}  // namespace

TEST(Dacp, OutputShape) {
    auto cfg = small_config(8, 4, 2);
    Rng rng(1);
    auto p = init_adec<float>(cfg, rng);
    auto x = random_tensor<float>({2, 8, 8, 4}, 1);
    EXPECT_EQ(dacp_forward(random_prior<float>(cfg, 2, 1), x, cfg, p.dacp).shape(), x.shape());
}

TEST(Dacp, ZeroPriorGivesOutputBias) {
    auto cfg = small_config(4, 2, 1);
    Rng rng(2);
    auto p = init_adec<float>(cfg, rng);
    p.dacp.wp2.bias = random_tensor<float>({4}, 2);
    PriorBundle<float> zero{Tensor({1, 8}, 0.0f), Tensor({1, 3}, 0.0f)};
    auto out = dacp_forward(zero, random_tensor<float>({1, 4, 4, 4}, 3), cfg, p.dacp);
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(out.data()[c * 16 + i], p.dacp.wp2.bias.data()[c]);
}

TEST(Dacp, DimensionMismatchRejected) {
    auto cfg = small_config(4, 2, 1);
    Rng rng(2);
    auto p = init_adec<float>(cfg, rng);
    PriorBundle<float> wrong{Tensor({1, 5}, 0.0f), Tensor({1, 3}, 0.0f)};
    EXPECT_THROW(dacp_forward(wrong, random_tensor<float>({1, 4, 4, 4}, 3), cfg, p.dacp), ShapeError);
}

TEST(Dacp, GradientCheck) {
    auto cfg = small_config(4, 2, 1);
    for (unsigned s : kSeeds) {
        auto p = lively_adec(cfg, s);
        auto prior = random_prior<double>(cfg, 1, s);
        auto x = random_tensor<double>({1, 4, 4, 4}, s);
        EXPECT_LT(check_op([&](const D& v) { return dacp_forward(prior, v, cfg, p.dacp); }, x, s), kGradTol);
        EXPECT_LT(check_op([&](const D& f) {
                      return dacp_forward(PriorBundle<double>{f, prior.similarity}, x, cfg, p.dacp);
                  }, prior.features, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p.dacp;
                      q.wp1.weight = w;
                      return dacp_forward(prior, x, cfg, q);
                  }, p.dacp.wp1.weight, s), kGradTol);
    }
}

TEST(Routing, ZeroRouterIsUniform) {
    auto cfg = small_config(4, 4, 2);
    Rng rng(1);
    auto p = init_adec<float>(cfg, rng);
    p.router.wr.weight = Tensor({4, 8}, 0.0f);
    auto s = routing_scores(random_tensor<float>({1, 4, 4, 4}, 1), random_tensor<float>({1, 4, 4, 4}, 2), p.router);
    ASSERT_EQ(s.shape(), (Shape{1, 4, 4, 4}));
    for (float v : s.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Routing, SimplexPerPixel) {
    auto cfg = small_config(4, 4, 2);
    for (unsigned seed : kSeeds) {
        Rng rng(seed);
        auto p = init_adec<float>(cfg, rng);
        p.router.wr.weight = random_tensor<float>({4, 8}, seed, 3.0);
        auto s = routing_scores(random_tensor<float>({2, 4, 8, 8}, seed), random_tensor<float>({2, 4, 8, 8}, seed + 9),
                                p.router);
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < 64; ++i) {
                double total = 0;
                for (int n = 0; n < 4; ++n) total += s.data()[(b * 4 + n) * 64 + i];
                EXPECT_NEAR(total, 1.0, 1e-6);
            }
    }
}

TEST(Routing, GradientCheck) {
    auto cfg = small_config(4, 4, 2);
    for (unsigned s : kSeeds) {
        auto p = lively_adec(cfg, s);
        auto prior_map = random_tensor<double>({1, 4, 4, 4}, s);
        auto x = random_tensor<double>({1, 4, 4, 4}, s + 5);
        EXPECT_LT(check_op([&](const D& v) { return routing_scores(v, x, p.router); }, prior_map, s), kGradTol);
        EXPECT_LT(check_op([&](const D& v) { return routing_scores(prior_map, v, p.router); }, x, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p.router;
                      q.wr.weight = w;
                      return routing_scores(prior_map, x, q);
                  }, p.router.wr.weight, s), kGradTol);
    }
}

TEST(SelectExperts, ScalarOracleExample) {
    D scores({1, 3, 1, 1}, {0.5, 0.3, 0.2});
    auto d = select_experts(scores, 2);
    ASSERT_EQ(d.slots, 3);
    EXPECT_EQ(d.id(0, 0, 0, 0), 3);
    EXPECT_EQ(d.id(0, 1, 0, 0), 0);
    EXPECT_EQ(d.id(0, 2, 0, 0), 1);
    const double z = std::exp(0.5) + std::exp(0.3) + std::exp(0.2) + std::exp(1.0);
    EXPECT_NEAR(d.weights.data()[0], std::exp(1.0) / z, 1e-12);
    EXPECT_NEAR(d.weights.data()[1], std::exp(0.5) / z, 1e-12);
    EXPECT_NEAR(d.weights.data()[2], std::exp(0.3) / z, 1e-12);
    // Values pinned from the scalar oracle.
    EXPECT_NEAR(d.weights.data()[0], 0.391781, 1e-6);
    EXPECT_NEAR(d.weights.data()[1], 0.237627, 1e-6);
    EXPECT_NEAR(d.weights.data()[2], 0.194553, 1e-6);
}

TEST(SelectExperts, SingleExpertEqualWeights) {
    auto d = select_experts(Tensor({1, 1, 1, 1}, {1.0f}), 1);
    EXPECT_EQ(d.id(0, 0, 0, 0), 1);
    EXPECT_EQ(d.id(0, 1, 0, 0), 0);
    EXPECT_FLOAT_EQ(d.weights.data()[0], 0.5f);
    EXPECT_FLOAT_EQ(d.weights.data()[1], 0.5f);
}

TEST(SelectExperts, TiesGoToLowerIndex) {
    auto d = select_experts(Tensor({1, 4, 2, 2}, 0.25f), 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            EXPECT_EQ(d.id(0, 0, y, x), 4);
            EXPECT_EQ(d.id(0, 1, y, x), 0);
            EXPECT_EQ(d.id(0, 2, y, x), 1);
        }
}

TEST(SelectExperts, RejectsKAboveN) {
    EXPECT_THROW(select_experts(Tensor({1, 2, 2, 2}, 0.5f), 3), std::invalid_argument);
    EXPECT_THROW(select_experts(Tensor({1, 2, 2, 2}, 0.5f), 0), std::invalid_argument);
}

TEST(SelectExperts, WeightsCarryGradient) {
    for (unsigned s : kSeeds) {
        auto scores = softmax_axis(random_tensor<double>({1, 4, 3, 3}, s, 2.0), 1);
        EXPECT_LT(check_op([](const D& v) { return select_experts(v, 2).weights; }, scores, s), kGradTol);
    }
}

TEST(SelectExperts, SharedAlwaysSelectedNoDuplicates) {
    // 4 x 64 x 64 = 16384 pixels per seed.
    for (unsigned s : kSeeds) {
        auto scores = softmax_axis(random_tensor<float>({4, 4, 64, 64}, s, 4.0), 1);
        auto d = select_experts(scores, 2);
        for (int b = 0; b < 4; ++b)
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    EXPECT_EQ(d.id(b, 0, y, x), 4);
                    int a = d.id(b, 1, y, x), c = d.id(b, 2, y, x);
                    ASSERT_NE(a, c);
                    ASSERT_LT(a, 4);
                    ASSERT_LT(c, 4);
                }
        for (float w : d.weights.data()) {
            EXPECT_GT(w, 0.0f);
            EXPECT_LT(w, 1.0f);
        }
    }
}

TEST(Aggregate, IdentityExpertsScaleBySelectedWeight) {
    const int c = 4;
    ExpertLibrary<double> lib;
    for (int i = 0; i < 3; ++i) lib.specialized.push_back(identity_expert<double>(c));
    lib.shared = identity_expert<double>(c);
    auto x = random_tensor<double>({1, c, 4, 4}, 1);
    auto d = select_experts(softmax_axis(random_tensor<double>({1, 3, 4, 4}, 2), 1), 2);
    auto out = aggregate_experts(x, d, lib);
    for (int i = 0; i < 16; ++i) {
        double wsum = 0;
        for (int k = 0; k < 3; ++k) wsum += d.weights.data()[k * 16 + i];
        for (int ch = 0; ch < c; ++ch) EXPECT_NEAR(out.data()[ch * 16 + i], wsum * x.data()[ch * 16 + i], 1e-12);
    }
}

TEST(Aggregate, SingleSharedExpertEqualsExpert) {
    Rng rng(3);
    ExpertLibrary<float> lib;
    lib.shared = init_expert<float>(4, rng);
    lib.shared.fc1.weight = random_tensor<float>({8, 4}, 3);
    lib.specialized.push_back(lib.shared);
    auto x = random_tensor<float>({1, 4, 4, 4}, 4);
    auto d = select_experts(Tensor({1, 1, 4, 4}, 1.0f), 1);
    auto out = aggregate_experts(x, d, lib);
    auto ref = expert_forward(x, lib.shared);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(out.data()[i], ref.data()[i], 1e-6);
}

TEST(Aggregate, MatchesDenseOracle) {
    for (int n : {1, 2, 4}) {
        for (unsigned s : kSeeds) {
            AdecConfig cfg = small_config(4, n, std::min(2, n));
            Rng rng(s);
            auto p = init_adec<float>(cfg, rng);
            for (auto& e : p.experts.specialized) e.fc1.weight = random_tensor<float>({8, 4}, s + n, 0.5);
            auto x = random_tensor<float>({2, 4, 8, 8}, s);
            auto d = select_experts(softmax_axis(random_tensor<float>({2, n, 8, 8}, s + 1), 1), cfg.top_k);
            auto sparse = aggregate_experts(x, d, p.experts);
            auto dense = dense_oracle(x, d, p.experts);
            for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(sparse.data()[i], dense.data()[i], 1e-6);
        }
    }
}

TEST(Aggregate, InvalidIndexRejected) {
    Rng rng(1);
    ExpertLibrary<float> lib;
    lib.specialized.push_back(init_expert<float>(4, rng));
    lib.shared = init_expert<float>(4, rng);
    auto d = select_experts(Tensor({1, 1, 2, 2}, 1.0f), 1);
    d.ids[0] = 5;
    EXPECT_THROW(aggregate_experts(random_tensor<float>({1, 4, 2, 2}, 1), d, lib), std::out_of_range);
}

TEST(Aggregate, GradientCheck) {
    auto cfg = small_config(4, 3, 2);
    for (unsigned s : kSeeds) {
        auto p = lively_adec(cfg, s);
        auto x = random_tensor<double>({1, 4, 4, 4}, s);
        auto d = select_experts(softmax_axis(random_tensor<double>({1, 3, 4, 4}, s + 1), 1), 2);
        EXPECT_LT(check_op([&](const D& v) { return aggregate_experts(v, d, p.experts); }, x, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto lib = p.experts;
                      lib.specialized[1].fc1.weight = w;
                      return aggregate_experts(x, d, lib);
                  }, p.experts.specialized[1].fc1.weight, s), kGradTol);
    }
}

TEST(Adec, ShapeAndSelectionCount) {
    AdecConfig cfg = small_config(8, 4, 2);
    cfg.feature_dim = 16;
    cfg.heads = 2;
    for (unsigned s : kSeeds) {
        Rng rng(s);
        auto p = init_adec<float>(cfg, rng);
        auto x = random_tensor<float>({1, 8, 8, 8}, s);
        auto r = adec_forward(x, random_prior<float>(cfg, 1, s), cfg, p);
        EXPECT_EQ(r.out.shape(), x.shape());
        ASSERT_EQ(r.stats.experts(), 4);
        double total = 0;
        for (double v : r.stats.s_totals) total += v;
        EXPECT_EQ(total, 2.0 * 8 * 8);
        for (int i = 0; i < 64; ++i) {
            float col = 0;
            for (int n = 0; n < 4; ++n) {
                const float v = r.stats.selection.data()[n * 64 + i];
                EXPECT_TRUE(v == 0.0f || v == 1.0f);
                col += v;
            }
            EXPECT_EQ(col, 2.0f);
        }
        double wsum = 0;
        for (float v : r.stats.w_totals.data()) wsum += v;
        EXPECT_NEAR(wsum, 64.0, 1e-3);
    }
}

TEST(Adec, GradientCheck) {
    auto cfg = small_config(4, 2, 1);
    for (unsigned s : kSeeds) {
        auto p = lively_adec(cfg, s);
        auto prior = random_prior<double>(cfg, 1, s);
        auto x = random_tensor<double>({1, 4, 4, 4}, s);
        auto run = [&](const D& v, const AdecParams<double>& q) { return adec_forward(v, prior, cfg, q).out; };
        EXPECT_LT(check_op([&](const D& v) { return run(v, p); }, x, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p;
                      q.router.wr.weight = w;
                      return run(x, q);
                  }, p.router.wr.weight, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p;
                      q.experts.shared.fc2.weight = w;
                      return run(x, q);
                  }, p.experts.shared.fc2.weight, s), kGradTol);
        // The differentiable balance statistic.
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p;
                      q.router.wr.weight = w;
                      return adec_forward(x, prior, cfg, q).stats.w_totals;
                  }, p.router.wr.weight, s), kGradTol);
    }
}

TEST(Adec, PermutingExpertsLeavesOutputUnchanged) {
    AdecConfig cfg = small_config(4, 3, 2);
    for (unsigned s : kSeeds) {
        Rng rng(s);
        auto p = init_adec<float>(cfg, rng);
        p.router.wr.weight = random_tensor<float>({3, 8}, s, 2.0);
        p.router.wr.bias = random_tensor<float>({3}, s + 1);
        for (auto& e : p.experts.specialized) e.fc1.weight = random_tensor<float>({8, 4}, s + 7 * (&e - &p.experts.specialized[0]), 0.5);
        auto x = random_tensor<float>({1, 4, 8, 8}, s);
        auto prior = random_prior<float>(cfg, 1, s);
        auto base = adec_forward(x, prior, cfg, p);

        const int perm[3] = {2, 0, 1};
        auto q = p;
        std::vector<float> w(24), b(3);
        for (int n = 0; n < 3; ++n) {
            q.experts.specialized[n] = p.experts.specialized[perm[n]];
            for (int j = 0; j < 8; ++j) w[n * 8 + j] = p.router.wr.weight.data()[perm[n] * 8 + j];
            b[n] = p.router.wr.bias.data()[perm[n]];
        }
        q.router.wr.weight = Tensor({3, 8}, w);
        q.router.wr.bias = Tensor({3}, b);
        auto permuted = adec_forward(x, prior, cfg, q);
        for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(base.out.data()[i], permuted.out.data()[i], 1e-5);
        for (int n = 0; n < 3; ++n) EXPECT_EQ(permuted.stats.s_totals[n], base.stats.s_totals[perm[n]]);
    }
}

TEST(Adec, ConfigValidation) {
    EXPECT_THROW(small_config(4, 2, 3).validate(), std::invalid_argument);
    Rng rng(1);
    EXPECT_THROW(init_adec<float>(small_config(4, 2, 3), rng), std::invalid_argument);
}
