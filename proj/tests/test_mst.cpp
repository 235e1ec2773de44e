#include <gtest/gtest.h>

#include "restore/mst.hpp"
#include "test_util.hpp"

using namespace restore;
using namespace restore::testing;
using D = BasicTensor<double>;

namespace {

template <class T>
void zero_all(MstParams<T>& p) {
    p.for_each_param([](const std::string&, BasicTensor<T>& t) { std::fill(t.data().begin(), t.data().end(), T(0)); },
                     "mst");
}

// Randomizes weights at a scale where gates and attention are far from flat.
MstParams<double> lively_params(const MstConfig& cfg, unsigned seed) {
    Rng rng(seed);
    auto p = init_mst<double>(cfg, rng);
    unsigned k = 0;
    p.for_each_param([&](const std::string& name, D& t) {
        if (name.find("gamma") != std::string::npos || name.find("temperature") != std::string::npos) return;
        t = random_tensor<double>(t.shape(), seed * 100 + ++k, 0.4);
    }, "mst");
    return p;
}

}  // namespace

TEST(Msa, SaturatedGatesReduceToPlainAttention) {
    MstConfig cfg(8, 2);
    Rng rng(5);
    auto p = init_msa<double>(cfg, rng);
    p.wl1.weight = random_tensor<double>({8, 8}, 6, 0.5);
    p.wd = D({8, 3, 3}, 0.0);
    p.wd_bias = D({8}, 60.0);
    p.wl2.weight = D({8, 8}, 0.0);
    p.wl2.bias = D({8}, 60.0);
    auto x = random_tensor<double>({1, 8, 6, 6}, 7);

    auto gated = msa_forward(x, cfg, p);
    auto plain = conv_pointwise(mdta_forward(conv_pointwise(x, p.wl1.weight, p.wl1.bias), cfg.mdta(), p.mdta),
                                p.wl3.weight, p.wl3.bias);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(gated.data()[i], plain.data()[i], 1e-5);
}

TEST(Msa, ClosedOutputGateAnnihilates) {
    MstConfig cfg(4, 1);
    for (unsigned s : kSeeds) {
        Rng rng(s);
        auto p = init_msa<float>(cfg, rng);
        p.wl2.weight = Tensor({4, 4}, 0.0f);
        p.wl2.bias = Tensor({4}, -120.0f);
        auto y = msa_forward(random_tensor<float>({1, 4, 5, 5}, s, 10.0), cfg, p);
        for (float v : y.data()) EXPECT_NEAR(v, 0.0f, 1e-30f);
    }
}

TEST(Msa, GradientCheck) {
    MstConfig cfg(4, 1);
    for (unsigned s : kSeeds) {
        auto p = lively_params(cfg, s);
        auto x = random_tensor<double>({1, 4, 4, 4}, s);
        EXPECT_LT(check_op([&](const D& v) { return msa_forward(v, cfg, p.msa); }, x, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p.msa;
                      q.wd = w;
                      return msa_forward(x, cfg, q);
                  }, p.msa.wd, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p.msa;
                      q.wl2.weight = w;
                      return msa_forward(x, cfg, q);
                  }, p.msa.wl2.weight, s), kGradTol);
    }
}

TEST(Mst, ZeroParametersGiveIdentity) {
    MstConfig cfg(8, 2);
    Rng rng(1);
    auto p = init_mst<float>(cfg, rng);
    zero_all(p);
    auto x = random_tensor<float>({2, 8, 8, 8}, 1);
    auto y = mst_forward(x, cfg, p);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Mst, ZeroedOutputProjectionsGiveIdentity) {
    MstConfig cfg(8, 2);
    Rng rng(2);
    auto p = init_mst<float>(cfg, rng);
    p.msa.wl3.weight = Tensor({8, 8}, 0.0f);
    p.gdfn.out.weight = Tensor({8, cfg.gdfn.hidden()}, 0.0f);
    auto x = random_tensor<float>({1, 8, 8, 8}, 2);
    auto y = mst_forward(x, cfg, p);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Mst, ShapePreserved) {
    for (int c : {4, 8, 16}) {
        MstConfig cfg(c, c >= 8 ? 2 : 1);
        Rng rng(static_cast<std::uint64_t>(c));
        auto p = init_mst<float>(cfg, rng);
        auto x = random_tensor<float>({1, c, 8, 4}, 3);
        EXPECT_EQ(mst_forward(x, cfg, p).shape(), x.shape());
    }
}

TEST(Mst, GradientCheck) {
    MstConfig cfg(4, 1);
    for (unsigned s : kSeeds) {
        auto p = lively_params(cfg, s);
        auto x = random_tensor<double>({1, 4, 4, 4}, s);
        EXPECT_LT(check_op([&](const D& v) { return mst_forward(v, cfg, p); }, x, s), kGradTol);
        EXPECT_LT(check_op([&](const D& w) {
                      auto q = p;
                      q.msa.wl1.weight = w;
                      return mst_forward(x, cfg, q);
                  }, p.msa.wl1.weight, s), kGradTol);
    }
}

TEST(Mst, ConfigValidation) {
    EXPECT_THROW(MstConfig(6, 4).validate(), std::invalid_argument);
    MstConfig bad(8, 2);
    bad.gdfn.channels = 4;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    Rng rng(1);
    auto p = init_mst<float>(MstConfig(8, 2), rng);
    EXPECT_THROW(mst_forward(random_tensor<float>({1, 4, 4, 4}, 1), MstConfig(8, 2), p), ShapeError);
}

TEST(GateMap, ZeroParametersGiveHalf) {
    MstConfig cfg(8, 2);
    Rng rng(1);
    auto p = init_mst<float>(cfg, rng);
    zero_all(p);
    auto g = mst_gate_map(random_tensor<float>({1, 8, 8, 8}, 1), p);
    ASSERT_EQ(g.shape(), (Shape{1, 1, 8, 8}));
    for (float v : g.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(GateMap, StrictlyInsideUnitInterval) {
    MstConfig cfg(8, 2);
    for (unsigned s : kSeeds) {
        Rng rng(s);
        auto p = init_mst<float>(cfg, rng);
        p.msa.wl2.weight = random_tensor<float>({8, 8}, s, 2.0);
        auto g = mst_gate_map(random_tensor<float>({2, 8, 8, 8}, s), p);
        for (float v : g.data()) {
            EXPECT_GT(v, 0.0f);
            EXPECT_LT(v, 1.0f);
        }
    }
}

TEST(GateMap, EqualsChannelMeanOfGate) {
    MstConfig cfg(4, 1);
    auto p = lively_params(cfg, 4);
    auto x = random_tensor<double>({1, 4, 3, 3}, 4);
    auto g = gate_map(x, p.msa);
    auto gate = sigmoid(conv_pointwise(x, p.msa.wl2.weight, p.msa.wl2.bias));
    for (int i = 0; i < 9; ++i) {
        double m = 0;
        for (int c = 0; c < 4; ++c) m += gate.data()[c * 9 + i] / 4.0;
        EXPECT_NEAR(g.data()[i], m, 1e-12);
    }
}
