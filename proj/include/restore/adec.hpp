#pragma once

#include <vector>

#include "restore/mst.hpp"
#include "restore/priors.hpp"

// Prior-guided per-pixel mixture of experts: prior fusion, routing, top-K
// selection with an always-on shared expert, sparse aggregation and fusion.

namespace restore {

struct AdecConfig {
    int channels = 0;
    int experts = 4;       // N specialized experts
    int top_k = 2;         // K
    int heads = 1;         // heads of the fusion block and cross-attention
    int prior_tokens = 4;  // tokens the prior vector is projected to
    int feature_dim = 16;  // d_f
    int similarity_dim = 3;  // d_s

    MstConfig mst() const { return MstConfig(channels, heads); }
    void validate() const;
};

template <class T>
struct DacpParams {
    Linear<T> wp1;   // d_f + d_s -> tokens * C
    Linear<T> query; // C -> C on feature pixels
    Linear<T> key;   // C -> C on prior tokens
    Linear<T> value;
    Linear<T> wp2;   // C -> C

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        wp1.for_each_param(f, prefix + ".wp1");
        query.for_each_param(f, prefix + ".query");
        key.for_each_param(f, prefix + ".key");
        value.for_each_param(f, prefix + ".value");
        wp2.for_each_param(f, prefix + ".wp2");
    }
};

template <class T>
struct RouterParams {
    BasicTensor<T> norm_gamma, norm_beta;
    Linear<T> wr;  // 2C -> N

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        f(prefix + ".norm.gamma", norm_gamma);
        f(prefix + ".norm.beta", norm_beta);
        wr.for_each_param(f, prefix + ".wr");
    }
};

/// Pointwise two-layer network C -> 2C -> C with gelu.
template <class T>
struct ExpertParams {
    Linear<T> fc1, fc2;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        fc1.for_each_param(f, prefix + ".fc1");
        fc2.for_each_param(f, prefix + ".fc2");
    }
};

template <class T>
struct ExpertLibrary {
    std::vector<ExpertParams<T>> specialized;
    ExpertParams<T> shared;

    int size() const { return static_cast<int>(specialized.size()); }
    /// Index size() denotes the shared expert.
    const ExpertParams<T>& at(int id) const;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        for (std::size_t i = 0; i < specialized.size(); ++i) specialized[i].for_each_param(f, prefix + ".e" + std::to_string(i));
        shared.for_each_param(f, prefix + ".shared");
    }
};

template <class T>
struct AdecParams {
    DacpParams<T> dacp;
    RouterParams<T> router;
    ExpertLibrary<T> experts;
    BasicTensor<T> wd, wd_bias;  // depthwise [C,3,3] applied to the mixed features
    MstParams<T> fuse;
    CrossAttentionParams<T> ca;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        dacp.for_each_param(f, prefix + ".dacp");
        router.for_each_param(f, prefix + ".router");
        experts.for_each_param(f, prefix + ".experts");
        f(prefix + ".wd", wd);
        f(prefix + ".wd_bias", wd_bias);
        fuse.for_each_param(f, prefix + ".fuse");
        ca.for_each_param(f, prefix + ".ca");
    }
};

/// Per pixel K+1 slots; slot 0 is always the shared expert, the rest are
/// specialized experts by descending score (ties to the lower index).
template <class T>
struct RoutingDecision {
    int batch = 0, slots = 0, height = 0, width = 0;
    std::vector<int> ids;     // [B, K+1, H, W], values in 0..N
    BasicTensor<T> weights;   // [B, K+1, H, W]

    int id(int b, int k, int y, int x) const { return ids[((b * slots + k) * height + y) * width + x]; }
};

/// Routing statistics pooled over the batch.
template <class T>
struct RoutingStats {
    BasicTensor<T> confidence;  // [B, N, H, W] routing probabilities (carries grad)
    BasicTensor<T> selection;   // [B, N, H, W] binary
    BasicTensor<T> w_totals;    // [N], differentiable
    std::vector<double> s_totals;

    int experts() const { return static_cast<int>(s_totals.size()); }
};

template <class T>
ExpertParams<T> init_expert(int channels, Rng& rng);
template <class T>
AdecParams<T> init_adec(const AdecConfig& cfg, Rng& rng);

template <class T>
BasicTensor<T> dacp_forward(const PriorBundle<T>& prior, const BasicTensor<T>& xhat, const AdecConfig& cfg,
                            const DacpParams<T>& p);

/// softmax over experts of W_r [P; LN(xhat)]: [B, N, H, W].
template <class T>
BasicTensor<T> routing_scores(const BasicTensor<T>& prior_map, const BasicTensor<T>& xhat, const RouterParams<T>& p);

template <class T>
RoutingDecision<T> select_experts(const BasicTensor<T>& scores, int top_k);

/// Single expert applied to every pixel of x.
template <class T>
BasicTensor<T> expert_forward(const BasicTensor<T>& x, const ExpertParams<T>& e);

/// Each expert runs only on the pixels routed to it.
template <class T>
BasicTensor<T> aggregate_experts(const BasicTensor<T>& xhat, const RoutingDecision<T>& decision,
                                 const ExpertLibrary<T>& lib);

template <class T>
RoutingStats<T> routing_stats(const BasicTensor<T>& scores, const RoutingDecision<T>& decision);

template <class T>
struct AdecOutput {
    BasicTensor<T> out;
    RoutingStats<T> stats;
};

template <class T>
AdecOutput<T> adec_forward(const BasicTensor<T>& xhat, const PriorBundle<T>& prior, const AdecConfig& cfg,
                           const AdecParams<T>& p);

}  // namespace restore
