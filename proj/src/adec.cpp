#include "restore/adec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "restore/ops.hpp"

namespace restore {

void AdecConfig::validate() const {
    if (experts < 1 || top_k < 1 || top_k > experts)
        throw std::invalid_argument("adec: need 1 <= top_k <= experts, got K=" + std::to_string(top_k) +
                                    " N=" + std::to_string(experts));
    if (prior_tokens < 1 || feature_dim < 0 || similarity_dim < 1)
        throw std::invalid_argument("adec: invalid prior dimensions");
    mst().validate();
}

template <class T>
const ExpertParams<T>& ExpertLibrary<T>::at(int id) const {
    if (id < 0 || id > size()) throw std::out_of_range("expert index " + std::to_string(id) + " outside 0.." +
                                                       std::to_string(size()));
    return id == size() ? shared : specialized[id];
}

template <class T>
ExpertParams<T> init_expert(int channels, Rng& rng) {
    return {init_linear<T>(channels, 2 * channels, rng), init_linear<T>(2 * channels, channels, rng)};
}

template <class T>
AdecParams<T> init_adec(const AdecConfig& cfg, Rng& rng) {
    cfg.validate();
    const int c = cfg.channels;
    AdecParams<T> p;
    p.dacp.wp1 = init_linear<T>(cfg.feature_dim + cfg.similarity_dim, cfg.prior_tokens * c, rng);
    p.dacp.query = init_linear<T>(c, c, rng);
    p.dacp.key = init_linear<T>(c, c, rng);
    p.dacp.value = init_linear<T>(c, c, rng);
    p.dacp.wp2 = init_linear<T>(c, c, rng);
    p.router.norm_gamma = init_constant<T>({c}, T(1));
    p.router.norm_beta = init_constant<T>({c}, T(0));
    p.router.wr = init_linear<T>(2 * c, cfg.experts, rng);
    for (int i = 0; i < cfg.experts; ++i) p.experts.specialized.push_back(init_expert<T>(c, rng));
    p.experts.shared = init_expert<T>(c, rng);
    p.wd = init_weight<T>({c, 3, 3}, rng);
    p.wd_bias = init_constant<T>({c}, T(0));
    p.fuse = init_mst<T>(cfg.mst(), rng);
    p.ca = init_cross_attention<T>(cfg.mst().mdta(), rng);
    return p;
}

template <class T>
BasicTensor<T> dacp_forward(const PriorBundle<T>& prior, const BasicTensor<T>& xhat, const AdecConfig& cfg,
                            const DacpParams<T>& p) {
    const int B = xhat.dim(0), C = xhat.dim(1), H = xhat.dim(2), W = xhat.dim(3);
    if (C != cfg.channels) throw ShapeError("dacp: feature map " + shape_str(xhat.shape()) + " vs channels " +
                                            std::to_string(cfg.channels));
    if (prior.features.shape() != Shape{B, cfg.feature_dim} || prior.similarity.shape() != Shape{B, cfg.similarity_dim})
        throw ShapeError("dacp: prior " + shape_str(prior.features.shape()) + "+" +
                         shape_str(prior.similarity.shape()) + " does not match batch " + std::to_string(B) +
                         ", d_f=" + std::to_string(cfg.feature_dim) + ", d_s=" + std::to_string(cfg.similarity_dim));
    auto joint = cfg.feature_dim > 0 ? concat(std::vector{prior.features, prior.similarity}, 1) : prior.similarity;
    auto tokens = reshape(linear(joint, p.wp1.weight, p.wp1.bias), {B, cfg.prior_tokens, C});
    auto k = linear(tokens, p.key.weight, p.key.bias);
    auto v = linear(tokens, p.value.weight, p.value.bias);
    auto q = transpose_last2(reshape(conv_pointwise(xhat, p.query.weight, p.query.bias), {B, C, H * W}));
    auto attn = softmax_axis(scale(matmul(q, transpose_last2(k)), static_cast<T>(1.0 / std::sqrt(double(C)))), -1);
    auto mixed = reshape(transpose_last2(matmul(attn, v)), {B, C, H, W});
    return conv_pointwise(mixed, p.wp2.weight, p.wp2.bias);
}

template <class T>
BasicTensor<T> routing_scores(const BasicTensor<T>& prior_map, const BasicTensor<T>& xhat, const RouterParams<T>& p) {
    if (prior_map.shape() != xhat.shape())
        throw ShapeError("routing_scores: prior map " + shape_str(prior_map.shape()) + " vs features " +
                         shape_str(xhat.shape()));
    auto joint = concat(std::vector{prior_map, layernorm_channel(xhat, p.norm_gamma, p.norm_beta)}, 1);
    return softmax_axis(conv_pointwise(joint, p.wr.weight, p.wr.bias), 1);
}

template <class T>
RoutingDecision<T> select_experts(const BasicTensor<T>& scores, int top_k) {
    if (scores.rank() != 4) throw ShapeError("select_experts: expected [B,N,H,W], got " + shape_str(scores.shape()));
    const int B = scores.dim(0), N = scores.dim(1), H = scores.dim(2), W = scores.dim(3);
    if (top_k < 1 || top_k > N)
        throw std::invalid_argument("select_experts: K=" + std::to_string(top_k) + " with N=" + std::to_string(N));
    const int S = top_k + 1, HW = H * W;

    // Softmax over [score'; 1]; the appended slot is the shared expert.
    auto probs = softmax_axis(concat(std::vector{scores, BasicTensor<T>({B, 1, H, W}, T(1))}, 1), 1);

    RoutingDecision<T> d;
    d.batch = B;
    d.slots = S;
    d.height = H;
    d.width = W;
    d.ids.resize(static_cast<std::size_t>(B) * S * HW);
    std::vector<std::size_t> gather(d.ids.size());
    std::vector<int> order(N);
    const auto s = scores.data();
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < HW; ++i) {
            std::iota(order.begin(), order.end(), 0);
            auto score = [&](int n) { return s[(static_cast<std::size_t>(b) * N + n) * HW + i]; };
            std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return score(x) > score(y); });
            for (int k = 0; k < S; ++k) {
                const int id = k == 0 ? N : order[k - 1];
                const std::size_t slot = (static_cast<std::size_t>(b) * S + k) * HW + i;
                d.ids[slot] = id;
                gather[slot] = (static_cast<std::size_t>(b) * (N + 1) + id) * HW + i;
            }
        }
    }
    d.weights = gather_flat(probs, std::move(gather), {B, S, H, W});
    return d;
}

template <class T>
BasicTensor<T> expert_forward(const BasicTensor<T>& x, const ExpertParams<T>& e) {
    return conv_pointwise(gelu(conv_pointwise(x, e.fc1.weight, e.fc1.bias)), e.fc2.weight, e.fc2.bias);
}

template <class T>
BasicTensor<T> aggregate_experts(const BasicTensor<T>& xhat, const RoutingDecision<T>& d, const ExpertLibrary<T>& lib) {
    const int B = xhat.dim(0), C = xhat.dim(1), H = xhat.dim(2), W = xhat.dim(3), HW = H * W;
    if (d.batch != B || d.height != H || d.width != W)
        throw ShapeError("aggregate_experts: decision does not match features " + shape_str(xhat.shape()));
    const int N = lib.size();

    // Bucket (batch, slot, pixel) triples by expert id.
    struct Hit { int b, k, i; };
    std::vector<std::vector<Hit>> hits(N + 1);
    for (int b = 0; b < B; ++b)
        for (int k = 0; k < d.slots; ++k)
            for (int i = 0; i < HW; ++i) {
                const int id = d.ids[(static_cast<std::size_t>(b) * d.slots + k) * HW + i];
                if (id < 0 || id > N)
                    throw std::out_of_range("aggregate_experts: expert index " + std::to_string(id) +
                                            " outside 0.." + std::to_string(N));
                hits[id].push_back({b, k, i});
            }

    BasicTensor<T> out;
    for (int id = 0; id <= N; ++id) {
        const auto& h = hits[id];
        if (h.empty()) continue;
        const int n = static_cast<int>(h.size());
        std::vector<std::size_t> pix(static_cast<std::size_t>(C) * n), wsel(n);
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < C; ++c)
                pix[static_cast<std::size_t>(c) * n + j] = (static_cast<std::size_t>(h[j].b) * C + c) * HW + h[j].i;
            wsel[j] = (static_cast<std::size_t>(h[j].b) * d.slots + h[j].k) * HW + h[j].i;
        }
        auto y = expert_forward(gather_flat(xhat, pix, {1, C, 1, n}), lib.at(id));
        auto weighted = mul_broadcast(y, gather_flat(d.weights, std::move(wsel), {1, 1, 1, n}));
        auto placed = scatter_add_flat(weighted, std::move(pix), xhat.shape());
        out = out.defined() ? add(out, placed) : placed;
    }
    return out;
}

template <class T>
RoutingStats<T> routing_stats(const BasicTensor<T>& scores, const RoutingDecision<T>& d) {
    const int B = scores.dim(0), N = scores.dim(1), HW = scores.dim(2) * scores.dim(3);
    RoutingStats<T> st;
    st.confidence = scores;
    st.w_totals = sum_per_channel(scores);
    std::vector<T> sel(scores.numel(), T(0));
    st.s_totals.assign(N, 0.0);
    for (int b = 0; b < B; ++b)
        for (int k = 1; k < d.slots; ++k)
            for (int i = 0; i < HW; ++i) {
                const int id = d.ids[(static_cast<std::size_t>(b) * d.slots + k) * HW + i];
                sel[(static_cast<std::size_t>(b) * N + id) * HW + i] = T(1);
                st.s_totals[id] += 1.0;
            }
    st.selection = BasicTensor<T>(scores.shape(), std::move(sel));
    return st;
}

template <class T>
AdecOutput<T> adec_forward(const BasicTensor<T>& xhat, const PriorBundle<T>& prior, const AdecConfig& cfg,
                           const AdecParams<T>& p) {
    auto prior_map = dacp_forward(prior, xhat, cfg, p.dacp);
    auto scores = routing_scores(prior_map, xhat, p.router);
    auto decision = select_experts(scores, cfg.top_k);
    auto mixed = aggregate_experts(xhat, decision, p.experts);
    auto fused = mst_forward(conv_depthwise3x3(mixed, p.wd, p.wd_bias), cfg.mst(), p.fuse);
    // Cross-attention with the query features kept as a residual path.
    auto out = add(xhat, cross_attention_forward(xhat, fused, cfg.mst().mdta(), p.ca));
    return {out, routing_stats(scores, decision)};
}

#define RESTORE_INSTANTIATE(T)                                                                                    \
    template struct ExpertLibrary<T>;                                                                             \
    template ExpertParams<T> init_expert<T>(int, Rng&);                                                           \
    template AdecParams<T> init_adec<T>(const AdecConfig&, Rng&);                                                 \
    template BasicTensor<T> dacp_forward(const PriorBundle<T>&, const BasicTensor<T>&, const AdecConfig&,         \
                                         const DacpParams<T>&);                                                   \
    template BasicTensor<T> routing_scores(const BasicTensor<T>&, const BasicTensor<T>&, const RouterParams<T>&); \
    template RoutingDecision<T> select_experts(const BasicTensor<T>&, int);                                       \
    template BasicTensor<T> expert_forward(const BasicTensor<T>&, const ExpertParams<T>&);                        \
    template BasicTensor<T> aggregate_experts(const BasicTensor<T>&, const RoutingDecision<T>&,                   \
                                              const ExpertLibrary<T>&);                                           \
    template RoutingStats<T> routing_stats(const BasicTensor<T>&, const RoutingDecision<T>&);                     \
    template AdecOutput<T> adec_forward(const BasicTensor<T>&, const PriorBundle<T>&, const AdecConfig&,          \
                                        const AdecParams<T>&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
