#include "restore/model.hpp"

#include "restore/ops.hpp"

namespace restore {

MstConfig ModelConfig::block(int level) const {
    MstConfig c(channels(level), heads_per_stage[level]);
    c.gdfn.expansion = expansion;
    return c;
}

AdecConfig ModelConfig::adec(int level) const {
    AdecConfig a;
    a.channels = channels(level);
    a.experts = experts;
    a.top_k = top_k;
    a.heads = heads_per_stage[level];
    a.prior_tokens = prior_tokens;
    a.feature_dim = prior.feature_dim;
    a.similarity_dim = prior.similarity_dim();
    return a;
}

void ModelConfig::validate() const {
    if (base_channels < 2 || base_channels % 2)
        throw std::invalid_argument("model: base_channels must be even and >= 2");
    if (top_k < 1 || top_k > experts) throw std::invalid_argument("model: need 1 <= top_k <= experts");
    if (prior.kinds.empty() || prior.feature_dim < 0) throw std::invalid_argument("model: invalid prior config");
    for (int l = 0; l < 4; ++l) {
        if (blocks_per_stage[l] < 1) throw std::invalid_argument("model: every stage needs at least one block");
        block(l).validate();
    }
    for (int l : kAdecLevels) adec(l).validate();
}

std::size_t Model::parameter_count() {
    std::size_t n = 0;
    for_each_param([&](const std::string&, BasicTensor<float>& t) { n += t.numel(); });
    return n;
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(splitmix64(seed));
    Model m;
    m.cfg = cfg;
    const int C = cfg.base_channels;
    m.stem_w = init_weight<float>({C, 3, 3, 3}, rng);
    m.stem_b = init_constant<float>({C}, 0.0f);
    for (int l = 0; l < 4; ++l)
        for (int b = 0; b < cfg.blocks_per_stage[l]; ++b) m.enc[l].push_back(init_mst<float>(cfg.block(l), rng));
    for (int l = 0; l < 3; ++l) m.down[l] = init_linear<float>(cfg.channels(l), cfg.channels(l) / 2, rng);
    for (int l = 3; l >= 0; --l) {
        for (int b = 0; b < cfg.blocks_per_stage[l]; ++b) m.dec[l].push_back(init_mst<float>(cfg.block(l), rng));
        if (l > 0) {
            m.adec[3 - l] = init_adec<float>(cfg.adec(l), rng);
            m.up[l - 1] = init_linear<float>(cfg.channels(l), 2 * cfg.channels(l), rng);
            m.fuse[l - 1] = init_linear<float>(2 * cfg.channels(l - 1), cfg.channels(l - 1), rng);
        }
    }
    m.out_w = init_weight<float>({3, C, 3, 3}, rng);
    m.out_b = init_constant<float>({3}, 0.0f);
    if (cfg.prior.mode == PriorMode::learned) m.learned = init_learned_prior<float>(cfg.prior, rng);
    return m;
}

namespace {

using GateList = std::vector<std::pair<std::string, Tensor>>;

Tensor run_stage(const std::vector<MstParams<float>>& blocks, const MstConfig& cfg, Tensor x, GateList* gates,
                 const std::string& name) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (gates) {
            NoGradGuard guard;
            gates->emplace_back(name + ".block" + std::to_string(b), mst_gate_map(x, blocks[b]));
        }
        x = mst_forward(x, cfg, blocks[b]);
    }
    return x;
}

void check_input(const Model& m, const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != 3)
        throw ShapeError("model: expected [B,3,H,W], got " + shape_str(x.shape()));
    if (x.dim(2) % 8 || x.dim(3) % 8)
        throw ShapeError("model: height and width must be multiples of 8, got " + shape_str(x.shape()));
    if (m.cfg.prior.mode == PriorMode::learned && (x.dim(2) < 16 || x.dim(3) < 16))
        throw ShapeError("model: learned prior needs at least 16x16 input");
}

ModelOutput forward_impl(const Model& m, const Tensor& x, const std::vector<DegradationLabel>& labels,
                         GateList* gates) {
    check_input(m, x);
    const auto& cfg = m.cfg;
    const int B = x.dim(0);
    ModelOutput out;
    if (m.learned) {
        auto lp = learned_prior(x, *m.learned, cfg.prior);
        out.prior = lp.bundle;
        out.prior_logits = lp.logits;
    } else {
        if (!labels.empty() && static_cast<int>(labels.size()) != B)
            throw std::invalid_argument("model: " + std::to_string(labels.size()) + " labels for batch " +
                                        std::to_string(B));
        out.prior = oracle_prior<float>(labels.empty() ? std::vector<DegradationLabel>(B) : labels, cfg.prior);
    }

    std::array<Tensor, 4> skip;
    Tensor h = conv3x3(x, m.stem_w, m.stem_b);
    for (int l = 0; l < 4; ++l) {
        if (l > 0) h = pixel_unshuffle(conv_pointwise(h, m.down[l - 1].weight, m.down[l - 1].bias), 2);
        h = skip[l] = run_stage(m.enc[l], cfg.block(l), h, l == 0 ? gates : nullptr, "enc.stage0");
    }
    for (int l = 3; l >= 0; --l) {
        if (l < 3) {
            h = pixel_shuffle(conv_pointwise(h, m.up[l].weight, m.up[l].bias), 2);
            h = conv_pointwise(concat(std::vector{h, skip[l]}, 1), m.fuse[l].weight, m.fuse[l].bias);
        }
        h = run_stage(m.dec[l], cfg.block(l), h, l == 0 ? gates : nullptr, "dec.stage0");
        if (l > 0) {
            auto r = adec_forward(h, out.prior, cfg.adec(l), m.adec[3 - l]);
            h = r.out;
            out.stats.push_back(std::move(r.stats));
        }
    }
    out.image = add(conv3x3(h, m.out_w, m.out_b), x);
    return out;
}

}  // namespace

ModelOutput forward(const Model& m, const Tensor& x, const std::vector<DegradationLabel>& labels) {
    return forward_impl(m, x, labels, nullptr);
}

Tensor encoder_gate_map(const Model& m, const Tensor& x) {
    check_input(m, x);
    return mst_gate_map(conv3x3(x, m.stem_w, m.stem_b), m.enc[0].front());
}

std::vector<std::pair<std::string, Tensor>> full_resolution_gate_maps(const Model& m, const Tensor& x,
                                                                      const std::vector<DegradationLabel>& labels) {
    NoGradGuard guard;
    GateList gates;
    forward_impl(m, x, labels, &gates);
    return gates;
}

}  // namespace restore
