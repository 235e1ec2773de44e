#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "restore/adec.hpp"
#include "restore/priors.hpp"

// Four-level encoder/decoder of gated attention blocks with expert
// collaboration between decoder stages and a global residual.

namespace restore {

struct ModelConfig {
    int base_channels = 16;
    std::array<int, 4> blocks_per_stage{1, 1, 1, 2};
    std::array<int, 4> heads_per_stage{1, 2, 4, 8};
    int experts = 4;
    int top_k = 2;
    int prior_tokens = 4;
    double expansion = 2.66;
    PriorConfig prior;

    int channels(int level) const { return base_channels << level; }
    MstConfig block(int level) const;
    AdecConfig adec(int level) const;
    void validate() const;
};

/// Decoder levels that are followed by an expert collaboration stage.
constexpr int kAdecLevels[3] = {3, 2, 1};

struct Model {
    ModelConfig cfg;
    BasicTensor<float> stem_w, stem_b;  // [C,3,3,3], [C]
    std::array<std::vector<MstParams<float>>, 4> enc, dec;
    std::array<Linear<float>, 3> down;  // level l -> l+1, C_l -> C_l/2 then unshuffle
    std::array<Linear<float>, 3> up;    // level l+1 -> l, C_{l+1} -> 2 C_{l+1} then shuffle
    std::array<Linear<float>, 3> fuse;  // concat(2 C_l) -> C_l
    std::array<AdecParams<float>, 3> adec;  // at kAdecLevels
    BasicTensor<float> out_w, out_b;    // [3,C,3,3], [3]
    std::optional<LearnedPriorParams<float>> learned;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix = "") {
        const std::string p = prefix.empty() ? "" : prefix + ".";
        f(p + "stem.weight", stem_w);
        f(p + "stem.bias", stem_b);
        for (int l = 0; l < 4; ++l)
            for (std::size_t b = 0; b < enc[l].size(); ++b)
                enc[l][b].for_each_param(f, p + "enc.stage" + std::to_string(l) + ".block" + std::to_string(b));
        for (int l = 0; l < 3; ++l) down[l].for_each_param(f, p + "down" + std::to_string(l));
        for (int l = 3; l >= 0; --l) {
            for (std::size_t b = 0; b < dec[l].size(); ++b)
                dec[l][b].for_each_param(f, p + "dec.stage" + std::to_string(l) + ".block" + std::to_string(b));
            if (l > 0) {
                adec[3 - l].for_each_param(f, p + "adec" + std::to_string(l));
                up[l - 1].for_each_param(f, p + "up" + std::to_string(l));
                fuse[l - 1].for_each_param(f, p + "fuse" + std::to_string(l - 1));
            }
        }
        f(p + "out.weight", out_w);
        f(p + "out.bias", out_b);
        if (learned) learned->for_each_param(f, p + "prior");
    }

    ParameterList<float> parameters() { return collect_parameters<float>(*this, ""); }
    std::size_t parameter_count();
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

struct ModelOutput {
    Tensor image;
    std::vector<RoutingStats<float>> stats;  // one per expert stage, coarse to fine
    PriorBundle<float> prior;
    Tensor prior_logits;  // learned mode only
};

/// x [B,3,H,W] with H, W divisible by 8. Labels feed the oracle prior; in
/// learned mode they are unused here (the prior comes from x). An empty label
/// list in oracle mode means "clean" for every image.
ModelOutput forward(const Model& m, const Tensor& x, const std::vector<DegradationLabel>& labels);

/// Gate map [B,1,H,W] of the first encoder block on the stem features.
Tensor encoder_gate_map(const Model& m, const Tensor& x);

/// Gate maps of every full-resolution block: encoder stage 0 then decoder
/// stage 0, each [B,1,H,W].
std::vector<std::pair<std::string, Tensor>> full_resolution_gate_maps(const Model& m, const Tensor& x,
                                                                      const std::vector<DegradationLabel>& labels);

}  // namespace restore
