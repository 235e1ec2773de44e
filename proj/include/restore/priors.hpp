#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "restore/params.hpp"

// Degradation priors consumed by the expert router: a feature vector and a
// similarity distribution over degradation descriptors.

namespace restore {

enum class DegradationKind { noise, rain, haze, blur, lowlight, snow };

std::string kind_name(DegradationKind k);
/// Throws std::invalid_argument on an unknown name.
DegradationKind parse_kind(const std::string& name);

/// Kinds present with their intensity in [0, 1]; empty means clean.
struct DegradationLabel {
    std::vector<std::pair<DegradationKind, double>> entries;

    bool clean() const { return entries.empty(); }
    /// Parses "noise,rain" and "0.5,1" style lists; "clean" or "" for none.
    static DegradationLabel parse(const std::string& kinds, const std::string& intensities);
    std::string kinds_str() const;
    std::string intensities_str() const;
};

enum class PriorMode { oracle, learned };

struct PriorConfig {
    PriorMode mode = PriorMode::oracle;
    int feature_dim = 16;
    std::vector<DegradationKind> kinds{DegradationKind::noise, DegradationKind::rain, DegradationKind::haze};
    std::uint64_t seed = 0;

    int similarity_dim() const { return static_cast<int>(kinds.size()); }
    int index_of(DegradationKind k) const;
};

/// features [B, d_f]; similarity [B, d_s], each row on the simplex.
template <class T>
struct PriorBundle {
    BasicTensor<T> features;
    BasicTensor<T> similarity;

    int batch() const { return features.dim(0); }
};

/// Target similarity of a label: intensities normalized to sum 1, uniform over
/// the present kinds when all intensities are zero, uniform over every kind
/// for a clean label.
std::vector<double> oracle_similarity(const DegradationLabel& label, const PriorConfig& cfg);

/// Deterministic in (labels, cfg.seed); features sum a seeded embedding per
/// present kind.
template <class T>
PriorBundle<T> oracle_prior(const std::vector<DegradationLabel>& labels, const PriorConfig& cfg);

template <class T>
struct LearnedPriorParams {
    // Each stage is a stride-2 2x2 convolution (unshuffle then 1x1).
    Linear<T> stage[3];
    Linear<T> features;
    Linear<T> logits;

    template <class F>
    void for_each_param(F&& f, const std::string& prefix) {
        for (int i = 0; i < 3; ++i) stage[i].for_each_param(f, prefix + ".stage" + std::to_string(i));
        features.for_each_param(f, prefix + ".features");
        logits.for_each_param(f, prefix + ".logits");
    }
};

constexpr int kLearnedPriorWidths[3] = {16, 32, 32};

template <class T>
LearnedPriorParams<T> init_learned_prior(const PriorConfig& cfg, Rng& rng);

/// Bundle plus the pre-softmax similarity logits, used by the auxiliary
/// cross-entropy term.
template <class T>
struct LearnedPrior {
    PriorBundle<T> bundle;
    BasicTensor<T> logits;
};

/// image [B,3,H,W] with H, W >= 16 and divisible by 8.
template <class T>
LearnedPrior<T> learned_prior(const BasicTensor<T>& image, const LearnedPriorParams<T>& p, const PriorConfig& cfg);

}  // namespace restore
