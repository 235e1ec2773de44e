#pragma once

#include <filesystem>
#include <string>

#include "restore/losses.hpp"
#include "restore/model.hpp"

namespace restore {

struct TrainConfig {
    int crop = 64;
    int batch = 1;
    long steps = 1000;
    long warmup_steps = 50;
    double lr_init = 2e-4;
    double lr_min = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    LossWeights loss;
    double prior_aux_weight = 0.1;  // cross-entropy of the learned prior
    bool augment_flip = true;
    bool augment_rotate = true;
    long checkpoint_every = 0;  // 0 writes only the final checkpoint
    std::uint64_t seed = 0;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

/// Parses "key = value" lines; '#' starts a comment. Unknown keys throw.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Text that parse_config maps back to the same configuration.
std::string config_text(const RunConfig& cfg);
/// Model keys only, for checkpoint headers.
std::string model_config_text(const ModelConfig& cfg);

}  // namespace restore
