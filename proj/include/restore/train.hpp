#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "restore/config.hpp"
#include "restore/data.hpp"
#include "restore/model.hpp"

namespace restore {

struct Sample {
    std::string path;  // manifest-relative
    Tensor degraded, clean;  // [1,3,H,W]
    DegradationLabel label;
    std::optional<Tensor> mask;  // [1,H,W]
};

/// Loads every manifest entry; a missing mask file is not an error.
std::vector<Sample> load_samples(const Manifest& manifest);

struct StepRecord {
    long step = 0;
    double charbonnier = 0, balance = 0, fft = 0, total = 0, lr = 0;
    double prior_ce = 0;  // learned prior only; added to the optimized objective
};

std::string format_record(const StepRecord& r);

struct TrainOptions {
    std::filesystem::path out_dir;  // metrics.log and checkpoints; empty writes nothing
    std::function<void(const StepRecord&)> on_step;
};

/// Deterministic given (tc.seed, model init). Throws std::runtime_error naming
/// the component when a loss term is not finite.
std::vector<StepRecord> train(Model& m, const std::vector<Sample>& data, const TrainConfig& tc,
                              const TrainOptions& opt = {});

/// Batch of `indices` with per-sample crop and flip/rotation drawn from rng.
struct Batch {
    Tensor degraded, clean;
    std::vector<DegradationLabel> labels;
};
Batch make_batch(const std::vector<Sample>& data, const std::vector<std::size_t>& indices, const TrainConfig& tc,
                 Rng& rng);

struct ImageScore {
    std::string path;
    double psnr = 0, ssim = 0;
};

/// Per routing stage, per specialized expert totals accumulated over images.
struct RoutingSummary {
    std::vector<std::vector<double>> w, s;
    std::vector<double> cv_w, cv_s;
};

/// sd / mean with population statistics.
double coefficient_of_variation(const std::vector<double>& v);

RoutingSummary summarize_routing(const std::vector<std::vector<RoutingStats<float>>>& per_image);

struct EvalReport {
    std::vector<ImageScore> images;  // manifest order
    std::vector<std::pair<std::string, std::string>> skipped;  // path, reason
    double mean_psnr = 0, mean_ssim = 0;
    RoutingSummary routing;
};

/// Full-image inference on every manifest entry. Images are split across
/// `threads` workers; results are reduced in manifest order.
EvalReport evaluate(const Model& m, const Manifest& manifest, int threads = 1);

/// "path psnr ssim" per image, a "mean" line, then the routing summary.
std::string format_report(const EvalReport& r);
std::string format_routing(const RoutingSummary& r);

/// Restored image [1,3,H,W] in inference mode, clamped to [0,1].
Tensor restore_image(const Model& m, const Tensor& degraded, const DegradationLabel& label,
                     std::vector<RoutingStats<float>>* stats = nullptr);

}  // namespace restore
