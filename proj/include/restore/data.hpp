#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "restore/priors.hpp"
#include "restore/tensor.hpp"

// Procedural images, degradations, metrics and PPM/PGM I/O. Images are
// [C,H,W] float tensors with values in [0, 1].

namespace restore {

/// Smooth random fields, a gradient and a few filled shapes. H and W must be
/// powers of two, at least 32.
Tensor synth_clean(std::uint64_t seed, int height, int width);

/// Binary [1,H,W] map of a few random blobs and rectangles.
Tensor synth_mask(std::uint64_t seed, int height, int width);

/// N(0, (sigma/255)^2) per element, before clamping.
Tensor gaussian_noise_field(const Shape& shape, double sigma_255, std::uint64_t seed);

/// Warns on stderr for sigma outside {15, 25, 50}.
Tensor add_gaussian_noise(const Tensor& img, double sigma_255, std::uint64_t seed);

/// Bright blurred streaks; the streaks for a density are a prefix of those for
/// any higher density, so damage grows monotonically with density.
Tensor add_rain(const Tensor& img, double density, std::uint64_t seed);

/// out = img * t + A * (1 - t), t = exp(-beta * depth), depth a smooth field
/// in [0, 1]. Requires beta > 0 and A in [0.7, 1].
Tensor add_haze(const Tensor& img, double beta, double airlight, std::uint64_t seed);

/// mask * degraded + (1 - mask) * clean, mask [1,H,W].
Tensor apply_in_mask(const Tensor& clean, const Tensor& degraded, const Tensor& mask);

/// Per-kind degradation parameters and the label intensity they map to.
struct DegradationSpec {
    DegradationKind kind = DegradationKind::noise;
    double amount = 25.0;  // sigma_255 for noise, density for rain, beta for haze
    double airlight = 0.9;

    double intensity() const;
};

/// Applies a supported degradation (noise, rain or haze).
Tensor degrade(const Tensor& img, const DegradationSpec& spec, std::uint64_t seed);

/// 10 log10(1 / MSE) with range 1, capped at 100 dB.
double psnr(const Tensor& a, const Tensor& b);

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, range 1) over
/// valid windows, averaged over windows and channels. Leading dims are planes.
double ssim(const Tensor& a, const Tensor& b);

Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& img);
Tensor read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& img);

/// One record: degraded image path relative to the manifest directory. The
/// clean reference lives at the same relative path with the first component
/// "degraded" replaced by "clean"; an optional corruption mask under "mask"
/// with extension .pgm.
struct ManifestEntry {
    std::string path;
    DegradationLabel label;
};

struct Manifest {
    std::filesystem::path root;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;

    std::filesystem::path degraded_path(std::size_t i) const;
    std::filesystem::path clean_path(std::size_t i) const;
    std::filesystem::path mask_path(std::size_t i) const;

    static Manifest load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;
};

struct SynthOptions {
    int count = 24;
    int size = 64;
    std::vector<DegradationKind> kinds{DegradationKind::noise, DegradationKind::rain, DegradationKind::haze};
    double noise_sigma = 0.0;  // 0 picks from {15, 25, 50} per image
    bool masked = false;       // degrade only inside a random mask, written alongside
};

/// Writes degraded/, clean/, optional mask/ and manifest.tsv under `dir`.
/// Image i uses seed splitmix64(seed + i) and kind kinds[i % kinds.size()].
Manifest synth_dataset(const std::filesystem::path& dir, std::uint64_t seed, const SynthOptions& opt);

}  // namespace restore
