#include "restore/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "restore/params.hpp"

namespace restore {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void require_image(const Tensor& img, const char* op) {
    if (img.rank() != 3) throw ShapeError(std::string(op) + ": expected [C,H,W], got " + shape_str(img.shape()));
}

// Sum of a few low-frequency cosines, rescaled to [0, 1].
std::vector<double> smooth_field(Rng& rng, int H, int W, int waves) {
    std::vector<double> f(static_cast<std::size_t>(H) * W, 0.0);
    for (int k = 0; k < waves; ++k) {
        const double fx = rng.uniform(0.0, 3.0), fy = rng.uniform(0.0, 3.0);
        const double phase = rng.uniform(0.0, kTwoPi), amp = rng.uniform(0.3, 1.0);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                f[y * W + x] += amp * std::cos(kTwoPi * (fx * x / W + fy * y / H) + phase);
    }
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double a = *lo, span = std::max(*hi - *lo, 1e-12);
    for (auto& v : f) v = (v - a) / span;
    return f;
}

std::vector<double> gaussian_window() {
    std::vector<double> g(11);
    double total = 0;
    for (int i = 0; i < 11; ++i) total += g[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
    for (auto& v : g) v /= total;
    return g;
}

// Valid-mode separable filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& p, int H, int W, const std::vector<double>& g) {
    const int oh = H - 10, ow = W - 10;
    std::vector<double> rows(static_cast<std::size_t>(H) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < 11; ++k) s += g[k] * p[y * W + x + k];
            rows[y * ow + x] = s;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < 11; ++k) s += g[k] * rows[(y + k) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

std::string next_token(std::istream& in, const fs::path& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw std::runtime_error(path.string() + ": malformed header");
    return tok;
}

int parse_dim(const std::string& tok, const fs::path& path) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used == tok.size() && v > 0) return v;
    } catch (const std::exception&) {
    }
    throw std::runtime_error(path.string() + ": malformed header value '" + tok + "'");
}

Tensor read_netpbm(const fs::path& path, const char* magic, int channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    if (next_token(in, path) != magic)
        throw std::runtime_error(path.string() + ": malformed header, expected " + magic);
    const int W = parse_dim(next_token(in, path), path);
    const int H = parse_dim(next_token(in, path), path);
    if (parse_dim(next_token(in, path), path) != 255)
        throw std::runtime_error(path.string() + ": only 8-bit files (maxval 255) are supported");
    const std::size_t n = static_cast<std::size_t>(W) * H * channels;
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw std::runtime_error(path.string() + ": truncated payload (" + std::to_string(in.gcount()) + " of " +
                                 std::to_string(n) + " bytes)");
    std::vector<float> v(n);
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < channels; ++c) v[c * plane + i] = bytes[i * channels + c] / 255.0f;
    return Tensor({channels, H, W}, std::move(v));
}

void write_netpbm(const fs::path& path, const Tensor& img, const char* magic, int channels) {
    if (img.rank() != 3 || img.dim(0) != channels)
        throw ShapeError(std::string("write ") + magic + ": expected [" + std::to_string(channels) + ",H,W], got " +
                         shape_str(img.shape()));
    const int H = img.dim(1), W = img.dim(2);
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    std::vector<unsigned char> bytes(plane * channels);
    for (std::size_t i = 0; i < plane; ++i)
        for (int c = 0; c < channels; ++c)
            bytes[i * channels + c] = static_cast<unsigned char>(std::lround(clamp01(img.data()[c * plane + i]) * 255.0));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << magic << '\n' << W << ' ' << H << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

fs::path sibling(const std::string& rel, const char* dir, const char* ext) {
    fs::path p(rel);
    auto it = p.begin();
    if (it == p.end() || *it != "degraded")
        throw std::runtime_error("manifest path '" + rel + "' is not under degraded/");
    fs::path out(dir);
    for (++it; it != p.end(); ++it) out /= *it;
    if (ext) out.replace_extension(ext);
    return out;
}

}  // namespace

Tensor synth_clean(std::uint64_t seed, int H, int W) {
    if (!is_pow2(H) || !is_pow2(W) || H < 32 || W < 32)
        throw std::invalid_argument("synth_clean: size must be a power of two >= 32, got " + std::to_string(H) + "x" +
                                    std::to_string(W));
    Rng rng(splitmix64(seed ^ 0xc1ea4ULL));
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<double> img(3 * plane);
    const double gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);
    for (int c = 0; c < 3; ++c) {
        const auto f = smooth_field(rng, H, W, 3);
        const double lo = rng.uniform(0.1, 0.4), span = rng.uniform(0.3, 0.6);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                img[c * plane + y * W + x] = lo + span * f[y * W + x] + gx * (double(x) / W - 0.5) + gy * (double(y) / H - 0.5);
    }
    const int shapes = rng.uniform_int(3, 6);
    for (int s = 0; s < shapes; ++s) {
        const bool circle = rng.uniform() < 0.5;
        const double cx = rng.uniform(0, W), cy = rng.uniform(0, H);
        const double rx = rng.uniform(0.06, 0.2) * W, ry = circle ? rx : rng.uniform(0.06, 0.2) * H;
        double color[3];
        for (auto& v : color) v = rng.uniform(0.05, 0.95);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                const bool inside = circle ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) {
                    auto& v = img[c * plane + y * W + x];
                    v = 0.2 * v + 0.8 * color[c];
                }
            }
    }
    std::vector<float> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = clamp01(img[i]);
    return Tensor({3, H, W}, std::move(out));
}

Tensor synth_mask(std::uint64_t seed, int H, int W) {
    Rng rng(splitmix64(seed ^ 0x3a5cULL));
    std::vector<float> m(static_cast<std::size_t>(H) * W, 0.0f);
    const int blobs = rng.uniform_int(2, 4);
    for (int b = 0; b < blobs; ++b) {
        const bool ellipse = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.15, 0.85) * W, cy = rng.uniform(0.15, 0.85) * H;
        const double rx = rng.uniform(0.12, 0.25) * W, ry = rng.uniform(0.12, 0.25) * H;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                if (ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0)
                    m[y * W + x] = 1.0f;
            }
    }
    return Tensor({1, H, W}, std::move(m));
}

Tensor gaussian_noise_field(const Shape& shape, double sigma_255, std::uint64_t seed) {
    Rng rng(splitmix64(seed ^ 0x9015eULL));
    std::vector<float> v(shape_numel(shape));
    const double sd = sigma_255 / 255.0;
    for (auto& x : v) x = static_cast<float>(sd * rng.normal());
    return Tensor(shape, std::move(v));
}

Tensor add_gaussian_noise(const Tensor& img, double sigma_255, std::uint64_t seed) {
    if (sigma_255 < 0) throw std::invalid_argument("add_gaussian_noise: negative sigma");
    if (sigma_255 == 0) return Tensor(img.shape(), std::vector<float>(img.data().begin(), img.data().end()));
    if (sigma_255 != 15 && sigma_255 != 25 && sigma_255 != 50)
        std::cerr << "warning: noise sigma " << sigma_255 << " is outside the canonical set {15, 25, 50}\n";
    const auto noise = gaussian_noise_field(img.shape(), sigma_255, seed);
    std::vector<float> out(img.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = clamp01(double(img.data()[i]) + noise.data()[i]);
    return Tensor(img.shape(), std::move(out));
}

Tensor add_rain(const Tensor& img, double density, std::uint64_t seed) {
    require_image(img, "add_rain");
    if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("add_rain: density outside [0,1]");
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const int max_streaks = std::max(1, H * W / 16);
    const int n = static_cast<int>(std::lround(density * max_streaks));
    Rng rng(splitmix64(seed ^ 0x7a1aULL));
    const double base_angle = rng.uniform(-0.35, 0.35);
    std::vector<double> field(static_cast<std::size_t>(H) * W, 0.0);
    for (int k = 0; k < n; ++k) {
        const double cx = rng.uniform(0, W), cy = rng.uniform(0, H);
        const double len = rng.uniform(0.08, 0.25) * H;
        const double bright = rng.uniform(0.25, 0.55);
        const double angle = base_angle + rng.uniform(-0.05, 0.05);
        const double dx = std::sin(angle), dy = std::cos(angle);
        const int x0 = std::max(0, int(cx - len - 2)), x1 = std::min(W - 1, int(cx + len + 2));
        const int y0 = std::max(0, int(cy - len - 2)), y1 = std::min(H - 1, int(cy + len + 2));
        const double along_sd = len / 2.5, across_sd = 0.6;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double px = x - cx, py = y - cy;
                const double a = px * dx + py * dy, q = -px * dy + py * dx;
                if (std::abs(a) > len || std::abs(q) > 2.0) continue;
                field[y * W + x] += bright * std::exp(-q * q / (2 * across_sd * across_sd)) *
                                    std::exp(-a * a / (2 * along_sd * along_sd));
            }
    }
    std::vector<float> out(img.numel());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = clamp01(double(img.data()[c * plane + i]) + field[i]);
    return Tensor(img.shape(), std::move(out));
}

Tensor add_haze(const Tensor& img, double beta, double airlight, std::uint64_t seed) {
    require_image(img, "add_haze");
    if (!(beta > 0.0)) throw std::invalid_argument("add_haze: beta must be > 0");
    if (!(airlight >= 0.7 && airlight <= 1.0)) throw std::invalid_argument("add_haze: airlight outside [0.7,1]");
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Rng rng(splitmix64(seed ^ 0x4a2eULL));
    auto depth = smooth_field(rng, H, W, 2);
    // Farther toward the top of the frame, mixed with the random field; kept
    // above 0.1 so a dense haze covers every pixel.
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            depth[y * W + x] = 0.1 + 0.45 * depth[y * W + x] + 0.45 * (1.0 - double(y) / std::max(1, H - 1));
    std::vector<float> out(img.numel());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t i = 0; i < plane; ++i) {
        const double t = std::exp(-beta * depth[i]);
        for (int c = 0; c < C; ++c)
            out[c * plane + i] = clamp01(img.data()[c * plane + i] * t + airlight * (1.0 - t));
    }
    return Tensor(img.shape(), std::move(out));
}

Tensor apply_in_mask(const Tensor& clean, const Tensor& degraded, const Tensor& mask) {
    require_image(clean, "apply_in_mask");
    if (clean.shape() != degraded.shape() || mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != clean.dim(1) ||
        mask.dim(2) != clean.dim(2))
        throw ShapeError("apply_in_mask: " + shape_str(clean.shape()) + ", " + shape_str(degraded.shape()) + ", mask " +
                         shape_str(mask.shape()));
    const std::size_t plane = mask.numel();
    std::vector<float> out(clean.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float m = mask.data()[i % plane];
        out[i] = m * degraded.data()[i] + (1.0f - m) * clean.data()[i];
    }
    return Tensor(clean.shape(), std::move(out));
}

double DegradationSpec::intensity() const {
    switch (kind) {
        case DegradationKind::noise: return std::min(1.0, amount / 50.0);
        case DegradationKind::rain: return std::clamp(amount, 0.0, 1.0);
        case DegradationKind::haze: return std::min(1.0, amount / 3.0);
        default: return std::clamp(amount, 0.0, 1.0);
    }
}

Tensor degrade(const Tensor& img, const DegradationSpec& spec, std::uint64_t seed) {
    switch (spec.kind) {
        case DegradationKind::noise: return add_gaussian_noise(img, spec.amount, seed);
        case DegradationKind::rain: return add_rain(img, spec.amount, seed);
        case DegradationKind::haze: return add_haze(img, spec.amount, spec.airlight, seed);
        default: throw std::invalid_argument("no synthesizer for degradation '" + kind_name(spec.kind) + "'");
    }
}

double psnr(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("psnr: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double mse = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = double(a.data()[i]) - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    return mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("ssim: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (a.rank() < 2) throw ShapeError("ssim: need at least [H,W]");
    const int H = a.dim(-2), W = a.dim(-1);
    if (H < 11 || W < 11) throw ShapeError("ssim: images must be at least 11x11");
    const std::size_t plane = static_cast<std::size_t>(H) * W, planes = a.numel() / plane;
    const auto g = gaussian_window();
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double total = 0;
    std::vector<double> pa(plane), pb(plane), aa(plane), bb(plane), ab(plane);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < plane; ++i) {
            pa[i] = a.data()[p * plane + i];
            pb[i] = b.data()[p * plane + i];
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto ma = filter_valid(pa, H, W, g), mb = filter_valid(pb, H, W, g);
        const auto saa = filter_valid(aa, H, W, g), sbb = filter_valid(bb, H, W, g), sab = filter_valid(ab, H, W, g);
        double acc = 0;
        for (std::size_t i = 0; i < ma.size(); ++i) {
            const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i], cov = sab[i] - ma[i] * mb[i];
            acc += ((2 * ma[i] * mb[i] + C1) * (2 * cov + C2)) /
                   ((ma[i] * ma[i] + mb[i] * mb[i] + C1) * (va + vb + C2));
        }
        total += acc / static_cast<double>(ma.size());
    }
    return total / static_cast<double>(planes);
}

Tensor read_ppm(const fs::path& path) { return read_netpbm(path, "P6", 3); }
void write_ppm(const fs::path& path, const Tensor& img) { write_netpbm(path, img, "P6", 3); }
Tensor read_pgm(const fs::path& path) { return read_netpbm(path, "P5", 1); }
void write_pgm(const fs::path& path, const Tensor& img) { write_netpbm(path, img, "P5", 1); }

fs::path Manifest::degraded_path(std::size_t i) const { return root / entries.at(i).path; }
fs::path Manifest::clean_path(std::size_t i) const { return root / sibling(entries.at(i).path, "clean", nullptr); }
fs::path Manifest::mask_path(std::size_t i) const { return root / sibling(entries.at(i).path, "mask", ".pgm"); }

Manifest Manifest::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open manifest " + file.string());
    Manifest m;
    m.root = file.parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream meta(line.substr(1));
            std::string key;
            if (meta >> key && key == "seed") meta >> m.seed;
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream cols(line);
        std::string f;
        while (std::getline(cols, f, '\t')) fields.push_back(f);
        if (fields.size() != 3)
            throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
        try {
            m.entries.push_back({fields[0], DegradationLabel::parse(fields[1], fields[2])});
        } catch (const std::exception& e) {
            throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return m;
}

void Manifest::save(const fs::path& file) const {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write manifest " + file.string());
    out << "# seed " << seed << '\n';
    for (const auto& e : entries) out << e.path << '\t' << e.label.kinds_str() << '\t' << e.label.intensities_str() << '\n';
}

Manifest synth_dataset(const fs::path& dir, std::uint64_t seed, const SynthOptions& opt) {
    if (opt.count < 1 || opt.kinds.empty()) throw std::invalid_argument("synth: need at least one image and one kind");
    fs::create_directories(dir / "degraded");
    fs::create_directories(dir / "clean");
    if (opt.masked) fs::create_directories(dir / "mask");
    Manifest m;
    m.root = dir;
    m.seed = seed;
    for (int i = 0; i < opt.count; ++i) {
        const std::uint64_t s = splitmix64(seed + static_cast<std::uint64_t>(i));
        Rng rng(s ^ 0xd15cULL);
        DegradationSpec spec;
        spec.kind = opt.kinds[i % opt.kinds.size()];
        switch (spec.kind) {
            case DegradationKind::noise: {
                static constexpr double kSigmas[] = {15, 25, 50};
                spec.amount = opt.noise_sigma > 0 ? opt.noise_sigma : kSigmas[rng.uniform_int(0, 2)];
                break;
            }
            case DegradationKind::rain: spec.amount = rng.uniform(0.2, 0.5); break;
            case DegradationKind::haze:
                spec.amount = rng.uniform(0.8, 2.5);
                spec.airlight = rng.uniform(0.75, 0.95);
                break;
            default: break;
        }
        const auto clean = synth_clean(s, opt.size, opt.size);
        auto degraded = degrade(clean, spec, s);
        char name[32];
        std::snprintf(name, sizeof name, "img_%04d.ppm", i);
        const std::string rel = std::string("degraded/") + name;
        if (opt.masked) {
            const auto mask = synth_mask(s, opt.size, opt.size);
            degraded = apply_in_mask(clean, degraded, mask);
            write_pgm(dir / sibling(rel, "mask", ".pgm"), mask);
        }
        write_ppm(dir / rel, degraded);
        write_ppm(dir / sibling(rel, "clean", nullptr), clean);
        DegradationLabel label;
        label.entries.emplace_back(spec.kind, spec.intensity());
        m.entries.push_back({rel, label});
    }
    m.save(dir / "manifest.tsv");
    return m;
}

}  // namespace restore
