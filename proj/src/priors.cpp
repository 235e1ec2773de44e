#include "restore/priors.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "restore/ops.hpp"

namespace restore {

namespace {

constexpr DegradationKind kAllKinds[] = {DegradationKind::noise, DegradationKind::rain,     DegradationKind::haze,
                                         DegradationKind::blur,  DegradationKind::lowlight, DegradationKind::snow};

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

std::string kind_name(DegradationKind k) {
    switch (k) {
        case DegradationKind::noise: return "noise";
        case DegradationKind::rain: return "rain";
        case DegradationKind::haze: return "haze";
        case DegradationKind::blur: return "blur";
        case DegradationKind::lowlight: return "lowlight";
        case DegradationKind::snow: return "snow";
    }
    return "?";
}

DegradationKind parse_kind(const std::string& name) {
    for (auto k : kAllKinds)
        if (kind_name(k) == name) return k;
    throw std::invalid_argument("unknown degradation kind '" + name + "'");
}

DegradationLabel DegradationLabel::parse(const std::string& kinds, const std::string& intensities) {
    DegradationLabel label;
    if (kinds.empty() || kinds == "clean") return label;
    const auto names = split_commas(kinds);
    const auto values = split_commas(intensities);
    if (names.size() != values.size())
        throw std::invalid_argument("label: " + std::to_string(names.size()) + " kinds but " +
                                    std::to_string(values.size()) + " intensities");
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double v = std::stod(values[i]);
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("label: intensity " + values[i] + " outside [0,1]");
        label.entries.emplace_back(parse_kind(names[i]), v);
    }
    return label;
}

std::string DegradationLabel::kinds_str() const {
    if (entries.empty()) return "clean";
    std::string s;
    for (const auto& [k, v] : entries) s += (s.empty() ? "" : ",") + kind_name(k);
    return s;
}

std::string DegradationLabel::intensities_str() const {
    if (entries.empty()) return "0";
    std::ostringstream out;
    for (std::size_t i = 0; i < entries.size(); ++i) out << (i ? "," : "") << entries[i].second;
    return out.str();
}

int PriorConfig::index_of(DegradationKind k) const {
    auto it = std::find(kinds.begin(), kinds.end(), k);
    if (it == kinds.end()) throw std::invalid_argument("degradation kind '" + kind_name(k) + "' is not configured");
    return static_cast<int>(it - kinds.begin());
}

std::vector<double> oracle_similarity(const DegradationLabel& label, const PriorConfig& cfg) {
    const int ds = cfg.similarity_dim();
    if (label.clean()) return std::vector<double>(ds, 1.0 / ds);
    std::vector<double> s(ds, 0.0);
    double total = 0.0;
    for (const auto& [k, v] : label.entries) {
        s[cfg.index_of(k)] += v;
        total += v;
    }
    if (total <= 0.0) {
        for (const auto& [k, v] : label.entries) s[cfg.index_of(k)] = 1.0;
        total = static_cast<double>(label.entries.size());
    }
    for (auto& v : s) v /= total;
    return s;
}

template <class T>
PriorBundle<T> oracle_prior(const std::vector<DegradationLabel>& labels, const PriorConfig& cfg) {
    const int B = static_cast<int>(labels.size()), df = cfg.feature_dim, ds = cfg.similarity_dim();
    if (B == 0) throw std::invalid_argument("oracle_prior: no labels");
    // One fixed embedding row per configured kind.
    std::vector<double> table(static_cast<std::size_t>(ds) * df);
    for (int k = 0; k < ds; ++k) {
        Rng rng(splitmix64(cfg.seed ^ (0x5eedULL + static_cast<std::uint64_t>(cfg.kinds[k]))));
        for (int j = 0; j < df; ++j) table[k * df + j] = rng.normal();
    }
    std::vector<T> feat(static_cast<std::size_t>(B) * df, T(0)), sim(static_cast<std::size_t>(B) * ds);
    for (int b = 0; b < B; ++b) {
        const auto s = oracle_similarity(labels[b], cfg);
        for (int k = 0; k < ds; ++k) sim[b * ds + k] = static_cast<T>(s[k]);
        for (const auto& [kind, v] : labels[b].entries) {
            const int k = cfg.index_of(kind);
            for (int j = 0; j < df; ++j) feat[b * df + j] += static_cast<T>(table[k * df + j]);
        }
    }
    return {BasicTensor<T>({B, df}, std::move(feat)), BasicTensor<T>({B, ds}, std::move(sim))};
}

template <class T>
LearnedPriorParams<T> init_learned_prior(const PriorConfig& cfg, Rng& rng) {
    LearnedPriorParams<T> p;
    int in = 3;
    for (int i = 0; i < 3; ++i) {
        p.stage[i] = init_linear<T>(in * 4, kLearnedPriorWidths[i], rng);
        in = kLearnedPriorWidths[i];
    }
    p.features = init_linear<T>(in, cfg.feature_dim, rng);
    p.logits = init_linear<T>(in, cfg.similarity_dim(), rng);
    return p;
}

template <class T>
LearnedPrior<T> learned_prior(const BasicTensor<T>& image, const LearnedPriorParams<T>& p, const PriorConfig& cfg) {
    if (image.rank() != 4 || image.dim(1) != 3)
        throw ShapeError("learned_prior: expected [B,3,H,W], got " + shape_str(image.shape()));
    if (image.dim(2) < 16 || image.dim(3) < 16 || image.dim(2) % 8 || image.dim(3) % 8)
        throw ShapeError("learned_prior: spatial size must be at least 16 and divisible by 8, got " +
                         shape_str(image.shape()));
    auto h = image;
    for (int i = 0; i < 3; ++i) h = gelu(conv_pointwise(pixel_unshuffle(h, 2), p.stage[i].weight, p.stage[i].bias));
    auto pooled = mean_spatial(h);
    LearnedPrior<T> out;
    out.logits = linear(pooled, p.logits.weight, p.logits.bias);
    out.bundle.features = linear(pooled, p.features.weight, p.features.bias);
    out.bundle.similarity = softmax_axis(out.logits, 1);
    if (out.bundle.similarity.dim(1) != cfg.similarity_dim()) throw ShapeError("learned_prior: descriptor mismatch");
    return out;
}

#define RESTORE_INSTANTIATE(T)                                                                             \
    template PriorBundle<T> oracle_prior<T>(const std::vector<DegradationLabel>&, const PriorConfig&);    \
    template LearnedPriorParams<T> init_learned_prior<T>(const PriorConfig&, Rng&);                       \
    template LearnedPrior<T> learned_prior(const BasicTensor<T>&, const LearnedPriorParams<T>&,           \
                                           const PriorConfig&);

RESTORE_INSTANTIATE(float)
RESTORE_INSTANTIATE(double)

}  // namespace restore
