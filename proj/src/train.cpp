#include "restore/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "restore/checkpoint.hpp"
#include "restore/losses.hpp"
#include "restore/ops.hpp"
#include "restore/optim.hpp"

namespace restore {

namespace {

Tensor with_batch_dim(const Tensor& img) {
    return img.rank() == 4 ? img : Tensor({1, img.dim(0), img.dim(1), img.dim(2)}, std::vector<float>(img.data().begin(), img.data().end()));
}

// Crop [1,C,H,W] at (y0,x0), then apply one of the 8 dihedral transforms:
// bit 0 flips horizontally, bits 1-2 count quarter turns.
Tensor crop_transform(const Tensor& img, int y0, int x0, int size, int transform) {
    const int C = img.dim(1), W = img.dim(3);
    std::vector<float> out(static_cast<std::size_t>(C) * size * size);
    const float* src = img.ptr();
    const int turns = transform >> 1;
    const bool flip = transform & 1;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                int sy = y, sx = x;
                for (int t = 0; t < turns; ++t) {
                    const int ny = sx, nx = size - 1 - sy;
                    sy = ny;
                    sx = nx;
                }
                if (flip) sx = size - 1 - sx;
                out[(static_cast<std::size_t>(c) * size + y) * size + x] =
                    src[(static_cast<std::size_t>(c) * img.dim(2) + y0 + sy) * W + x0 + sx];
            }
    return Tensor({1, C, size, size}, std::move(out));
}

void require_finite(double v, const char* component, long step) {
    if (!std::isfinite(v)) {
        Tape<float>::current().clear();
        throw std::runtime_error("training diverged at step " + std::to_string(step) + ": " + component +
                                 " loss is " + (std::isnan(v) ? "NaN" : "infinite"));
    }
}

Tensor similarity_targets(const std::vector<DegradationLabel>& labels, const PriorConfig& cfg) {
    const int d = cfg.similarity_dim();
    std::vector<float> t;
    t.reserve(labels.size() * d);
    for (const auto& l : labels)
        for (double v : oracle_similarity(l, cfg)) t.push_back(static_cast<float>(v));
    return Tensor({static_cast<int>(labels.size()), d}, std::move(t));
}

}  // namespace

std::vector<Sample> load_samples(const Manifest& manifest) {
    std::vector<Sample> out;
    out.reserve(manifest.entries.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        Sample s;
        s.path = manifest.entries[i].path;
        s.label = manifest.entries[i].label;
        s.degraded = with_batch_dim(read_ppm(manifest.degraded_path(i)));
        s.clean = with_batch_dim(read_ppm(manifest.clean_path(i)));
        if (s.degraded.shape() != s.clean.shape())
            throw std::runtime_error(s.path + ": degraded " + shape_str(s.degraded.shape()) + " vs clean " +
                                     shape_str(s.clean.shape()));
        if (std::filesystem::exists(manifest.mask_path(i))) s.mask = read_pgm(manifest.mask_path(i));
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_record(const StepRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld %.9g %.9g %.9g %.9g %.9g %.9g", r.step, r.charbonnier, r.balance, r.fft,
                  r.total, r.lr, r.prior_ce);
    return buf;
}

Batch make_batch(const std::vector<Sample>& data, const std::vector<std::size_t>& indices, const TrainConfig& tc,
                 Rng& rng) {
    std::vector<Tensor> deg, clean;
    Batch b;
    for (std::size_t i : indices) {
        const Sample& s = data.at(i);
        const int H = s.degraded.dim(2), W = s.degraded.dim(3);
        if (H < tc.crop || W < tc.crop)
            throw std::runtime_error(s.path + ": image " + std::to_string(H) + "x" + std::to_string(W) +
                                     " smaller than crop " + std::to_string(tc.crop));
        const int y0 = rng.uniform_int(0, H - tc.crop), x0 = rng.uniform_int(0, W - tc.crop);
        int transform = 0;
        if (tc.augment_flip) transform |= rng.uniform_int(0, 1);
        if (tc.augment_rotate) transform |= rng.uniform_int(0, 3) << 1;
        deg.push_back(crop_transform(s.degraded, y0, x0, tc.crop, transform));
        clean.push_back(crop_transform(s.clean, y0, x0, tc.crop, transform));
        b.labels.push_back(s.label);
    }
    b.degraded = concat(deg, 0);
    b.clean = concat(clean, 0);
    return b;
}

std::vector<StepRecord> train(Model& m, const std::vector<Sample>& data, const TrainConfig& tc,
                              const TrainOptions& opt) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    tc.validate();
    AdamW optimizer(m.parameters(), {tc.beta1, tc.beta2, 1e-8, tc.weight_decay});
    const WarmupCosine schedule{tc.lr_init, tc.warmup_steps, tc.steps, tc.lr_min};
    Rng rng(splitmix64(tc.seed ^ 0x7261696eULL));

    std::ofstream log;
    if (!opt.out_dir.empty()) {
        std::filesystem::create_directories(opt.out_dir);
        log.open(opt.out_dir / "metrics.log");
        if (!log) throw std::runtime_error("cannot write " + (opt.out_dir / "metrics.log").string());
        log << "# step charbonnier balance fft total lr prior_ce\n";
    }

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<StepRecord> records;
    records.reserve(static_cast<std::size_t>(tc.steps));
    const bool learned = m.cfg.prior.mode == PriorMode::learned;

    for (long step = 0; step < tc.steps; ++step) {
        std::vector<std::size_t> idx;
        while (static_cast<int>(idx.size()) < tc.batch) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const Batch batch = make_batch(data, idx, tc, rng);

        auto out = forward(m, batch.degraded, batch.labels);
        auto report = total_loss(out.image, batch.clean, out.stats, tc.loss);
        StepRecord rec;
        rec.step = step;
        rec.lr = schedule(step);
        rec.charbonnier = report.charbonnier.item();
        rec.balance = report.balance.item();
        rec.fft = report.fft.item();
        rec.total = report.total.item();
        require_finite(rec.charbonnier, "charbonnier", step);
        require_finite(rec.balance, "balance", step);
        require_finite(rec.fft, "fft", step);
        require_finite(rec.total, "total", step);
        auto objective = report.total;
        if (learned && tc.prior_aux_weight > 0) {
            auto ce = cross_entropy(out.prior_logits, similarity_targets(batch.labels, m.cfg.prior));
            rec.prior_ce = ce.item();
            require_finite(rec.prior_ce, "prior cross-entropy", step);
            objective = add(objective, scale(ce, static_cast<float>(tc.prior_aux_weight)));
        }
        backward(objective);
        optimizer.step(rec.lr);

        if (log) log << format_record(rec) << '\n';
        if (opt.on_step) opt.on_step(rec);
        records.push_back(rec);
        if (!opt.out_dir.empty() && tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0 &&
            step + 1 < tc.steps) {
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_%06ld.bin", step + 1);
            save_checkpoint(opt.out_dir / name, m);
        }
    }
    if (!opt.out_dir.empty()) save_checkpoint(opt.out_dir / "checkpoint.bin", m);
    return records;
}

Tensor restore_image(const Model& m, const Tensor& degraded, const DegradationLabel& label,
                     std::vector<RoutingStats<float>>* stats) {
    NoGradGuard guard;
    auto out = forward(m, with_batch_dim(degraded), {label});
    if (stats) *stats = out.stats;
    Tensor img = out.image.detach();
    for (float& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

double coefficient_of_variation(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return mean == 0.0 ? 0.0 : std::sqrt(var) / mean;
}

RoutingSummary summarize_routing(const std::vector<std::vector<RoutingStats<float>>>& per_image) {
    RoutingSummary r;
    for (const auto& stages : per_image) {
        if (r.w.empty()) {
            r.w.resize(stages.size());
            r.s.resize(stages.size());
        }
        for (std::size_t k = 0; k < stages.size(); ++k) {
            const auto& st = stages[k];
            r.w[k].resize(st.s_totals.size(), 0.0);
            r.s[k].resize(st.s_totals.size(), 0.0);
            for (std::size_t n = 0; n < st.s_totals.size(); ++n) {
                r.w[k][n] += st.w_totals.data()[n];
                r.s[k][n] += st.s_totals[n];
            }
        }
    }
    for (std::size_t k = 0; k < r.w.size(); ++k) {
        r.cv_w.push_back(coefficient_of_variation(r.w[k]));
        r.cv_s.push_back(coefficient_of_variation(r.s[k]));
    }
    return r;
}

EvalReport evaluate(const Model& m, const Manifest& manifest, int threads) {
    const std::size_t n = manifest.entries.size();
    struct Slot {
        ImageScore score;
        std::vector<RoutingStats<float>> stats;
        std::string error;
    };
    std::vector<Slot> slots(n);
    auto work = [&](std::size_t i) {
        Slot& s = slots[i];
        s.score.path = manifest.entries[i].path;
        try {
            const Tensor deg = with_batch_dim(read_ppm(manifest.degraded_path(i)));
            const Tensor clean = with_batch_dim(read_ppm(manifest.clean_path(i)));
            if (deg.shape() != clean.shape())
                throw std::runtime_error("degraded " + shape_str(deg.shape()) + " vs clean " + shape_str(clean.shape()));
            const Tensor out = restore_image(m, deg, manifest.entries[i].label, &s.stats);
            s.score.psnr = psnr(out, clean);
            s.score.ssim = ssim(out, clean);
        } catch (const std::exception& e) {
            s.error = e.what();
        }
    };
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = static_cast<std::size_t>(t); i < n; i += static_cast<std::size_t>(threads)) work(i);
            });
        for (auto& th : pool) th.join();
    }

    EvalReport r;
    std::vector<std::vector<RoutingStats<float>>> stats;
    for (auto& s : slots) {
        if (!s.error.empty()) {
            std::fprintf(stderr, "warning: skipping %s: %s\n", s.score.path.c_str(), s.error.c_str());
            r.skipped.emplace_back(s.score.path, s.error);
            continue;
        }
        r.images.push_back(s.score);
        r.mean_psnr += s.score.psnr;
        r.mean_ssim += s.score.ssim;
        stats.push_back(std::move(s.stats));
    }
    if (!r.images.empty()) {
        r.mean_psnr /= static_cast<double>(r.images.size());
        r.mean_ssim /= static_cast<double>(r.images.size());
    }
    r.routing = summarize_routing(stats);
    return r;
}

std::string format_routing(const RoutingSummary& r) {
    std::ostringstream out;
    char buf[128];
    for (std::size_t k = 0; k < r.w.size(); ++k) {
        out << "routing stage " << k << '\n';
        for (std::size_t n = 0; n < r.w[k].size(); ++n) {
            std::snprintf(buf, sizeof buf, "  expert %zu W %.6g S %.0f\n", n, r.w[k][n], r.s[k][n]);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "  cv W %.6g S %.6g\n", r.cv_w[k], r.cv_s[k]);
        out << buf;
    }
    return out.str();
}

std::string format_report(const EvalReport& r) {
    std::ostringstream out;
    char buf[512];
    for (const auto& s : r.images) {
        std::snprintf(buf, sizeof buf, "%s %.6f %.6f\n", s.path.c_str(), s.psnr, s.ssim);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "mean %.6f %.6f\n", r.mean_psnr, r.mean_ssim);
    out << buf;
    for (const auto& [path, why] : r.skipped) out << "skipped " << path << ": " << why << '\n';
    out << format_routing(r.routing);
    return out.str();
}

}  // namespace restore
