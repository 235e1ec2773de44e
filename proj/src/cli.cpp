#include "restore/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "restore/checkpoint.hpp"
#include "restore/train.hpp"

namespace restore {

namespace {

struct Common {
    std::string config, out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "Configuration file (key = value lines)");
    sub->add_option_function<std::uint64_t>("--seed", [&c](const std::uint64_t& s) {
        c.seed = s;
        c.seed_set = true;
    }, "Random seed");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--threads", c.threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig config_or_default(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed_set) cfg.train.seed = c.seed;
    return cfg;
}

std::vector<DegradationKind> parse_kinds(const std::string& list) {
    std::vector<DegradationKind> out;
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse_kind(item));
    return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Image restoration with gated attention and degradation-aware experts", "restore"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Common common;
    SynthOptions synth;
    std::string synth_kinds = "noise,rain,haze";
    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic degraded/clean dataset");
    add_common(cmd_synth, common);
    cmd_synth->add_option("--count", synth.count, "Number of images")->check(CLI::PositiveNumber);
    cmd_synth->add_option("--size", synth.size, "Square image size (power of two >= 32)");
    cmd_synth->add_option("--kinds", synth_kinds, "Comma-separated degradation kinds");
    cmd_synth->add_option("--noise-sigma", synth.noise_sigma, "Fixed noise sigma on the 0-255 scale (0 varies)");
    cmd_synth->add_flag("--masked", synth.masked, "Degrade only inside a random mask");

    std::string data, checkpoint, image, label_kinds, label_intensities;
    auto* cmd_train = app.add_subcommand("train", "Train a model on a manifest");
    add_common(cmd_train, common);
    cmd_train->add_option("--data", data, "Manifest file")->required();

    auto* cmd_eval = app.add_subcommand("eval", "Report PSNR/SSIM per image and routing statistics");
    add_common(cmd_eval, common);
    cmd_eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    cmd_eval->add_option("--data", data, "Manifest file")->required();

    auto* cmd_gates = app.add_subcommand("gates", "Export full-resolution gate maps as PGM images");
    add_common(cmd_gates, common);
    cmd_gates->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    cmd_gates->add_option("--image", image, "Input PPM image")->required();
    cmd_gates->add_option("--kinds", label_kinds, "Degradation kinds for the oracle prior (default clean)");
    cmd_gates->add_option("--intensities", label_intensities, "Intensities matching --kinds");

    int route_count = 4, route_size = 64;
    auto* cmd_route = app.add_subcommand("route-stats", "Print per-expert routing totals");
    add_common(cmd_route, common);
    cmd_route->add_option("--checkpoint", checkpoint, "Model checkpoint (default: fresh model from --config/--seed)");
    cmd_route->add_option("--data", data, "Manifest file (default: synthetic images)");
    cmd_route->add_option("--count", route_count, "Synthetic images when no manifest is given")->check(CLI::PositiveNumber);
    cmd_route->add_option("--size", route_size, "Synthetic image size");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
        return 2;
    }

    try {
        if (*cmd_synth) {
            if (common.out.empty()) throw UsageError("synth requires --out");
            if (!synth_kinds.empty()) synth.kinds = parse_kinds(synth_kinds);
            const auto m = synth_dataset(common.out, common.seed, synth);
            out << "wrote " << m.entries.size() << " images to " << common.out << '\n';
        } else if (*cmd_train) {
            if (common.config.empty()) throw UsageError("train requires --config");
            const RunConfig cfg = config_or_default(common);
            const std::string dir = common.out.empty() ? "run" : common.out;
            std::filesystem::create_directories(dir);
            std::ofstream(std::filesystem::path(dir) / "config.txt") << config_text(cfg);
            const auto samples = load_samples(Manifest::load(data));
            Model m = build_model(cfg.model, cfg.train.seed);
            out << "parameters " << m.parameter_count() << '\n';
            TrainOptions opt;
            opt.out_dir = dir;
            const long every = std::max<long>(1, cfg.train.steps / 20);
            opt.on_step = [&](const StepRecord& r) {
                if (r.step % every == 0 || r.step + 1 == cfg.train.steps) out << format_record(r) << '\n' << std::flush;
            };
            train(m, samples, cfg.train, opt);
            out << "checkpoint " << (std::filesystem::path(dir) / "checkpoint.bin").string() << '\n';
        } else if (*cmd_eval) {
            const Model m = load_checkpoint(checkpoint);
            const auto report = evaluate(m, Manifest::load(data), common.threads);
            const std::string text = format_report(report);
            out << text;
            if (!common.out.empty()) {
                std::filesystem::create_directories(common.out);
                std::ofstream(std::filesystem::path(common.out) / "report.txt") << text;
            }
            if (report.images.empty()) throw std::runtime_error("no image could be evaluated");
        } else if (*cmd_gates) {
            const Model m = load_checkpoint(checkpoint);
            const Tensor img = read_ppm(image);
            const auto label = label_kinds.empty() ? DegradationLabel{}
                                                   : DegradationLabel::parse(label_kinds, label_intensities);
            NoGradGuard guard;
            const auto maps = full_resolution_gate_maps(
                m, Tensor({1, img.dim(0), img.dim(1), img.dim(2)}, std::vector<float>(img.data().begin(), img.data().end())),
                {label});
            const std::filesystem::path dir = common.out.empty() ? "." : common.out;
            std::filesystem::create_directories(dir);
            for (const auto& [name, g] : maps) {
                const auto file = dir / (name + ".pgm");
                write_pgm(file, Tensor({1, g.dim(2), g.dim(3)}, std::vector<float>(g.data().begin(), g.data().end())));
                out << file.string() << '\n';
            }
        } else if (*cmd_route) {
            const RunConfig cfg = config_or_default(common);
            const Model m = checkpoint.empty() ? build_model(cfg.model, cfg.train.seed) : load_checkpoint(checkpoint);
            std::vector<std::vector<RoutingStats<float>>> stats;
            if (!data.empty()) {
                for (const auto& s : load_samples(Manifest::load(data))) {
                    stats.emplace_back();
                    restore_image(m, s.degraded, s.label, &stats.back());
                }
            } else {
                for (int i = 0; i < route_count; ++i) {
                    const auto seed = splitmix64(common.seed + static_cast<std::uint64_t>(i));
                    const Tensor clean = synth_clean(seed, route_size, route_size);
                    const Tensor deg = add_gaussian_noise(clean, 25.0, seed + 1);
                    DegradationLabel label;
                    label.entries.emplace_back(DegradationKind::noise, 0.5);
                    stats.emplace_back();
                    restore_image(m, deg, label, &stats.back());
                }
            }
            out << format_routing(summarize_routing(stats));
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << app.help("", CLI::AppFormatMode::All);
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace restore
