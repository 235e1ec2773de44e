#include "restore/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace restore {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad number '" + v + "'");
    return d;
}

long to_long(const std::string& v) {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
    return n;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("bad boolean '" + v + "'");
}

std::array<int, 4> to_int4(const std::string& v) {
    const auto parts = split_list(v);
    if (parts.size() != 4) throw std::invalid_argument("expected 4 comma-separated integers, got '" + v + "'");
    std::array<int, 4> out{};
    for (int i = 0; i < 4; ++i) out[i] = static_cast<int>(to_long(parts[i]));
    return out;
}

std::string join4(const std::array<int, 4>& a) {
    return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + "," + std::to_string(a[3]);
}

std::string num(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"base_channels", [](RunConfig& c, const std::string& v) { c.model.base_channels = int(to_long(v)); }},
        {"blocks_per_stage", [](RunConfig& c, const std::string& v) { c.model.blocks_per_stage = to_int4(v); }},
        {"heads_per_stage", [](RunConfig& c, const std::string& v) { c.model.heads_per_stage = to_int4(v); }},
        {"experts", [](RunConfig& c, const std::string& v) { c.model.experts = int(to_long(v)); }},
        {"top_k", [](RunConfig& c, const std::string& v) { c.model.top_k = int(to_long(v)); }},
        {"prior_tokens", [](RunConfig& c, const std::string& v) { c.model.prior_tokens = int(to_long(v)); }},
        {"expansion", [](RunConfig& c, const std::string& v) { c.model.expansion = to_double(v); }},
        {"prior_mode",
         [](RunConfig& c, const std::string& v) {
             if (v == "oracle") c.model.prior.mode = PriorMode::oracle;
             else if (v == "learned") c.model.prior.mode = PriorMode::learned;
             else throw std::invalid_argument("prior_mode must be oracle or learned");
         }},
        {"feature_dim", [](RunConfig& c, const std::string& v) { c.model.prior.feature_dim = int(to_long(v)); }},
        {"prior_kinds",
         [](RunConfig& c, const std::string& v) {
             c.model.prior.kinds.clear();
             for (const auto& k : split_list(v)) c.model.prior.kinds.push_back(parse_kind(k));
         }},
        {"prior_seed", [](RunConfig& c, const std::string& v) { c.model.prior.seed = std::stoull(v); }},
        {"crop", [](RunConfig& c, const std::string& v) { c.train.crop = int(to_long(v)); }},
        {"batch", [](RunConfig& c, const std::string& v) { c.train.batch = int(to_long(v)); }},
        {"steps", [](RunConfig& c, const std::string& v) { c.train.steps = to_long(v); }},
        {"warmup_steps", [](RunConfig& c, const std::string& v) { c.train.warmup_steps = to_long(v); }},
        {"lr_init", [](RunConfig& c, const std::string& v) { c.train.lr_init = to_double(v); }},
        {"lr_min", [](RunConfig& c, const std::string& v) { c.train.lr_min = to_double(v); }},
        {"beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = to_double(v); }},
        {"beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = to_double(v); }},
        {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); }},
        {"lambda1", [](RunConfig& c, const std::string& v) { c.train.loss.lambda1 = to_double(v); }},
        {"lambda2", [](RunConfig& c, const std::string& v) { c.train.loss.lambda2 = to_double(v); }},
        {"charb_eps", [](RunConfig& c, const std::string& v) { c.train.loss.charb_eps = to_double(v); }},
        {"balance_eps", [](RunConfig& c, const std::string& v) { c.train.loss.balance_eps = to_double(v); }},
        {"cv_squared", [](RunConfig& c, const std::string& v) { c.train.loss.cv_squared = to_bool(v); }},
        {"prior_aux_weight", [](RunConfig& c, const std::string& v) { c.train.prior_aux_weight = to_double(v); }},
        {"augment_flip", [](RunConfig& c, const std::string& v) { c.train.augment_flip = to_bool(v); }},
        {"augment_rotate", [](RunConfig& c, const std::string& v) { c.train.augment_rotate = to_bool(v); }},
        {"checkpoint_every", [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = to_long(v); }},
        {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = std::stoull(v); }},
    };
    return table;
}

}  // namespace

void TrainConfig::validate() const {
    if (crop < 8 || (crop & (crop - 1))) throw std::invalid_argument("train: crop must be a power of two >= 8");
    if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (steps < 1 || warmup_steps < 0 || steps < warmup_steps)
        throw std::invalid_argument("train: need steps >= warmup_steps >= 0 and steps >= 1");
    if (lr_init <= 0 || lr_min < 0 || weight_decay < 0 || prior_aux_weight < 0)
        throw std::invalid_argument("train: learning rates and weights must be nonnegative");
    loss.validate();
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->second(cfg, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
        }
    }
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string model_config_text(const ModelConfig& m) {
    std::ostringstream out;
    std::string kinds;
    for (auto k : m.prior.kinds) kinds += (kinds.empty() ? "" : ",") + kind_name(k);
    out << "base_channels = " << m.base_channels << '\n'
        << "blocks_per_stage = " << join4(m.blocks_per_stage) << '\n'
        << "heads_per_stage = " << join4(m.heads_per_stage) << '\n'
        << "experts = " << m.experts << '\n'
        << "top_k = " << m.top_k << '\n'
        << "prior_tokens = " << m.prior_tokens << '\n'
        << "expansion = " << num(m.expansion) << '\n'
        << "prior_mode = " << (m.prior.mode == PriorMode::learned ? "learned" : "oracle") << '\n'
        << "feature_dim = " << m.prior.feature_dim << '\n'
        << "prior_kinds = " << kinds << '\n'
        << "prior_seed = " << m.prior.seed << '\n';
    return out.str();
}

std::string config_text(const RunConfig& cfg) {
    const auto& t = cfg.train;
    std::ostringstream out;
    out << model_config_text(cfg.model) << "crop = " << t.crop << '\n'
        << "batch = " << t.batch << '\n'
        << "steps = " << t.steps << '\n'
        << "warmup_steps = " << t.warmup_steps << '\n'
        << "lr_init = " << num(t.lr_init) << '\n'
        << "lr_min = " << num(t.lr_min) << '\n'
        << "beta1 = " << num(t.beta1) << '\n'
        << "beta2 = " << num(t.beta2) << '\n'
        << "weight_decay = " << num(t.weight_decay) << '\n'
        << "lambda1 = " << num(t.loss.lambda1) << '\n'
        << "lambda2 = " << num(t.loss.lambda2) << '\n'
        << "charb_eps = " << num(t.loss.charb_eps) << '\n'
        << "balance_eps = " << num(t.loss.balance_eps) << '\n'
        << "cv_squared = " << (t.loss.cv_squared ? "true" : "false") << '\n'
        << "prior_aux_weight = " << num(t.prior_aux_weight) << '\n'
        << "augment_flip = " << (t.augment_flip ? "true" : "false") << '\n'
        << "augment_rotate = " << (t.augment_rotate ? "true" : "false") << '\n'
        << "checkpoint_every = " << t.checkpoint_every << '\n'
        << "seed = " << t.seed << '\n';
    return out.str();
}

}  // namespace restore
