#include "pvae/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "pvae/errors.hpp"

namespace pvae {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*part, std::size_t T::*member) {
    return {key, [=](const RunConfig& c) { return std::to_string((c.*part).*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                (c.*part).*member = static_cast<std::size_t>(parse_uint(k, v));
            }};
}

template <typename T>
Field u64_field(const char* key, T RunConfig::*part, std::uint64_t T::*member) {
    return {key, [=](const RunConfig& c) { return std::to_string((c.*part).*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*part).*member = parse_uint(k, v); }};
}

Field double_field(const char* key, double TrainConfig::*member) {
    return {key, [=](const RunConfig& c) { return fmt_double(c.train.*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) { c.train.*member = parse_double(k, v); }};
}

const std::vector<Field>& fields() {
    using M = ModelConfig;
    using T = TrainConfig;
    static const std::vector<Field> table = {
        size_field("model.channels", &RunConfig::model, &M::channels),
        size_field("model.height", &RunConfig::model, &M::height),
        size_field("model.width", &RunConfig::model, &M::width),
        size_field("model.levels", &RunConfig::model, &M::levels),
        size_field("model.stages", &RunConfig::model, &M::stages),
        size_field("model.trunk_width", &RunConfig::model, &M::trunk_width),
        size_field("model.latent1", &RunConfig::model, &M::latent1),
        size_field("model.latent2", &RunConfig::model, &M::latent2),
        size_field("model.layers", &RunConfig::model, &M::pixelcnn_layers),
        size_field("model.prior_layers", &RunConfig::model, &M::prior_layers),
        size_field("model.hidden", &RunConfig::model, &M::hidden),
        size_field("model.features", &RunConfig::model, &M::feature_channels),
        size_field("model.kernel", &RunConfig::model, &M::kernel),
        {"model.variant", [](const RunConfig& c) { return variant_name(c.model.variant); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.model.variant = parse_variant(v); }},
        {"model.output", [](const RunConfig& c) { return output_name(c.model.output); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.model.output = parse_output(v); }},
        double_field("train.lr", &T::learning_rate),
        double_field("train.beta1", &T::beta1),
        double_field("train.beta2", &T::beta2),
        double_field("train.epsilon", &T::epsilon),
        double_field("train.clip", &T::clip_norm),
        size_field("train.batch_size", &RunConfig::train, &T::batch_size),
        size_field("train.steps", &RunConfig::train, &T::steps),
        u64_field("train.seed", &RunConfig::train, &T::seed),
        size_field("train.kl_warmup", &RunConfig::train, &T::kl_warmup),
        size_field("train.checkpoint_interval", &RunConfig::train, &T::checkpoint_interval),
        size_field("train.eval_interval", &RunConfig::train, &T::eval_interval),
        {"train.log_seconds", [](const RunConfig& c) { return std::string(c.train.log_seconds ? "true" : "false"); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.log_seconds = parse_bool(k, v); }},
        {"train.dataset", [](const RunConfig& c) { return c.train.dataset; },
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v != "toy" && v != "mnist") throw ConfigError(k + ": expected toy or mnist, got '" + v + "'");
             c.train.dataset = v;
         }},
        {"train.data_dir", [](const RunConfig& c) { return c.train.data_dir; },
         [](RunConfig& c, const std::string&, const std::string& v) { c.train.data_dir = v; }},
        size_field("train.train_size", &RunConfig::train, &T::train_size),
        size_field("train.test_size", &RunConfig::train, &T::test_size),
        {"train.binarization", [](const RunConfig& c) { return binarization_name(c.train.binarization); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.train.binarization = parse_binarization(v); }},
        u64_field("train.binarization_seed", &RunConfig::train, &T::binarization_seed),
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_text(const RunConfig& config) {
    std::string out;
    for (const Field& f : fields()) out += std::string(f.key) + "=" + f.get(config) + "\n";
    return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
    for (const Field& f : fields())
        if (key == f.key) {
            f.set(config, key, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        apply_setting(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) keys.emplace_back(f.key);
    return keys;
}

}  // namespace pvae
