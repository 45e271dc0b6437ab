#pragma once

#include <string>
#include <vector>

#include "pvae/model.hpp"
#include "pvae/trainer.hpp"

namespace pvae {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

// All settings as "key=value" lines, keys namespaced "model." / "train.",
// in a fixed order. Doubles are printed with 17 significant digits so that
// parse_config_text(to_text(c)) == c.
std::string to_text(const RunConfig& config);

// Assign one setting; unknown keys and malformed values throw ConfigError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Apply "key=value" lines on top of `base`. Blank lines and lines starting
// with '#' are ignored; whitespace around keys and values is trimmed.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});

// File variant of parse_config_text; a missing file throws IoError.
RunConfig load_config_file(const std::string& path, RunConfig base = {});

std::vector<std::string> config_keys();

}  // namespace pvae
