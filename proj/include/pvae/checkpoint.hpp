#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pvae/config.hpp"
#include "pvae/model.hpp"
#include "pvae/trainer.hpp"

namespace pvae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian layout: "PVAE", version (u32), config-text length (u64) and
// bytes, step (u64), tensor count (u64), then per tensor: name length (u64)
// and bytes, rank (u64), dims (u64 each), raw f64 data.
struct Checkpoint {
    std::string config_text;
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);  // throws FormatError

// Written to a temporary sibling file and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Model parameters under their own names, Adam moments under "adam.m/" and
// "adam.v/", and trainer bookkeeping under "state.".
Checkpoint make_checkpoint(const RunConfig& config, const Model& model, const TrainState& state);

// Rebuild the model and trainer state a checkpoint describes.
struct Restored {
    RunConfig config;
    Model model;
    TrainState state;
};
Restored restore_checkpoint(const Checkpoint& ckpt);

}  // namespace pvae
