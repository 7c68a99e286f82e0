#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazardfuse/fusion/network.hpp"

namespace hf {

struct CheckpointMeta {
  std::string network_id;
  std::uint64_t rng_seed = 0;
  Hyperparams hp;
  std::vector<std::string> parents;  // transfer lineage
};

struct Checkpoint {
  CheckpointMeta meta;
  FusionNetwork<float> net;
};

/// Writes <stem>.bin (little-endian float32 parameter blob) and <stem>.json
/// (manifest: layer specs, parameter shapes and byte offsets, RNG seed,
/// training hyperparameters, parent-checkpoint ids).
void save_checkpoint(const std::string& stem, const FusionNetwork<float>& net,
                     const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::string& stem);

}  // namespace hf
