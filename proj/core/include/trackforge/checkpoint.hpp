#pragma once

#include <filesystem>

#include "trackforge/net.hpp"

namespace trackforge {

// Binary checkpoint: magic, format version, config record, then named
// tensors as (name, shape, little-endian f32 payload). EMA tensors are
// stored under the "ema/" namespace.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const ModelParams& ema);

struct Checkpoint {
  ModelParams params;
  ModelParams ema;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trackforge
