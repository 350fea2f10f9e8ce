#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "topiccap/tape.hpp"

namespace topiccap::nn {

struct CheckpointMeta {
  std::int64_t step = 0;
  std::map<std::string, std::string> extra;  // e.g. {"variant": "denoising"}
};

// Writes <path_prefix>.json (names, shapes, dtype, step, extra) and
// <path_prefix>.bin (concatenated little-endian float32 blobs, manifest order).
void save_checkpoint(const ParameterSet& params, const std::string& path_prefix,
                     const CheckpointMeta& meta = {});

// Loads into the set: existing entries must match shapes, missing entries are
// created. Returns the stored metadata.
CheckpointMeta load_checkpoint(ParameterSet& params, const std::string& path_prefix);

}  // namespace topiccap::nn
