#pragma once

// Binary checkpoint, single precision only.  Layout (all little-endian):
//   bytes 0..7   magic "WSRCKPT1"
//   u32          format version (1)
//   u64 + bytes  canonical config text
//   u64          completed training steps
//   u32          parameter record count
//   per record:  u32 name length, name bytes, u32 rank, u64 extents, f32 data
//   u64          FNV-1a 64 checksum of every preceding byte
//
// Malformed or truncated files raise CheckpointError; filesystem failures
// raise IoError.  Loading rebuilds the model from the embedded config and
// requires an exact match of parameter names, order and shapes.

#include <cstdint>
#include <string>

#include "wsr/model.hpp"

namespace wsr {

void save_checkpoint(const std::string& path, const Model<float>& m);
Model<float> load_checkpoint(const std::string& path);

}  // namespace wsr
