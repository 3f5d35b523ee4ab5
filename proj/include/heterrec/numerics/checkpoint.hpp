#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "heterrec/numerics/tensor.hpp"

namespace heterrec::numerics {

// On-disk layout (all offsets in bytes):
//
//   <name>.json  manifest
//     { "format": "heterrec-checkpoint", "version": 1,
//       "dtype": "float32", "byte_order": "little",
//       "blob": "<name>.bin", "blob_bytes": N,
//       "tensors": [ { "name": ..., "shape": [...], "offset": o, "bytes": b }, ... ],
//       "meta": { ... } }
//   <name>.bin   concatenation of row-major little-endian IEEE-754 float32 arrays
//
// Tensors are written in ascending name order with no padding, so offset of
// entry i equals the sum of bytes of entries 0..i-1.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::vector<CheckpointEntry> tensors;
  nlohmann::json meta;

  const CheckpointEntry& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& manifest_path, std::vector<CheckpointEntry> tensors,
                      const nlohmann::json& meta);

Checkpoint read_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace heterrec::numerics
