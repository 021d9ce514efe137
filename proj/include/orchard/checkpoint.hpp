#pragma once

#include <filesystem>
#include <optional>

#include "orchard/model.hpp"
#include "orchard/optim.hpp"

namespace orchard {

inline constexpr int kCheckpointFormatVersion = 1;

/// Directory with manifest.json plus one raw little-endian f32 file per
/// tensor. Optimizer moments are stored as "adam.m.<param>" / "adam.v.<param>".
void save_checkpoint(const ModelGraph& model, const AdamState* adam, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  ModelGraph model;
  std::optional<AdamState> adam;
};

/// Throws DataError on a corrupt manifest, a missing tensor file, or a
/// shape/byte-length mismatch, naming the offending tensor.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace orchard
