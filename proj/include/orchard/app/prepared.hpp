#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "orchard/app/run_config.hpp"
#include "orchard/dataset.hpp"

namespace orchard::app {

inline constexpr int kPreparedFormatVersion = 1;
inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

struct PrepareSummary {
  std::vector<std::string> classes;
  std::size_t image_size = 0;
  std::size_t originals = 0;
  std::size_t augment_factor = 1;
  std::size_t total = 0;
  // [split][class] record counts, splits in train/val/test order.
  std::array<std::vector<std::size_t>, 3> counts;

  std::size_t split_total(std::size_t split) const;
};

/// Loads the tree, expands each original by the augmentation factor and
/// streams the records into dir/cache/<split>.f32 next to manifest.csv and
/// summary.json. The result equals stratified_split(augment_expand(load)).
PrepareSummary prepare_dataset(const RunConfig& config, const std::filesystem::path& dir);

struct PreparedData {
  PrepareSummary summary;
  DatasetSplits splits;
};

PrepareSummary read_prepare_summary(const std::filesystem::path& dir);
/// Throws DataError when the manifest, summary and cache disagree.
PreparedData load_prepared(const std::filesystem::path& dir);

}  // namespace orchard::app
