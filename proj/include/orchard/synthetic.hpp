#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "orchard/dataset.hpp"

namespace orchard {

/// Coloured-blob toy set: a disc of the class colour on a noisy gray
/// background. Class k uses colour k mod 3 (red, green, blue).
struct BlobSpec {
  std::vector<std::string> class_names{"blue", "green", "red"};
  std::vector<std::size_t> class_counts{200, 200, 200};
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
};

/// Records ordered by (class, index); image i is a pure function of (seed, i).
LabeledImageSet make_blob_dataset(const BlobSpec& spec);

/// Writes root/<class>/<class>_<nnnn>.png for every record.
void write_image_tree(const LabeledImageSet& set, const std::filesystem::path& root);

}  // namespace orchard
