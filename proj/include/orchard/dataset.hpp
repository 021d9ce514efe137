#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "orchard/tensor.hpp"

namespace orchard {

enum class Origin { original, augmented };

std::string to_string(Origin origin);

struct ImageRecord {
  Tensor image;                // 3 x H x W, values in [0, 1]
  std::vector<float> label;    // soft label over the class registry
  std::string source_path;
  Origin origin = Origin::original;
  std::size_t group = 0;       // index of the original this record derives from
};

struct LabeledImageSet {
  std::vector<std::string> classes;
  std::vector<ImageRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t num_classes() const { return classes.size(); }
  // Hard class of a record: argmax of its label, lowest index on ties.
  std::size_t class_of(std::size_t record) const;
  std::vector<std::size_t> class_counts() const;
  // Throws DataError on any violated invariant.
  void validate() const;
};

std::vector<float> one_hot(std::size_t index, std::size_t classes);

struct LoadOptions {
  std::size_t image_size = 256;
};

/// root/<class>/<image>.{png,jpg,jpeg}: classes sorted lexicographically,
/// records ordered by (class, filename), images resized to image_size^2.
LabeledImageSet load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

/// Sorted image files per class directory, without decoding.
struct DatasetListing {
  std::vector<std::string> classes;
  std::vector<std::pair<std::size_t, std::filesystem::path>> files;  // (class index, path)
};
DatasetListing list_dataset(const std::filesystem::path& root);

enum class SplitStage { before_augmentation, after_augmentation };

std::string to_string(SplitStage stage);
SplitStage parse_split_stage(const std::string& text);

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.2;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;
  SplitStage stage = SplitStage::before_augmentation;

  std::vector<std::string> validation_errors() const;
};

/// Largest-remainder apportionment of n items over {train, val, test};
/// equal remainders go to the earlier split.
std::array<std::size_t, 3> largest_remainder_counts(std::size_t n, const std::array<double, 3>& fractions);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Index-level split over units (records, or groups of records derived from
/// one original). Within each class the units are shuffled by the seed and
/// cut by largest-remainder counts. Each output list is sorted ascending.
SplitIndices stratified_split_indices(std::span<const std::size_t> unit_classes,
                                      std::span<const std::string> class_names, const SplitSpec& spec);

struct DatasetSplits {
  LabeledImageSet train, val, test;
};

DatasetSplits stratified_split(const LabeledImageSet& set, const SplitSpec& spec);
LabeledImageSet subset(const LabeledImageSet& set, std::span<const std::size_t> indices);

enum class Transform { hflip, vflip, rotate_pos15, rotate_neg15, brighten, darken, zoom };
inline constexpr std::array<Transform, 7> kTransformBank{Transform::hflip,        Transform::vflip,
                                                         Transform::rotate_pos15, Transform::rotate_neg15,
                                                         Transform::brighten,     Transform::darken,
                                                         Transform::zoom};

std::string to_string(Transform t);
Tensor apply_transform(const Tensor& chw, Transform t);

enum class AugmentMode {
  deterministic_bank,  // copy k uses bank entry k-1; factor <= 1 + bank size
  random_draw,         // each copy draws a bank entry from a per-record stream
};

/// The record itself followed by factor-1 transformed copies.
std::vector<ImageRecord> expand_record(const ImageRecord& record, std::size_t record_index, std::size_t factor,
                                       std::uint64_t seed, AugmentMode mode);

LabeledImageSet augment_expand(const LabeledImageSet& set, std::size_t factor = 8, std::uint64_t seed = 0,
                               AugmentMode mode = AugmentMode::deterministic_bank);

/// Stacks records[first, first+count) into N x 3 x H x W and N x C tensors.
void stack_batch(const LabeledImageSet& set, std::span<const std::size_t> order, std::size_t first,
                 std::size_t count, Tensor& images, Tensor& labels);

}  // namespace orchard
