#include "orchard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "orchard/errors.hpp"
#include "orchard/image_io.hpp"
#include "orchard/parallel.hpp"

namespace fs = std::filesystem;

namespace orchard {

std::string to_string(Origin origin) { return origin == Origin::original ? "original" : "augmented"; }

std::string to_string(SplitStage stage) {
  return stage == SplitStage::before_augmentation ? "before_augmentation" : "after_augmentation";
}

SplitStage parse_split_stage(const std::string& text) {
  if (text == "before_augmentation") return SplitStage::before_augmentation;
  if (text == "after_augmentation") return SplitStage::after_augmentation;
  throw ConfigError("unknown split stage '" + text + "'");
}

std::vector<float> one_hot(std::size_t index, std::size_t classes) {
  std::vector<float> v(classes, 0.0f);
  v.at(index) = 1.0f;
  return v;
}

std::size_t LabeledImageSet::class_of(std::size_t record) const {
  const auto& label = records.at(record).label;
  return static_cast<std::size_t>(std::max_element(label.begin(), label.end()) - label.begin());
}

std::vector<std::size_t> LabeledImageSet::class_counts() const {
  std::vector<std::size_t> counts(classes.size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) ++counts[class_of(i)];
  return counts;
}

void LabeledImageSet::validate() const {
  if (classes.size() < 2) throw DataError("dataset needs at least 2 classes, found " + std::to_string(classes.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& r = records[i];
    if (r.label.size() != classes.size()) {
      throw DataError("record '" + r.source_path + "' label length " + std::to_string(r.label.size()) +
                      " != class count " + std::to_string(classes.size()));
    }
    double s = 0.0;
    for (float v : r.label) s += v;
    if (std::abs(s - 1.0) > 1e-6) throw DataError("record '" + r.source_path + "' label does not sum to 1");
    if (r.image.rank() != 3 || r.image.dim(0) != 3) {
      throw DataError("record '" + r.source_path + "' image is not 3 x H x W: " + shape_str(r.image.shape()));
    }
  }
}

// ---- loading ----

namespace {
bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}
}  // namespace

DatasetListing list_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
  DatasetListing listing;
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (class_dirs.size() < 2) {
    throw DataError("dataset root '" + root.string() + "' must contain at least 2 class directories, found " +
                    std::to_string(class_dirs.size()));
  }
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    const std::string name = class_dirs[c].filename().string();
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    if (files.empty()) throw DataError("class directory '" + name + "' contains no PNG/JPEG images");
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    listing.classes.push_back(name);
    for (auto& f : files) listing.files.emplace_back(c, std::move(f));
  }
  return listing;
}

LabeledImageSet load_dataset(const fs::path& root, const LoadOptions& options) {
  if (options.image_size == 0) throw ConfigError("image_size must be positive");
  DatasetListing listing = list_dataset(root);
  LabeledImageSet set;
  set.classes = listing.classes;
  set.records.resize(listing.files.size());
  // Slots are filled by index, so record order never depends on completion order.
  parallel_for(listing.files.size(), [&](std::size_t i) {
    const auto& [cls, path] = listing.files[i];
    ImageRecord& r = set.records[i];
    r.image = resize_bilinear(to_tensor(decode_image(path)), options.image_size, options.image_size);
    r.label = one_hot(cls, set.classes.size());
    r.source_path = path.string();
    r.origin = Origin::original;
    r.group = i;
  });
  return set;
}

// ---- splitting ----

std::vector<std::string> SplitSpec::validation_errors() const {
  std::vector<std::string> errors;
  for (auto [name, f] : {std::pair{"train_fraction", train_fraction}, std::pair{"val_fraction", val_fraction},
                         std::pair{"test_fraction", test_fraction}}) {
    if (!(f >= 0.0 && f <= 1.0)) errors.push_back(std::string(name) + " must be in [0, 1]");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    errors.push_back("split fractions must sum to 1");
  }
  return errors;
}

std::array<std::size_t, 3> largest_remainder_counts(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * fractions[i];
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainders[i] = std::max(0.0, quota - static_cast<double>(counts[i]));
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-9; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

SplitIndices stratified_split_indices(std::span<const std::size_t> unit_classes,
                                      std::span<const std::string> class_names, const SplitSpec& spec) {
  const auto errors = spec.validation_errors();
  if (!errors.empty()) throw ConfigError("invalid split: " + errors.front());
  const std::array<double, 3> fractions{spec.train_fraction, spec.val_fraction, spec.test_fraction};
  static constexpr const char* kSplitNames[3] = {"train", "val", "test"};

  std::size_t num_classes = class_names.size();
  for (std::size_t c : unit_classes) num_classes = std::max(num_classes, c + 1);

  Rng rng(spec.seed);
  SplitIndices out;
  std::array<std::vector<std::size_t>*, 3> targets{&out.train, &out.val, &out.test};
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t u = 0; u < unit_classes.size(); ++u) {
      if (unit_classes[u] == c) members.push_back(u);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto counts = largest_remainder_counts(members.size(), fractions);
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    for (std::size_t s = 0; s < 3; ++s) {
      if (fractions[s] > 0.0 && counts[s] == 0) {
        throw DataError("class '" + name + "' has " + std::to_string(members.size()) +
                        " units, too few for a non-empty " + kSplitNames[s] + " split");
      }
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) targets[s]->push_back(members[pos++]);
    }
  }
  for (auto* t : targets) std::sort(t->begin(), t->end());
  return out;
}

LabeledImageSet subset(const LabeledImageSet& set, std::span<const std::size_t> indices) {
  LabeledImageSet out;
  out.classes = set.classes;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(set.records.at(i));
  return out;
}

DatasetSplits stratified_split(const LabeledImageSet& set, const SplitSpec& spec) {
  // Units: whole groups before augmentation, single records after.
  std::vector<std::size_t> unit_of_record(set.size());
  std::vector<std::size_t> unit_classes;
  if (spec.stage == SplitStage::before_augmentation) {
    std::map<std::size_t, std::size_t> group_unit;
    for (std::size_t i = 0; i < set.size(); ++i) {
      auto [it, inserted] = group_unit.try_emplace(set.records[i].group, unit_classes.size());
      if (inserted) unit_classes.push_back(set.class_of(i));
      unit_of_record[i] = it->second;
    }
  } else {
    for (std::size_t i = 0; i < set.size(); ++i) {
      unit_of_record[i] = i;
      unit_classes.push_back(set.class_of(i));
    }
  }
  const SplitIndices units = stratified_split_indices(unit_classes, set.classes, spec);

  std::vector<int> split_of_unit(unit_classes.size(), -1);
  for (std::size_t u : units.train) split_of_unit[u] = 0;
  for (std::size_t u : units.val) split_of_unit[u] = 1;
  for (std::size_t u : units.test) split_of_unit[u] = 2;
  std::array<std::vector<std::size_t>, 3> records;
  for (std::size_t i = 0; i < set.size(); ++i) records[split_of_unit[unit_of_record[i]]].push_back(i);
  return {subset(set, records[0]), subset(set, records[1]), subset(set, records[2])};
}

// ---- augmentation ----

std::string to_string(Transform t) {
  switch (t) {
    case Transform::hflip: return "hflip";
    case Transform::vflip: return "vflip";
    case Transform::rotate_pos15: return "rotate+15";
    case Transform::rotate_neg15: return "rotate-15";
    case Transform::brighten: return "brightness1.2";
    case Transform::darken: return "brightness0.8";
    case Transform::zoom: return "zoom1.1";
  }
  return "?";
}

namespace {

Tensor remap(const Tensor& chw, const auto& source_coord) {
  const std::size_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out(chw.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto [sy, sx] = source_coord(static_cast<double>(y), static_cast<double>(x));
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(ch * h + y) * w + x] = sample_bilinear(chw.raw() + ch * h * w, h, w, sy, sx);
      }
    }
  }
  return out;
}

Tensor rotate(const Tensor& chw, double degrees) {
  const double cy = (static_cast<double>(chw.dim(1)) - 1.0) / 2.0;
  const double cx = (static_cast<double>(chw.dim(2)) - 1.0) / 2.0;
  const double theta = degrees * std::acos(-1.0) / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  return remap(chw, [&](double y, double x) {
    const double dy = y - cy, dx = x - cx;
    return std::pair{-sn * dx + cs * dy + cy, cs * dx + sn * dy + cx};
  });
}

Tensor scale_brightness(const Tensor& chw, float factor) {
  Tensor out = chw;
  for (float& v : out.data()) v = std::clamp(v * factor, 0.0f, 1.0f);
  return out;
}

}  // namespace

Tensor apply_transform(const Tensor& chw, Transform t) {
  if (chw.rank() != 3) throw ShapeError("apply_transform expects C x H x W, got " + shape_str(chw.shape()));
  const std::size_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  switch (t) {
    case Transform::hflip: {
      Tensor out(chw.shape());
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) out[(ch * h + y) * w + x] = chw[(ch * h + y) * w + (w - 1 - x)];
      return out;
    }
    case Transform::vflip: {
      Tensor out(chw.shape());
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) out[(ch * h + y) * w + x] = chw[(ch * h + (h - 1 - y)) * w + x];
      return out;
    }
    case Transform::rotate_pos15: return rotate(chw, 15.0);
    case Transform::rotate_neg15: return rotate(chw, -15.0);
    case Transform::brighten: return scale_brightness(chw, 1.2f);
    case Transform::darken: return scale_brightness(chw, 0.8f);
    case Transform::zoom: {
      const double cy = (static_cast<double>(h) - 1.0) / 2.0;
      const double cx = (static_cast<double>(w) - 1.0) / 2.0;
      return remap(chw, [&](double y, double x) { return std::pair{cy + (y - cy) / 1.1, cx + (x - cx) / 1.1}; });
    }
  }
  return chw;
}

std::vector<ImageRecord> expand_record(const ImageRecord& record, std::size_t record_index, std::size_t factor,
                                       std::uint64_t seed, AugmentMode mode) {
  if (factor < 1) throw ConfigError("augmentation factor must be >= 1");
  if (mode == AugmentMode::deterministic_bank && factor > 1 + kTransformBank.size()) {
    throw ConfigError("augmentation factor " + std::to_string(factor) + " exceeds 1 + transform bank size (" +
                      std::to_string(1 + kTransformBank.size()) + ") in deterministic bank mode");
  }
  std::vector<ImageRecord> out;
  out.reserve(factor);
  out.push_back(record);
  Rng rng(derive_seed(seed, record_index));
  std::uniform_int_distribution<std::size_t> pick(0, kTransformBank.size() - 1);
  for (std::size_t k = 1; k < factor; ++k) {
    const Transform t = mode == AugmentMode::deterministic_bank ? kTransformBank[k - 1] : kTransformBank[pick(rng)];
    ImageRecord copy;
    copy.image = apply_transform(record.image, t);
    copy.label = record.label;
    copy.source_path = record.source_path + "#aug" + std::to_string(k);
    copy.origin = Origin::augmented;
    copy.group = record.group;
    out.push_back(std::move(copy));
  }
  return out;
}

LabeledImageSet augment_expand(const LabeledImageSet& set, std::size_t factor, std::uint64_t seed,
                               AugmentMode mode) {
  LabeledImageSet out;
  out.classes = set.classes;
  out.records.reserve(set.size() * factor);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (auto& r : expand_record(set.records[i], i, factor, seed, mode)) out.records.push_back(std::move(r));
  }
  return out;
}

void stack_batch(const LabeledImageSet& set, std::span<const std::size_t> order, std::size_t first,
                 std::size_t count, Tensor& images, Tensor& labels) {
  if (count == 0 || first + count > order.size()) throw ShapeError("stack_batch: batch range out of bounds");
  const Tensor& proto = set.records.at(order[first]).image;
  const std::size_t c = proto.dim(0), h = proto.dim(1), w = proto.dim(2), chw = c * h * w;
  const std::size_t k = set.num_classes();
  images = Tensor({count, c, h, w});
  labels = Tensor({count, k});
  for (std::size_t i = 0; i < count; ++i) {
    const ImageRecord& r = set.records.at(order[first + i]);
    if (r.image.shape() != proto.shape()) {
      throw DataError("record '" + r.source_path + "' has image shape " + shape_str(r.image.shape()) +
                      ", expected " + shape_str(proto.shape()));
    }
    std::copy(r.image.raw(), r.image.raw() + chw, images.raw() + i * chw);
    std::copy(r.label.begin(), r.label.end(), labels.raw() + i * k);
  }
}

}  // namespace orchard
