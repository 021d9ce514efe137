#include "orchard/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "orchard/errors.hpp"
#include "orchard/image_io.hpp"
#include "orchard/parallel.hpp"

namespace orchard {

namespace {

constexpr std::array<std::array<float, 3>, 3> kPalette{{
    {0.85f, 0.15f, 0.15f},
    {0.15f, 0.75f, 0.20f},
    {0.15f, 0.25f, 0.85f},
}};

Tensor render_blob(std::size_t size, const std::array<float, 3>& colour, Rng& rng) {
  const double s = static_cast<double>(size);
  std::uniform_real_distribution<double> radius_dist(s / 7.0, s / 4.0);
  const double r = radius_dist(rng);
  std::uniform_real_distribution<double> centre_dist(r, s - r);
  const double cy = centre_dist(rng), cx = centre_dist(rng);
  std::uniform_real_distribution<float> jitter(-0.08f, 0.08f), bg(0.35f, 0.65f);
  std::normal_distribution<float> noise(0.0f, 0.04f);
  const float background = bg(rng);
  std::array<float, 3> c{};
  for (std::size_t k = 0; k < 3; ++k) c[k] = colour[k] + jitter(rng);

  Tensor img({3, size, size});
  const std::size_t hw = size * size;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      const bool inside = dy * dy + dx * dx <= r * r;
      for (std::size_t k = 0; k < 3; ++k) {
        const float base = inside ? c[k] : background;
        img[k * hw + y * size + x] = std::clamp(base + noise(rng), 0.0f, 1.0f);
      }
    }
  }
  return img;
}

}  // namespace

LabeledImageSet make_blob_dataset(const BlobSpec& spec) {
  if (spec.class_names.size() != spec.class_counts.size() || spec.class_names.size() < 2) {
    throw ConfigError("blob spec needs matching class_names/class_counts with at least 2 classes");
  }
  if (spec.image_size < 4) throw ConfigError("blob image_size must be >= 4");
  LabeledImageSet set;
  set.classes = spec.class_names;
  std::vector<std::size_t> cls_of, within;
  for (std::size_t c = 0; c < spec.class_counts.size(); ++c) {
    for (std::size_t k = 0; k < spec.class_counts[c]; ++k) {
      cls_of.push_back(c);
      within.push_back(k);
    }
  }
  set.records.resize(cls_of.size());
  parallel_for(cls_of.size(), [&](std::size_t i) {
    Rng rng(derive_seed(spec.seed, i));
    ImageRecord& r = set.records[i];
    const std::size_t c = cls_of[i];
    r.image = render_blob(spec.image_size, kPalette[c % kPalette.size()], rng);
    r.label = one_hot(c, set.classes.size());
    char name[32];
    std::snprintf(name, sizeof(name), "_%04zu.png", within[i]);
    r.source_path = set.classes[c] + "/" + set.classes[c] + name;
    r.origin = Origin::original;
    r.group = i;
  });
  return set;
}

void write_image_tree(const LabeledImageSet& set, const std::filesystem::path& root) {
  for (const auto& cls : set.classes) std::filesystem::create_directories(root / cls);
  std::vector<std::size_t> counters(set.num_classes(), 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t c = set.class_of(i);
    char name[32];
    std::snprintf(name, sizeof(name), "_%04zu.png", counters[c]++);
    write_png(root / set.classes[c] / (set.classes[c] + name), to_rgb8(set.records[i].image));
  }
}

}  // namespace orchard
