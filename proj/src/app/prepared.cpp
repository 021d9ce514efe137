#include "orchard/app/prepared.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "orchard/errors.hpp"

namespace orchard::app {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::size_t PrepareSummary::split_total(std::size_t split) const {
  std::size_t n = 0;
  for (auto c : counts.at(split)) n += c;
  return n;
}

namespace {

void append_f32(std::ofstream& out, const Tensor& t) {
  std::vector<char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, t.raw() + i, 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void read_f32(std::ifstream& in, Tensor& t, const fs::path& path) {
  std::vector<char> bytes(t.size() * 4);
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("image cache '" + path.string() + "' is shorter than the manifest requires");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    std::memcpy(t.raw() + i, &u, 4);
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

ordered_json summary_json(const PrepareSummary& s) {
  ordered_json j;
  j["format_version"] = kPreparedFormatVersion;
  j["classes"] = s.classes;
  j["image_size"] = s.image_size;
  j["originals"] = s.originals;
  j["augment_factor"] = s.augment_factor;
  j["total"] = s.total;
  ordered_json splits;
  for (std::size_t k = 0; k < 3; ++k) {
    ordered_json per_class;
    for (std::size_t c = 0; c < s.classes.size(); ++c) per_class[s.classes[c]] = s.counts[k][c];
    splits[kSplitNames[k]] = {{"total", s.split_total(k)}, {"per_class", per_class}};
  }
  j["splits"] = splits;
  return j;
}

}  // namespace

PrepareSummary prepare_dataset(const RunConfig& config, const fs::path& dir) {
  const LabeledImageSet originals = load_dataset(config.dataset, {config.image_size});
  const std::size_t factor = config.augment_factor;

  // Split units are the originals before augmentation, single records after.
  std::vector<std::size_t> unit_classes;
  const bool by_group = config.split.stage == SplitStage::before_augmentation;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const std::size_t cls = originals.class_of(i);
    if (by_group) {
      unit_classes.push_back(cls);
    } else {
      for (std::size_t k = 0; k < factor; ++k) unit_classes.push_back(cls);
    }
  }
  const SplitIndices units = stratified_split_indices(unit_classes, originals.classes, config.split);
  std::vector<std::uint8_t> split_of_unit(unit_classes.size(), 0);
  for (std::size_t u : units.val) split_of_unit[u] = 1;
  for (std::size_t u : units.test) split_of_unit[u] = 2;

  PrepareSummary summary;
  summary.classes = originals.classes;
  summary.image_size = config.image_size;
  summary.originals = originals.size();
  summary.augment_factor = factor;
  summary.total = originals.size() * factor;
  for (auto& c : summary.counts) c.assign(originals.num_classes(), 0);

  fs::create_directories(dir / "cache");
  std::array<std::ofstream, 3> caches;
  for (std::size_t k = 0; k < 3; ++k) {
    caches[k].open(dir / "cache" / (std::string(kSplitNames[k]) + ".f32"), std::ios::binary);
    if (!caches[k]) throw DataError("cannot write image cache in '" + (dir / "cache").string() + "'");
  }
  std::array<std::ostringstream, 3> rows;
  const fs::path root = config.dataset;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    ImageRecord base = originals.records[i];
    base.source_path = fs::path(base.source_path).lexically_relative(root).generic_string();
    const auto copies = expand_record(base, i, factor, config.seed, config.augment_mode);
    const std::size_t cls = originals.class_of(i);
    for (std::size_t k = 0; k < copies.size(); ++k) {
      const std::size_t split = split_of_unit[by_group ? i : i * factor + k];
      append_f32(caches[split], copies[k].image);
      rows[split] << csv_field(copies[k].source_path) << ',' << csv_field(originals.classes[cls]) << ','
                  << kSplitNames[split] << ',' << to_string(copies[k].origin) << '\n';
      ++summary.counts[split][cls];
    }
  }
  for (auto& c : caches) {
    c.close();
    if (!c) throw DataError("failed writing image cache in '" + (dir / "cache").string() + "'");
  }

  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  manifest << "source_path,class,split,origin\n";
  for (const auto& r : rows) manifest << r.str();
  if (!manifest) throw DataError("cannot write '" + (dir / "manifest.csv").string() + "'");

  std::ofstream s(dir / "summary.json", std::ios::binary);
  s << summary_json(summary).dump(2) << '\n';
  if (!s) throw DataError("cannot write '" + (dir / "summary.json").string() + "'");
  return summary;
}

PrepareSummary read_prepare_summary(const fs::path& dir) {
  const fs::path path = dir / "summary.json";
  std::ifstream in(path);
  if (!in) throw DataError("prepared directory '" + dir.string() + "' has no summary.json (run prepare first)");
  PrepareSummary s;
  try {
    const json j = json::parse(in);
    if (j.at("format_version").get<int>() != kPreparedFormatVersion) {
      throw DataError("unsupported prepared format version in '" + path.string() + "'");
    }
    s.classes = j.at("classes").get<std::vector<std::string>>();
    s.image_size = j.at("image_size").get<std::size_t>();
    s.originals = j.at("originals").get<std::size_t>();
    s.augment_factor = j.at("augment_factor").get<std::size_t>();
    s.total = j.at("total").get<std::size_t>();
    for (std::size_t k = 0; k < 3; ++k) {
      const json& pc = j.at("splits").at(kSplitNames[k]).at("per_class");
      for (const auto& name : s.classes) s.counts[k].push_back(pc.at(name).get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw DataError("corrupt '" + path.string() + "': " + e.what());
  }
  return s;
}

PreparedData load_prepared(const fs::path& dir) {
  PreparedData data;
  data.summary = read_prepare_summary(dir);
  const auto& classes = data.summary.classes;
  const std::size_t s = data.summary.image_size;
  std::array<LabeledImageSet*, 3> sets{&data.splits.train, &data.splits.val, &data.splits.test};
  for (auto* set : sets) set->classes = classes;

  const fs::path manifest_path = dir / "manifest.csv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw DataError("prepared directory '" + dir.string() + "' has no manifest.csv");
  std::array<std::ifstream, 3> caches;
  std::array<fs::path, 3> cache_paths;
  for (std::size_t k = 0; k < 3; ++k) {
    cache_paths[k] = dir / "cache" / (std::string(kSplitNames[k]) + ".f32");
    caches[k].open(cache_paths[k], std::ios::binary);
    if (!caches[k]) throw DataError("missing image cache '" + cache_paths[k].string() + "'");
  }
  std::string line;
  std::getline(manifest, line);
  if (line != "source_path,class,split,origin") throw DataError("unexpected header in '" + manifest_path.string() + "'");
  std::size_t line_no = 1;
  std::map<std::string, std::size_t> groups;
  while (std::getline(manifest, line)) {
    ++line_no;
    const auto f = parse_csv_line(line);
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    if (f.size() != 4) throw DataError(where + ": expected 4 fields");
    auto cls = std::find(classes.begin(), classes.end(), f[1]);
    if (cls == classes.end()) throw DataError(where + ": unknown class '" + f[1] + "'");
    auto split = std::find_if(kSplitNames.begin(), kSplitNames.end(), [&](const char* n) { return f[2] == n; });
    if (split == kSplitNames.end()) throw DataError(where + ": unknown split '" + f[2] + "'");
    const std::size_t k = static_cast<std::size_t>(split - kSplitNames.begin());
    ImageRecord r;
    r.image = Tensor({3, s, s});
    read_f32(caches[k], r.image, cache_paths[k]);
    r.label = one_hot(static_cast<std::size_t>(cls - classes.begin()), classes.size());
    r.source_path = f[0];
    r.origin = f[3] == "augmented" ? Origin::augmented : Origin::original;
    r.group = groups.try_emplace(f[0].substr(0, f[0].rfind("#aug")), groups.size()).first->second;
    sets[k]->records.push_back(std::move(r));
  }
  for (std::size_t k = 0; k < 3; ++k) {
    if (caches[k].peek() != std::char_traits<char>::eof()) {
      throw DataError("image cache '" + cache_paths[k].string() + "' has more images than the manifest lists");
    }
    if (sets[k]->size() != data.summary.split_total(k)) {
      throw DataError("manifest lists " + std::to_string(sets[k]->size()) + " " + kSplitNames[k] +
                      " images, summary says " + std::to_string(data.summary.split_total(k)));
    }
  }
  return data;
}

}  // namespace orchard::app
