#include "orchard/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "orchard/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace orchard {

namespace {

json config_to_json(const ModelConfig& cfg) {
  return json{{"variant", to_string(cfg.variant)},     {"input_height", cfg.input_height},
              {"input_width", cfg.input_width},        {"input_channels", cfg.input_channels},
              {"channels", cfg.channels},              {"num_blocks", cfg.num_blocks},
              {"num_classes", cfg.num_classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.variant = parse_model_variant(j.at("variant").get<std::string>());
  cfg.input_height = j.at("input_height").get<std::size_t>();
  cfg.input_width = j.at("input_width").get<std::size_t>();
  cfg.input_channels = j.at("input_channels").get<std::size_t>();
  cfg.channels = j.at("channels").get<std::vector<std::size_t>>();
  cfg.num_blocks = j.at("num_blocks").get<std::size_t>();
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  return cfg;
}

void write_f32(const fs::path& path, const Tensor& t) {
  std::vector<char> bytes(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, t.raw() + i, 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("cannot write tensor file '" + path.string() + "'");
  }
}

void read_f32(const fs::path& path, const std::string& name, std::size_t byte_length, Tensor& t) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint tensor '" + name + "': missing file '" + path.filename().string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != byte_length || byte_length != t.size() * 4) {
    throw DataError("checkpoint tensor '" + name + "': file has " + std::to_string(bytes.size()) +
                    " bytes, manifest says " + std::to_string(byte_length) + ", shape needs " +
                    std::to_string(t.size() * 4));
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    std::memcpy(t.raw() + i, &u, 4);
  }
}

struct NamedTensor {
  std::string name;
  const Tensor* tensor;
};

}  // namespace

void save_checkpoint(const ModelGraph& model, const AdamState* adam, const fs::path& dir) {
  if (model.config().variant == ModelVariant::custom) {
    throw ConfigError("custom models cannot be checkpointed (no builder to restore them)");
  }
  fs::create_directories(dir);
  ModelGraph copy = model;
  std::vector<NamedTensor> tensors;
  const auto params = copy.params();
  for (const auto& p : params) tensors.push_back({p.name, p.value});
  if (adam) {
    if (adam->names.size() != params.size()) throw ShapeError("adam state does not match the model parameters");
    for (std::size_t i = 0; i < adam->names.size(); ++i) tensors.push_back({"adam.m." + adam->names[i], &adam->m[i]});
    for (std::size_t i = 0; i < adam->names.size(); ++i) tensors.push_back({"adam.v." + adam->names[i], &adam->v[i]});
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["variant"] = to_string(model.config().variant);
  manifest["config"] = config_to_json(model.config());
  manifest["class_names"] = model.class_names();
  json records = json::array();
  for (const auto& t : tensors) {
    const std::string file = t.name + ".f32";
    write_f32(dir / file, *t.tensor);
    records.push_back(json{{"name", t.name},
                           {"shape", t.tensor->shape()},
                           {"dtype", "f32"},
                           {"file", file},
                           {"byte_length", t.tensor->size() * 4}});
  }
  manifest["tensors"] = records;
  if (adam) {
    manifest["adam"] = json{{"step", adam->step}, {"beta1", adam->beta1}, {"beta2", adam->beta2},
                            {"epsilon", adam->epsilon}};
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("cannot write '" + (dir / "manifest.json").string() + "'");
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("checkpoint manifest '" + manifest_path.string() + "' not found");
  json manifest;
  std::map<std::string, json> records;
  ModelConfig cfg;
  std::vector<std::string> class_names;
  try {
    manifest = json::parse(in);
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw DataError("unsupported checkpoint format_version " + manifest.at("format_version").dump());
    }
    cfg = config_from_json(manifest.at("config"));
    class_names = manifest.at("class_names").get<std::vector<std::string>>();
    for (const auto& r : manifest.at("tensors")) {
      const std::string name = r.at("name").get<std::string>();
      if (r.at("dtype").get<std::string>() != "f32") throw DataError("tensor '" + name + "' has unsupported dtype");
      if (!records.emplace(name, r).second) throw DataError("tensor '" + name + "' listed twice");
    }
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest '" + manifest_path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("corrupt checkpoint manifest '" + manifest_path.string() + "': " + e.what());
  }

  LoadedCheckpoint out{build_model(cfg), std::nullopt};
  out.model.set_class_names(class_names);
  auto load_into = [&](const std::string& name, Tensor& t) {
    auto it = records.find(name);
    if (it == records.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
    const json& r = it->second;
    Shape shape;
    std::size_t byte_length = 0;
    fs::path file;
    try {
      shape = r.at("shape").get<Shape>();
      byte_length = r.at("byte_length").get<std::size_t>();
      file = r.at("file").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError("checkpoint tensor '" + name + "': malformed record: " + e.what());
    }
    if (shape != t.shape()) {
      throw DataError("checkpoint tensor '" + name + "': shape " + shape_str(shape) + " != model shape " +
                      shape_str(t.shape()));
    }
    if (file.is_absolute() || file.filename() != file) {
      throw DataError("checkpoint tensor '" + name + "': file must be a plain name inside the checkpoint");
    }
    read_f32(dir / file, name, byte_length, t);
    records.erase(it);
  };

  auto params = out.model.params();
  for (auto& p : params) load_into(p.name, *p.value);
  if (manifest.contains("adam")) {
    AdamState adam;
    adam.reset(params);
    try {
      const json& a = manifest.at("adam");
      adam.step = a.at("step").get<std::uint64_t>();
      adam.beta1 = a.at("beta1").get<double>();
      adam.beta2 = a.at("beta2").get<double>();
      adam.epsilon = a.at("epsilon").get<double>();
    } catch (const json::exception& e) {
      throw DataError("corrupt checkpoint manifest: adam section: " + std::string(e.what()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) load_into("adam.m." + params[i].name, adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) load_into("adam.v." + params[i].name, adam.v[i]);
    out.adam = std::move(adam);
  }
  if (!records.empty()) {
    throw DataError("checkpoint tensor '" + records.begin()->first + "' does not belong to a " +
                    to_string(cfg.variant) + " model");
  }
  return out;
}

}  // namespace orchard
