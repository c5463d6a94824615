#include "uniseg/errors.hpp"
#include "uniseg/scene.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace uniseg {

using nlohmann::json;

namespace {

json flatten(const Points& m) {
  json out = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < 3; ++c) out.push_back(m(r, c));
  }
  return out;
}

template <typename T>
T field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ParseError(std::string("scene: missing field '") + key + "'", 0);
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("scene: bad field '") + key + "': " + e.what(), 0);
  }
}

Points unflatten(const std::vector<double>& flat, const char* key) {
  if (flat.size() % 3 != 0) {
    throw ParseError(std::string("scene: '") + key + "' length is not a multiple of 3", 0);
  }
  Points m(static_cast<Index>(flat.size() / 3), 3);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < 3; ++c) m(r, c) = flat[static_cast<std::size_t>(3 * r + c)];
  }
  return m;
}

}  // namespace

std::string serialize_scene(const Scene& scene) {
  json doc;
  doc["format"] = "uniseg-scene";
  doc["version"] = kSceneFormatVersion;
  doc["seed"] = scene.seed;
  doc["class_names"] = scene.class_names;
  doc["stuff_flags"] = scene.stuff_flags;
  doc["points"] = flatten(scene.points);
  doc["colors"] = flatten(scene.colors);
  doc["instance_id"] = scene.instance_id;
  doc["semantic_id"] = scene.semantic_id;
  doc["superpoint_id"] = scene.superpoint_id;
  return doc.dump() + "\n";
}

Scene parse_scene(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scene: malformed document: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("scene: top level is not an object", 0);
  if (field<std::string>(doc, "format") != "uniseg-scene") {
    throw ParseError("scene: unexpected format tag", 0);
  }
  const int version = field<int>(doc, "version");
  if (version != kSceneFormatVersion) {
    throw UnsupportedVersionError("scene: unsupported version " + std::to_string(version), 0);
  }

  Scene scene;
  scene.seed = field<std::uint64_t>(doc, "seed");
  scene.class_names = field<std::vector<std::string>>(doc, "class_names");
  scene.stuff_flags = field<std::vector<bool>>(doc, "stuff_flags");
  scene.points = unflatten(field<std::vector<double>>(doc, "points"), "points");
  scene.colors = unflatten(field<std::vector<double>>(doc, "colors"), "colors");
  scene.instance_id = field<std::vector<int>>(doc, "instance_id");
  scene.semantic_id = field<std::vector<int>>(doc, "semantic_id");
  scene.superpoint_id = field<std::vector<int>>(doc, "superpoint_id");

  const auto n = static_cast<std::size_t>(scene.points.rows());
  if (scene.colors.rows() != scene.points.rows() || scene.instance_id.size() != n ||
      scene.semantic_id.size() != n || scene.superpoint_id.size() != n) {
    throw ParseError("scene: per-point arrays disagree in length", 0);
  }
  if (scene.stuff_flags.size() != scene.class_names.size()) {
    throw ParseError("scene: stuff_flags and class_names disagree in length", 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (scene.semantic_id[i] < 0 || scene.semantic_id[i] >= scene.num_classes()) {
      throw ParseError("scene: semantic_id out of range at point " + std::to_string(i), 0);
    }
    if (scene.superpoint_id[i] < 0) {
      throw ParseError("scene: negative superpoint_id at point " + std::to_string(i), 0);
    }
  }
  return scene;
}

void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize_scene(scene);
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scene(buffer.str());
}

}  // namespace uniseg
