#include "uniseg/corpus.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>

namespace uniseg {

namespace fs = std::filesystem;

SceneRecipe corpus_recipe(const TrainConfig& config) {
  SceneRecipe recipe = default_recipe();
  recipe.point_budget = config.point_budget;
  // Instances keep their share of the default budget when it shrinks.
  const int scaled = static_cast<int>(std::int64_t{recipe.points_per_instance} * config.point_budget / 2048);
  recipe.points_per_instance = std::max(1, std::min(recipe.points_per_instance, scaled));
  recipe.superpoint_target = config.superpoint_target;
  return recipe;
}

std::vector<Scene> generate_corpus(const TrainConfig& config, std::uint64_t seed, Split split, int count) {
  constexpr int kAttempts = 16;
  const SceneRecipe recipe = corpus_recipe(config);
  const Rng root = Rng(seed).split(static_cast<std::uint64_t>(split));
  std::vector<Scene> scenes;
  for (int i = 0; i < count; ++i) {
    Rng keys = root.split(static_cast<std::uint64_t>(i));
    for (int attempt = 0;; ++attempt) {
      try {
        scenes.push_back(generate_scene(keys.next_u64(), recipe));
        break;
      } catch (const PlacementError&) {
        if (attempt + 1 == kAttempts) throw;
      }
    }
  }
  return scenes;
}

void save_scene_dir(const std::vector<Scene>& scenes, const std::string& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu.json", i);
    save_scene(scenes[i], (fs::path(dir) / name).string());
  }
}

std::vector<Scene> load_scene_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ContractError("no scene directory at " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Scene> scenes;
  for (const auto& f : files) scenes.push_back(load_scene(f.string()));
  return scenes;
}

}  // namespace uniseg
