#pragma once

#include "uniseg/config.hpp"
#include "uniseg/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uniseg {

// Default recipe with the config's point budget and superpoint target.
SceneRecipe corpus_recipe(const TrainConfig& config);

enum class Split : std::uint64_t { kTrain = 1, kVal = 2 };

// `count` scenes keyed by (seed, split, index). A layout that cannot be
// placed is redrawn with the next attempt key.
std::vector<Scene> generate_corpus(const TrainConfig& config, std::uint64_t seed, Split split, int count);

// Writes scene_0000.json, scene_0001.json, ... into `dir`.
void save_scene_dir(const std::vector<Scene>& scenes, const std::string& dir);
// Every *.json in `dir`, in file-name order. Throws ContractError when the
// directory is missing.
std::vector<Scene> load_scene_dir(const std::string& dir);

}  // namespace uniseg
