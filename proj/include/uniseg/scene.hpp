#pragma once

#include "uniseg/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uniseg {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Synthetic labeled point cloud. instance_id is -1 for stuff points;
// superpoint_id partitions the points into num_superpoints() non-empty sets.
struct Scene {
  std::uint64_t seed = 0;
  Points points;
  Points colors;
  std::vector<int> instance_id;
  std::vector<int> semantic_id;
  std::vector<int> superpoint_id;
  std::vector<std::string> class_names;
  std::vector<bool> stuff_flags;

  int num_points() const { return static_cast<int>(points.rows()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  int num_superpoints() const;
  // Sorted distinct instance ids >= 0.
  std::vector<int> instances() const;
  // Point indices of `instance`, ascending. Throws LookupError if absent.
  std::vector<int> instance_points(int instance) const;
  int instance_class(int instance) const;
  int class_index(const std::string& name) const;

  bool operator==(const Scene&) const = default;
};

enum class Shape { kFloor, kWall, kBox, kCylinder };

struct ClassSpec {
  std::string name;
  bool stuff = false;
  Shape shape = Shape::kBox;
  // Box: extent x, y, z. Cylinder: radius, radius, height.
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
};

struct InstanceCount {
  std::string class_name;
  int count = 0;
};

struct SceneRecipe {
  std::vector<ClassSpec> classes;
  std::vector<InstanceCount> instances;
  double room_x = 5.0;
  double room_y = 5.0;
  double wall_height = 1.0;
  bool walls = true;
  int point_budget = 2048;
  int points_per_instance = 150;
  double color_noise = 0.03;
  double size_jitter = 0.1;
  int superpoint_target = 64;
  int placement_retries = 200;
};

// floor, wall (stuff) followed by furniture classes.
std::vector<ClassSpec> default_class_table();
// Furniture mix used by the desk-scale corpus.
SceneRecipe default_recipe();

// Deterministic in (seed, recipe). Throws PlacementError when an instance
// cannot be placed without overlap, ContractError on an unusable recipe.
Scene generate_scene(std::uint64_t seed, const SceneRecipe& recipe);

// ---- neighborhoods and superpoints -------------------------------------

// k nearest neighbors of every point, self excluded, ordered by
// (distance, index). Rows are points.
using NeighborTable = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
NeighborTable knn(const Points& points, int k);

// Seeded region growing on the 8-NN graph with a spatial+color edge
// weight, run separately inside every (instance, semantic) segment so no
// superpoint straddles an instance boundary. Returns ids in [0, M).
// Throws ContractError if target < 1 or target > N.
std::vector<int> compute_superpoints(const Scene& scene, int target, std::uint64_t seed = 0);

// ---- open-set pseudo masks ----------------------------------------------

struct PseudoMaskSet {
  // Each mask is a sorted list of point indices.
  std::vector<std::vector<int>> masks;
};

struct PseudoMaskOptions {
  double color_threshold = 0.15;
  // Spatial edge limit as a multiple of the median 8-NN radius.
  double spatial_factor = 1.5;
  int min_points = 12;
};

// Region growing on coordinates and colors only; labels are never read.
PseudoMaskSet generate_pseudo_masks(const Scene& scene, std::uint64_t seed,
                                    const PseudoMaskOptions& options = {});

// ---- prompts --------------------------------------------------------------

enum class ClickStrategy { kCenter, kQuantile, kRandom };

// center: point nearest the instance centroid (ties to lower index);
// quantile: the floor(r_d * n)-th nearest (rank clamped to [1, n]);
// random: uniform over instance points.
int sample_vision_prompt(const Scene& scene, int instance, ClickStrategy strategy,
                         double quantile, std::uint64_t seed);

using Tokens = std::vector<std::string>;

// "the <class>" when the class is unique in the scene, otherwise
// "the <class> <relation> the <anchor>" for the first (seeded) relation and
// anchor that single out `instance`. Throws AmbiguityError when none does.
Tokens make_text_expression(const Scene& scene, int instance, std::uint64_t seed);

// Inverse of make_text_expression's grammar; nullopt when the expression
// does not pick exactly one instance.
std::optional<int> resolve_expression(const Scene& scene, const Tokens& tokens);

std::string join_tokens(const Tokens& tokens);

struct VocabularySplit {
  std::vector<int> base;
  std::vector<int> novel;
};

// Classes named in `novel_names` become novel; the rest are base. Throws
// LookupError for names missing from the class table.
VocabularySplit split_vocabulary(const std::vector<std::string>& class_names,
                                 const std::vector<std::string>& novel_names);

// ---- scene files -------------------------------------------------------------

inline constexpr int kSceneFormatVersion = 1;

std::string serialize_scene(const Scene& scene);
// Throws ParseError (with byte offset) or UnsupportedVersionError.
Scene parse_scene(const std::string& text);
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

}  // namespace uniseg
