#include "uniseg/scene.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace uniseg {

int Scene::num_superpoints() const {
  if (superpoint_id.empty()) return 0;
  return *std::max_element(superpoint_id.begin(), superpoint_id.end()) + 1;
}

std::vector<int> Scene::instances() const {
  std::set<int> ids;
  for (int id : instance_id) {
    if (id >= 0) ids.insert(id);
  }
  return {ids.begin(), ids.end()};
}

std::vector<int> Scene::instance_points(int instance) const {
  std::vector<int> out;
  for (int i = 0; i < num_points(); ++i) {
    if (instance_id[static_cast<std::size_t>(i)] == instance) out.push_back(i);
  }
  if (instance < 0 || out.empty()) {
    throw LookupError("instance " + std::to_string(instance) + " not in scene");
  }
  return out;
}

int Scene::instance_class(int instance) const {
  for (int i = 0; i < num_points(); ++i) {
    if (instance_id[static_cast<std::size_t>(i)] == instance) {
      return semantic_id[static_cast<std::size_t>(i)];
    }
  }
  throw LookupError("instance " + std::to_string(instance) + " not in scene");
}

int Scene::class_index(const std::string& name) const {
  const auto it = std::find(class_names.begin(), class_names.end(), name);
  if (it == class_names.end()) throw LookupError("unknown class: " + name);
  return static_cast<int>(it - class_names.begin());
}

std::vector<ClassSpec> default_class_table() {
  using V = Eigen::Vector3d;
  return {
      {"floor", true, Shape::kFloor, V(1, 1, 0), V(0.55, 0.45, 0.35)},
      {"wall", true, Shape::kWall, V(1, 1, 1), V(0.85, 0.85, 0.80)},
      {"chair", false, Shape::kBox, V(0.5, 0.5, 0.85), V(0.80, 0.20, 0.20)},
      {"table", false, Shape::kBox, V(1.2, 0.8, 0.75), V(0.20, 0.40, 0.85)},
      {"cabinet", false, Shape::kBox, V(0.6, 0.5, 1.4), V(0.20, 0.70, 0.30)},
      {"sofa", false, Shape::kBox, V(1.8, 0.8, 0.8), V(0.60, 0.30, 0.75)},
      {"bookshelf", false, Shape::kBox, V(1.0, 0.35, 1.8), V(0.90, 0.60, 0.10)},
      {"lamp", false, Shape::kCylinder, V(0.2, 0.2, 1.5), V(0.95, 0.90, 0.30)},
      {"bin", false, Shape::kCylinder, V(0.18, 0.18, 0.5), V(0.10, 0.55, 0.60)},
  };
}

SceneRecipe default_recipe() {
  SceneRecipe recipe;
  recipe.classes = default_class_table();
  recipe.instances = {{"chair", 2}, {"table", 1}, {"cabinet", 1}, {"sofa", 1}, {"lamp", 1}};
  return recipe;
}

namespace {

struct Placed {
  int class_index;
  Eigen::Vector3d center;  // footprint center, z = 0
  Eigen::Vector3d size;
};

Eigen::Vector3d noisy_color(const Eigen::Vector3d& base, double sigma, Rng& rng) {
  Eigen::Vector3d c;
  for (int k = 0; k < 3; ++k) c(k) = std::clamp(base(k) + sigma * rng.normal(), 0.0, 1.0);
  return c;
}

Eigen::Vector3d sample_box_surface(const Placed& obj, Rng& rng) {
  const double sx = obj.size(0), sy = obj.size(1), sz = obj.size(2);
  // top, -x, +x, -y, +y; the bottom face rests on the floor.
  const double areas[5] = {sx * sy, sy * sz, sy * sz, sx * sz, sx * sz};
  const double total = areas[0] + areas[1] + areas[2] + areas[3] + areas[4];
  double pick = rng.uniform() * total;
  int face = 0;
  while (face < 4 && pick >= areas[face]) pick -= areas[face++];
  const double u = rng.uniform() - 0.5, v = rng.uniform() - 0.5;
  Eigen::Vector3d local;
  switch (face) {
    case 0: local = {u * sx, v * sy, sz}; break;
    case 1: local = {-0.5 * sx, u * sy, (v + 0.5) * sz}; break;
    case 2: local = {0.5 * sx, u * sy, (v + 0.5) * sz}; break;
    case 3: local = {u * sx, -0.5 * sy, (v + 0.5) * sz}; break;
    default: local = {u * sx, 0.5 * sy, (v + 0.5) * sz}; break;
  }
  return obj.center + local;
}

Eigen::Vector3d sample_cylinder_surface(const Placed& obj, Rng& rng) {
  const double r = obj.size(0), h = obj.size(2);
  const double side = 2.0 * std::numbers::pi * r * h;
  const double top = std::numbers::pi * r * r;
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  if (rng.uniform() * (side + top) < side) {
    return obj.center + Eigen::Vector3d(r * std::cos(theta), r * std::sin(theta), h * rng.uniform());
  }
  const double rho = r * std::sqrt(rng.uniform());
  return obj.center + Eigen::Vector3d(rho * std::cos(theta), rho * std::sin(theta), h);
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneRecipe& recipe) {
  const auto& classes = recipe.classes;
  auto find_class = [&](const std::string& name) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (classes[c].name == name) return static_cast<int>(c);
    }
    throw LookupError("recipe names unknown class: " + name);
  };
  int floor_class = -1, wall_class = -1;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].shape == Shape::kFloor) floor_class = static_cast<int>(c);
    if (classes[c].shape == Shape::kWall) wall_class = static_cast<int>(c);
  }
  if (floor_class < 0) throw ContractError("recipe needs a floor stuff class");
  if (recipe.walls && wall_class < 0) throw ContractError("recipe enables walls without a wall class");

  Rng root(seed);
  Rng place_rng = root.split(1);
  Rng sample_rng = root.split(2);

  // Place instances on the floor without footprint overlap.
  std::vector<Placed> placed;
  constexpr double kMargin = 0.1, kClearance = 0.15;
  for (const InstanceCount& entry : recipe.instances) {
    const int c = find_class(entry.class_name);
    if (classes[static_cast<std::size_t>(c)].stuff) {
      throw ContractError("stuff class cannot have instances: " + entry.class_name);
    }
    for (int n = 0; n < entry.count; ++n) {
      const ClassSpec& spec = classes[static_cast<std::size_t>(c)];
      Eigen::Vector3d size = spec.size;
      const double jitter = 1.0 + recipe.size_jitter * (2.0 * place_rng.uniform() - 1.0);
      size *= jitter;
      // Footprint half extents.
      const bool round = spec.shape == Shape::kCylinder;
      const double hx = round ? size(0) : 0.5 * size(0);
      const double hy = round ? size(1) : 0.5 * size(1);
      bool ok = false;
      for (int attempt = 0; attempt < recipe.placement_retries && !ok; ++attempt) {
        const double lo_x = kMargin + hx, hi_x = recipe.room_x - kMargin - hx;
        const double lo_y = kMargin + hy, hi_y = recipe.room_y - kMargin - hy;
        if (lo_x > hi_x || lo_y > hi_y) break;
        const Eigen::Vector3d center(place_rng.uniform(lo_x, hi_x), place_rng.uniform(lo_y, hi_y), 0);
        ok = std::all_of(placed.begin(), placed.end(), [&](const Placed& other) {
          const bool other_round = classes[static_cast<std::size_t>(other.class_index)].shape ==
                                   Shape::kCylinder;
          const double ox = other_round ? other.size(0) : 0.5 * other.size(0);
          const double oy = other_round ? other.size(1) : 0.5 * other.size(1);
          return std::abs(center(0) - other.center(0)) >= hx + ox + kClearance ||
                 std::abs(center(1) - other.center(1)) >= hy + oy + kClearance;
        });
        if (ok) placed.push_back({c, center, size});
      }
      if (!ok) {
        throw PlacementError("could not place " + entry.class_name + " #" + std::to_string(n) +
                             " after " + std::to_string(recipe.placement_retries) + " attempts");
      }
    }
  }

  const int thing_points = static_cast<int>(placed.size()) * recipe.points_per_instance;
  const int stuff_points = recipe.point_budget - thing_points;
  if (stuff_points < 16) {
    throw ContractError("point budget " + std::to_string(recipe.point_budget) +
                        " too small for " + std::to_string(placed.size()) + " instances");
  }
  const double floor_area = recipe.room_x * recipe.room_y;
  const double wall_area =
      recipe.walls ? 2.0 * (recipe.room_x + recipe.room_y) * recipe.wall_height : 0.0;
  const int floor_points = static_cast<int>(
      std::lround(stuff_points * floor_area / (floor_area + wall_area)));
  const int wall_points = stuff_points - floor_points;

  Scene scene;
  scene.seed = seed;
  const int n = recipe.point_budget;
  scene.points.resize(n, 3);
  scene.colors.resize(n, 3);
  scene.instance_id.assign(static_cast<std::size_t>(n), -1);
  scene.semantic_id.assign(static_cast<std::size_t>(n), 0);
  for (const ClassSpec& spec : classes) {
    scene.class_names.push_back(spec.name);
    scene.stuff_flags.push_back(spec.stuff);
  }

  int row = 0;
  auto emit = [&](const Eigen::Vector3d& p, int cls, int inst) {
    scene.points.row(row) = p.transpose();
    scene.colors.row(row) =
        noisy_color(classes[static_cast<std::size_t>(cls)].color, recipe.color_noise, sample_rng)
            .transpose();
    scene.semantic_id[static_cast<std::size_t>(row)] = cls;
    scene.instance_id[static_cast<std::size_t>(row)] = inst;
    ++row;
  };

  for (int i = 0; i < floor_points; ++i) {
    emit({sample_rng.uniform() * recipe.room_x, sample_rng.uniform() * recipe.room_y, 0.0},
         floor_class, -1);
  }
  for (int i = 0; i < wall_points; ++i) {
    const double perimeter = 2.0 * (recipe.room_x + recipe.room_y);
    double s = sample_rng.uniform() * perimeter;
    const double z = sample_rng.uniform() * recipe.wall_height;
    Eigen::Vector3d p;
    if (s < recipe.room_x) {
      p = {s, 0.0, z};
    } else if ((s -= recipe.room_x) < recipe.room_y) {
      p = {recipe.room_x, s, z};
    } else if ((s -= recipe.room_y) < recipe.room_x) {
      p = {recipe.room_x - s, recipe.room_y, z};
    } else {
      s -= recipe.room_x;
      p = {0.0, recipe.room_y - s, z};
    }
    emit(p, wall_class, -1);
  }
  for (std::size_t k = 0; k < placed.size(); ++k) {
    const Placed& obj = placed[k];
    const bool round = classes[static_cast<std::size_t>(obj.class_index)].shape == Shape::kCylinder;
    for (int i = 0; i < recipe.points_per_instance; ++i) {
      emit(round ? sample_cylinder_surface(obj, sample_rng) : sample_box_surface(obj, sample_rng),
           obj.class_index, static_cast<int>(k));
    }
  }

  scene.superpoint_id = compute_superpoints(scene, recipe.superpoint_target, seed);
  return scene;
}

int sample_vision_prompt(const Scene& scene, int instance, ClickStrategy strategy, double quantile,
                         std::uint64_t seed) {
  const std::vector<int> members = scene.instance_points(instance);
  const auto n = static_cast<int>(members.size());
  if (strategy == ClickStrategy::kRandom) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(instance));
    return members[rng.index(members.size())];
  }
  Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
  for (int p : members) centroid += scene.points.row(p);
  centroid /= static_cast<double>(n);
  std::vector<std::pair<double, int>> order;
  order.reserve(members.size());
  for (int p : members) order.emplace_back((scene.points.row(p) - centroid).squaredNorm(), p);
  std::sort(order.begin(), order.end());
  int rank = 1;
  if (strategy == ClickStrategy::kQuantile) {
    rank = std::clamp(static_cast<int>(std::floor(quantile * n)), 1, n);
  }
  return order[static_cast<std::size_t>(rank - 1)].second;
}

VocabularySplit split_vocabulary(const std::vector<std::string>& class_names,
                                 const std::vector<std::string>& novel_names) {
  for (const auto& name : novel_names) {
    if (std::find(class_names.begin(), class_names.end(), name) == class_names.end()) {
      throw LookupError("novel class not in class table: " + name);
    }
  }
  VocabularySplit split;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const bool novel =
        std::find(novel_names.begin(), novel_names.end(), class_names[c]) != novel_names.end();
    (novel ? split.novel : split.base).push_back(static_cast<int>(c));
  }
  return split;
}

}  // namespace uniseg
