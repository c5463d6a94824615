#pragma once

#include "uniseg/autodiff.hpp"
#include "uniseg/config.hpp"
#include "uniseg/gradcheck.hpp"
#include "uniseg/rng.hpp"
#include "uniseg/scene.hpp"

#include <string>
#include <vector>

namespace uniseg::testing {

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = scale * rng.normal();
  return m;
}

inline Matrix uniform_matrix(Rng& rng, Index rows, Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(lo, hi);
  return m;
}

// Small model: two layers, two heads, d_in 8.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.d_in = 8;
  c.d_out = 16;
  c.layers = 2;
  c.heads = 2;
  c.k_v = c.k_t = 2;
  c.max_pairs = 4;
  c.point_budget = 400;
  c.superpoint_target = 16;
  return c;
}

// Two chairs, a table and a lamp on 400 points.
inline Scene tiny_scene(std::uint64_t seed) {
  SceneRecipe recipe = default_recipe();
  recipe.instances = {{"chair", 2}, {"table", 1}, {"lamp", 1}};
  recipe.point_budget = 400;
  recipe.points_per_instance = 50;
  recipe.superpoint_target = 16;
  return generate_scene(seed, recipe);
}

inline double worst(const std::vector<GradCheckResult>& results) { return max_rel_error(results); }

// Every checked tensor compared at least one entry away from a kink.
inline bool all_compared(const std::vector<GradCheckResult>& results) {
  for (const auto& r : results) {
    if (r.entries > 0 && r.kinked == r.entries) return false;
  }
  return true;
}

}  // namespace uniseg::testing
