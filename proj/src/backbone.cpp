#include "uniseg/backbone.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/layers.hpp"
#include "uniseg/ops.hpp"

namespace uniseg {

void init_backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng) {
  init_mlp(params, "backbone.stem", 6, config.d_in, config.d_in, rng);
  for (int r = 0; r < config.rounds; ++r) {
    const std::string prefix = "backbone.round" + std::to_string(r);
    init_linear(params, prefix + ".aggregate", config.d_in, config.d_in, rng);
    init_layer_norm(params, prefix + ".norm", config.d_in);
  }
}

Matrix backbone_inputs(const Scene& scene) {
  const Index n = scene.points.rows();
  Matrix x(n, 6);
  if (n == 0) return x;
  const Eigen::RowVector3d lo = scene.points.colwise().minCoeff();
  const Eigen::RowVector3d hi = scene.points.colwise().maxCoeff();
  for (Index c = 0; c < 3; ++c) {
    const double extent = hi(c) - lo(c);
    for (Index r = 0; r < n; ++r) {
      x(r, c) = extent > 0.0 ? 2.0 * (scene.points(r, c) - lo(c)) / extent - 1.0 : 0.0;
      x(r, 3 + c) = 2.0 * scene.colors(r, c) - 1.0;
    }
  }
  return x;
}

PointGraph build_point_graph(const Scene& scene, const BackboneConfig& config) {
  if (scene.num_points() < config.neighbors + 1) {
    throw ContractError("backbone: " + std::to_string(scene.num_points()) +
                        " points, need at least " + std::to_string(config.neighbors + 1));
  }
  return {backbone_inputs(scene), knn(scene.points, config.neighbors)};
}

Var extract_point_features(ParamBinder& p, const PointGraph& graph, const BackboneConfig& config) {
  const Index n = graph.inputs.rows();
  const Index k = graph.neighbors.cols();
  if (n < config.neighbors + 1 || k != config.neighbors || graph.neighbors.rows() != n) {
    throw ContractError("backbone: point graph does not match " + std::to_string(n) + " points");
  }
  std::vector<int> gather(static_cast<std::size_t>(n * k));
  std::vector<int> owner(static_cast<std::size_t>(n * k));
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < k; ++c) {
      gather[static_cast<std::size_t>(i * k + c)] = graph.neighbors(i, c);
      owner[static_cast<std::size_t>(i * k + c)] = static_cast<int>(i);
    }
  }

  Var h = mlp(p, p.tape().constant(graph.inputs), "backbone.stem");
  for (int r = 0; r < config.rounds; ++r) {
    const std::string prefix = "backbone.round" + std::to_string(r);
    const Var neighborhood = segment_mean(gather_rows(h, gather), owner, static_cast<int>(n));
    h = layer_norm(p, add(h, relu(linear(p, neighborhood, prefix + ".aggregate"))), prefix + ".norm");
  }
  return h;
}

Var pool_superpoints(Var features, const std::vector<int>& partition, int superpoints) {
  if (static_cast<Index>(partition.size()) != features.rows()) {
    throw ContractError("pool_superpoints: partition covers " + std::to_string(partition.size()) +
                        " of " + std::to_string(features.rows()) + " rows");
  }
  return segment_mean(features, partition, superpoints);
}

}  // namespace uniseg
