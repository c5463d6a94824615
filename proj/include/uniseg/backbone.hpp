#pragma once

#include "uniseg/autodiff.hpp"
#include "uniseg/rng.hpp"
#include "uniseg/scene.hpp"

#include <vector>

namespace uniseg {

// Small trainable point network standing in for a sparse-conv U-Net:
// MLP(6 -> d -> d) on box-normalized (xyz, rgb), then `rounds` passes of
//   h <- LayerNorm(h + relu(Linear(mean of the k nearest neighbors of h)))
struct BackboneConfig {
  int d_in = 32;
  int neighbors = 8;
  int rounds = 2;
};

void init_backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng);

// N x 6: xyz mapped to [-1, 1] over the scene bounding box, rgb to [-1, 1].
Matrix backbone_inputs(const Scene& scene);

// Per-scene tensors reused across training steps.
struct PointGraph {
  Matrix inputs;
  NeighborTable neighbors;
};
PointGraph build_point_graph(const Scene& scene, const BackboneConfig& config);

// N x d_in point features. Throws ContractError when N < neighbors + 1.
Var extract_point_features(ParamBinder& p, const PointGraph& graph, const BackboneConfig& config);

// Row s is the mean of the rows of `features` in superpoint s. Throws
// ContractError on an empty superpoint.
Var pool_superpoints(Var features, const std::vector<int>& partition, int superpoints);

}  // namespace uniseg
