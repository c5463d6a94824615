#pragma once

#include "uniseg/autodiff.hpp"
#include "uniseg/rng.hpp"
#include "uniseg/scene.hpp"

#include <string>
#include <vector>

namespace uniseg {

inline constexpr int kTextFeatureDim = 64;
inline constexpr const char* kNoObjectName = "<no-object>";

// Frozen text embedder: sum over positions of a unit Gaussian direction
// keyed by hash(token, position), L2-normalized. Order-sensitive and open
// vocabulary. Throws ContractError on an empty sequence.
Vector embed_text(const Tokens& tokens, int dim = kTextFeatureDim);

// Two trainable linear layers C -> d_in -> d_in with a relu between.
void init_text_projection(ParameterSet& params, int text_dim, int d_in, Rng& rng);
// Rows of `text` (K x C) projected to K x d_in.
Var project_text(ParamBinder& p, Var text);

// A click resolved to its nearest point and that point's superpoint.
struct VisionPrompt {
  int point = -1;
  int superpoint = -1;
};

// Nearest point by Euclidean distance, ties to the lowest index. Throws
// ContractError on an empty scene.
VisionPrompt locate_click(const Scene& scene, const Eigen::Vector3d& click);
VisionPrompt locate_click(const Scene& scene, int point_index);

// Row gather from F_s: prompt k's feature is exactly row superpoint_k.
Var encode_vision_prompts(Var superpoint_features, const std::vector<VisionPrompt>& prompts);

enum class VocabularyMode { kClosed, kOpen };

// Frozen class-name embeddings: embed_text per name, a fixed seeded lift
// C -> d_out with orthonormal columns (rows when d_out < C), row-normalized.
// Closed mode rejects names outside `training_names`; duplicates are a
// ContractError either way.
Matrix embed_class_names(const std::vector<std::string>& names, int d_out, VocabularyMode mode,
                         const std::vector<std::string>& training_names = {});

// `names` embeddings with the no-object row appended last.
Matrix class_embeddings_with_no_object(const std::vector<std::string>& names, int d_out);

// Fixed lift used by embed_class_names (d_out x C).
Matrix class_lift(int d_out, int text_dim = kTextFeatureDim);

}  // namespace uniseg
