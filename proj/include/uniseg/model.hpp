#pragma once

#include "uniseg/backbone.hpp"
#include "uniseg/config.hpp"
#include "uniseg/decoder.hpp"
#include "uniseg/prompts.hpp"
#include "uniseg/scene.hpp"
#include "uniseg/tasks.hpp"

#include <string>
#include <vector>

namespace uniseg {

inline constexpr const char* kLogTauName = "loss.log_tau";

// Trainable parameters plus the frozen closed-vocabulary class embeddings.
// The closed vocabulary is the class table minus the novel classes.
struct Model {
  TrainConfig config;
  std::vector<std::string> vocabulary;
  std::vector<bool> stuff_flags;  // per vocabulary entry
  ParameterSet params;
  Matrix class_embeddings;  // (|vocabulary| + 1) x d_out, no-object last

  int no_object_column() const { return static_cast<int>(vocabulary.size()); }
  // Vocabulary column for `name`, or -1.
  int column_of(const std::string& name) const;
};

// `class_names` / `stuff_flags` describe the scene class table.
Model init_model(const TrainConfig& config, const std::vector<std::string>& class_names,
                 const std::vector<bool>& stuff_flags);
// Rebuilds the frozen parts (vocabulary embeddings) around existing params.
Model assemble_model(const TrainConfig& config, const std::vector<std::string>& vocabulary,
                     const std::vector<bool>& stuff_flags, ParameterSet params);

// Per-scene data that does not change during training.
struct SceneContext {
  const Scene* scene = nullptr;
  PointGraph graph;
  PointLayout layout;
  // Vocabulary column per scene class (-1 for novel classes).
  std::vector<int> column;
  // Instance and semantic class of every superpoint (superpoints never
  // straddle segments).
  std::vector<int> superpoint_instance;
  std::vector<int> superpoint_class;
  std::vector<std::vector<int>> superpoint_points;
  // Pseudo masks as superpoint indicator vectors over all M superpoints
  // (a superpoint belongs when at least half its points do).
  std::vector<std::vector<char>> pseudo_superpoints;
};

SceneContext make_context(const Model& model, const Scene& scene);

struct PromptSet {
  std::vector<VisionPrompt> clicks;
  std::vector<Tokens> expressions;
};

struct ForwardPass {
  Var superpoint_features;
  QueryBundle queries;
  PredictionSet preds;
};

// Backbone, pooling, prompt encoding, decoder and heads for one scene.
ForwardPass forward(ParamBinder& p, const Model& model, const SceneContext& context,
                    std::vector<int> sampled, const PromptSet& prompts);

// Indicator over `sampled` of the superpoints in `instance`.
Vector instance_target(const SceneContext& context, int instance, const std::vector<int>& sampled);
// Indicator over `sampled` of the stuff superpoints of scene class `cls`.
Vector stuff_target(const SceneContext& context, int cls, const std::vector<int>& sampled);

std::vector<int> all_superpoints(const SceneContext& context);

}  // namespace uniseg
