#pragma once

#include "uniseg/checkpoint.hpp"
#include "uniseg/losses.hpp"
#include "uniseg/metrics.hpp"
#include "uniseg/model.hpp"
#include "uniseg/optim.hpp"

#include <functional>
#include <string>
#include <vector>

namespace uniseg {

// Everything random about one scene in a training step.
struct ScenePlan {
  std::size_t context = 0;  // index into the batch's contexts
  std::vector<int> sampled;
  std::vector<MaskTarget> targets;
  std::vector<int> target_instance;  // instance id per target, -1 for stuff
  std::vector<int> prompted;         // instance ids; one click and one expression each
  PromptSet prompts;
};

struct BatchPlan {
  std::vector<ScenePlan> scenes;
  int pairs() const;
};

// Samples m, the unified queries, targets and prompts for each scene.
// Novel-class instances are never targets or prompts; instances whose
// sampled mask is empty are skipped; at most config.max_pairs pairs.
BatchPlan plan_batch(const Model& model, const std::vector<const SceneContext*>& contexts, Rng& rng);

struct BatchLoss {
  LossParts parts;
  Var total;
};

// Loss of one planned batch under the config toggles and lambda.
BatchLoss batch_loss(ParamBinder& p, const Model& model,
                     const std::vector<const SceneContext*>& contexts, const BatchPlan& plan,
                     const TrainConfig& config);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
  double base = 0.0;
  double inter = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  // When set, a failing step writes a dump here before rethrowing.
  std::string dump_dir;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(int epoch, const MetricsReport&)> on_eval;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<StepRecord> steps;
};

// AdamW + poly schedule over `epochs`, batches of `batch_size` scenes in a
// seeded order. Every eval_period epochs (and after the last one) the
// model is evaluated on `val` and the best Overall is kept; without val
// scenes the last state is also the best. Non-finite values abort the run
// with a NumericError naming the step.
TrainResult train(const TrainConfig& config, const std::vector<Scene>& train_scenes,
                  const std::vector<Scene>& val_scenes, const TrainOptions& options = {});

// Continues from `start` for `epochs` more epochs with a constant learning
// rate lr0 * factor and weight decay * factor. Zero epochs returns `start`.
Checkpoint finetune_trick(const Checkpoint& start, const std::vector<Scene>& train_scenes,
                          int epochs, double factor, const TrainOptions& options = {});

// Optimizer hyper-parameters used for the fine-tuning stage.
AdamWOptions finetune_options(const TrainConfig& config, double factor);

}  // namespace uniseg
