#pragma once

#include "uniseg/metrics.hpp"
#include "uniseg/model.hpp"
#include "uniseg/tasks.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uniseg {

// Where evaluation clicks land on each instance.
struct PromptProtocol {
  ClickStrategy strategy = ClickStrategy::kCenter;
  double quantile = 0.0;
  std::uint64_t seed = 0;
};

// Prompts used for one evaluated scene: every base-class thing instance
// gets a click; those with an expression also get a text prompt.
struct EvalPrompts {
  PromptSet prompts;
  std::vector<int> click_instance;
  std::vector<int> expression_instance;
};

EvalPrompts evaluation_prompts(const Model& model, const Scene& scene, const PromptProtocol& protocol);

struct EvaluationResult {
  MetricsReport report;
  // Mean over base-class thing instances of the best IoU reached by any
  // predicted instance.
  double instance_mask_miou = 0.0;
  std::vector<TaskOutputs> outputs;
};

// One forward per scene with m = M. Closed-set metrics ignore novel-class
// points; open-vocabulary AP covers novel classes only (0 when no novel
// instance exists).
EvaluationResult evaluate(const Model& model, const std::vector<Scene>& scenes,
                          const PromptProtocol& protocol = {});

struct AblationRow {
  std::string name;
  double miou = 0.0;
  double ap = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
};

// Interactive metrics for rows {center, r_d for each entry, random}.
std::vector<AblationRow> ablate_prompts(const Model& model, const std::vector<Scene>& scenes,
                                        const std::vector<double>& quantiles,
                                        std::uint64_t seed = 0);

// Header "prompt,miou,ap,ap50,ap25" then one row per entry.
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace uniseg
