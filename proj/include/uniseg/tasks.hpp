#pragma once

#include "uniseg/decoder.hpp"
#include "uniseg/metrics.hpp"

#include <string>
#include <vector>

namespace uniseg {

struct InferenceThresholds {
  double binarize = 0.5;
  double score_floor = 0.1;
  int min_segment_points = 25;
};

// How prediction rows map back to points.
struct PointLayout {
  std::vector<int> partition;  // superpoint id per point
  int superpoints = 0;
};

struct InstancePrediction {
  PointMask points;
  int cls = -1;  // column of the class embedding matrix
  double score = 0.0;
  int query = -1;
};

// Per point: segment id and class, both -1 for void.
struct PanopticMap {
  std::vector<int> segment;
  std::vector<int> cls;
};

struct TaskOutputs {
  PanopticMap panoptic;
  std::vector<int> semantic;
  std::vector<InstancePrediction> instances;
  std::vector<PointMask> interactive;
  std::vector<double> interactive_scores;
  std::vector<PointMask> referring;
  std::vector<InstancePrediction> openvocab;
};

// Row `row` of mask_logits mapped to points and thresholded.
PointMask row_to_points(const PredictionSet& preds, int row, const PointLayout& layout,
                        double binarize);
// Mean sigmoid over the predicted positives of `row` (0 for an empty mask).
double mask_confidence(const PredictionSet& preds, int row, const PointLayout& layout,
                       double binarize);

// Unified rows whose argmax is not the no-object column (the last one).
// Score = class prob * mask confidence; rows below the score floor or with
// empty masks are dropped.
std::vector<InstancePrediction> infer_instances(const PredictionSet& preds,
                                                const PointLayout& layout,
                                                const InferenceThresholds& thresholds = {});
// Same, classifying with an explicit probability matrix (unified rows x
// classes + 1, no-object last).
std::vector<InstancePrediction> instances_from_probs(const PredictionSet& preds,
                                                     const Matrix& class_prob,
                                                     const PointLayout& layout,
                                                     const InferenceThresholds& thresholds);

// Per point argmax_c sum_i sigmoid(mask_i(p)) * cls_i(c) over unified rows,
// excluding no-object.
std::vector<int> infer_semantic(const PredictionSet& preds, const PointLayout& layout);

// Thing instances claim unclaimed points in descending score (ties to
// lower query); instances left with fewer than min_segment_points points
// are dropped. Remaining points take their semantic label when it is a
// stuff class, else void. Stuff segment id = class, thing ids follow
// `stuff_flags.size()`.
PanopticMap infer_panoptic(const std::vector<InstancePrediction>& instances,
                           const std::vector<int>& semantic, const std::vector<bool>& stuff_flags,
                           const InferenceThresholds& thresholds = {});

std::vector<PointMask> infer_interactive(const PredictionSet& preds, const PointLayout& layout,
                                         const InferenceThresholds& thresholds = {});
std::vector<PointMask> infer_referring(const PredictionSet& preds, const PointLayout& layout,
                                       const InferenceThresholds& thresholds = {});

// Unified masks classified by softmax(F_out * open_embeddings^T); the
// embeddings carry the no-object row last.
std::vector<InstancePrediction> infer_openvocab(const PredictionSet& preds,
                                                const Matrix& open_embeddings,
                                                const PointLayout& layout,
                                                const InferenceThresholds& thresholds = {});

// All six outputs from one PredictionSet.
TaskOutputs run_all_tasks(const PredictionSet& preds, const PointLayout& layout,
                          const std::vector<bool>& closed_stuff_flags,
                          const Matrix& open_embeddings,
                          const InferenceThresholds& thresholds = {});

// Structured text: one JSON document per scene, class columns resolved to
// names.
std::string export_task_outputs(const TaskOutputs& outputs,
                                const std::vector<std::string>& closed_names,
                                const std::vector<std::string>& open_names);

}  // namespace uniseg
