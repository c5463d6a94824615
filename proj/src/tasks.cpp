#include "uniseg/tasks.hpp"

#include "uniseg/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uniseg {
namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

Vector point_logits(const PredictionSet& preds, int row, const PointLayout& layout) {
  if (row < 0 || row >= preds.rows()) throw ContractError("task: prediction row out of range");
  const Vector values = preds.mask_logits.value().row(row).transpose();
  return superpoint_to_point(values, layout.partition, preds.sampled, layout.superpoints);
}

double logit_threshold(double binarize) { return std::log(binarize / (1.0 - binarize)); }

std::vector<PointMask> prompt_masks(const PredictionSet& preds, int first, int count,
                                    const PointLayout& layout, double binarize) {
  std::vector<PointMask> out;
  for (int i = 0; i < count; ++i) out.push_back(row_to_points(preds, first + i, layout, binarize));
  return out;
}

}  // namespace

PointMask row_to_points(const PredictionSet& preds, int row, const PointLayout& layout,
                        double binarize) {
  const Vector logits = point_logits(preds, row, layout);
  const double cut = logit_threshold(binarize);
  PointMask mask;
  for (Index p = 0; p < logits.size(); ++p) {
    if (logits(p) > cut) mask.push_back(static_cast<int>(p));
  }
  return mask;
}

double mask_confidence(const PredictionSet& preds, int row, const PointLayout& layout,
                       double binarize) {
  const Vector logits = point_logits(preds, row, layout);
  const double cut = logit_threshold(binarize);
  double total = 0.0;
  int count = 0;
  for (Index p = 0; p < logits.size(); ++p) {
    if (logits(p) > cut) {
      total += sigmoid(logits(p));
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / count;
}

std::vector<InstancePrediction> instances_from_probs(const PredictionSet& preds,
                                                     const Matrix& class_prob,
                                                     const PointLayout& layout,
                                                     const InferenceThresholds& thresholds) {
  if (class_prob.rows() < preds.m || class_prob.cols() < 2) {
    throw DimensionError("infer_instances: class probabilities do not cover the unified rows");
  }
  const Index no_object = class_prob.cols() - 1;
  std::vector<InstancePrediction> out;
  for (int i = 0; i < preds.m; ++i) {
    Index best = 0;
    class_prob.row(i).maxCoeff(&best);
    if (best == no_object) continue;
    PointMask mask = row_to_points(preds, i, layout, thresholds.binarize);
    if (mask.empty()) continue;
    const double score =
        class_prob(i, best) * mask_confidence(preds, i, layout, thresholds.binarize);
    if (score < thresholds.score_floor) continue;
    out.push_back({std::move(mask), static_cast<int>(best), score, i});
  }
  return out;
}

std::vector<InstancePrediction> infer_instances(const PredictionSet& preds,
                                                const PointLayout& layout,
                                                const InferenceThresholds& thresholds) {
  return instances_from_probs(preds, preds.cls_prob.value(), layout, thresholds);
}

std::vector<int> infer_semantic(const PredictionSet& preds, const PointLayout& layout) {
  const Matrix& prob = preds.cls_prob.value();
  const Index classes = prob.cols() - 1;
  const Matrix masks = preds.mask_logits.value().topRows(preds.m).unaryExpr(
      [](double v) { return sigmoid(v); });
  // Rows: sampled superpoints; columns: closed classes.
  const Matrix votes = masks.transpose() * prob.topLeftCorner(preds.m, classes);
  std::vector<int> per_superpoint(static_cast<std::size_t>(layout.superpoints), 0);
  for (std::size_t k = 0; k < preds.sampled.size(); ++k) {
    Index best = 0;
    votes.row(static_cast<Index>(k)).maxCoeff(&best);
    per_superpoint[static_cast<std::size_t>(preds.sampled[k])] = static_cast<int>(best);
  }
  std::vector<int> out;
  out.reserve(layout.partition.size());
  for (int s : layout.partition) out.push_back(per_superpoint[static_cast<std::size_t>(s)]);
  return out;
}

PanopticMap infer_panoptic(const std::vector<InstancePrediction>& instances,
                           const std::vector<int>& semantic, const std::vector<bool>& stuff_flags,
                           const InferenceThresholds& thresholds) {
  const std::size_t n = semantic.size();
  PanopticMap out{std::vector<int>(n, -1), std::vector<int>(n, -1)};
  auto is_stuff = [&](int c) {
    return c >= 0 && static_cast<std::size_t>(c) < stuff_flags.size() &&
           stuff_flags[static_cast<std::size_t>(c)];
  };

  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    if (!is_stuff(instances[k].cls)) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (instances[a].score != instances[b].score) return instances[a].score > instances[b].score;
    return instances[a].query < instances[b].query;
  });

  int next_segment = static_cast<int>(stuff_flags.size());
  for (std::size_t k : order) {
    std::vector<int> claimed;
    for (int p : instances[k].points) {
      if (p < 0 || static_cast<std::size_t>(p) >= n) throw ContractError("infer_panoptic: point out of range");
      if (out.segment[static_cast<std::size_t>(p)] < 0) claimed.push_back(p);
    }
    if (static_cast<int>(claimed.size()) < thresholds.min_segment_points) continue;
    for (int p : claimed) {
      out.segment[static_cast<std::size_t>(p)] = next_segment;
      out.cls[static_cast<std::size_t>(p)] = instances[k].cls;
    }
    ++next_segment;
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (out.segment[p] >= 0 || !is_stuff(semantic[p])) continue;
    out.segment[p] = semantic[p];
    out.cls[p] = semantic[p];
  }
  return out;
}

std::vector<PointMask> infer_interactive(const PredictionSet& preds, const PointLayout& layout,
                                         const InferenceThresholds& thresholds) {
  return prompt_masks(preds, preds.m, preds.k_v, layout, thresholds.binarize);
}

std::vector<PointMask> infer_referring(const PredictionSet& preds, const PointLayout& layout,
                                       const InferenceThresholds& thresholds) {
  return prompt_masks(preds, preds.m + preds.k_v, preds.k_t, layout, thresholds.binarize);
}

std::vector<InstancePrediction> infer_openvocab(const PredictionSet& preds,
                                                const Matrix& open_embeddings,
                                                const PointLayout& layout,
                                                const InferenceThresholds& thresholds) {
  const Matrix& f_out = preds.f_out.value();
  if (open_embeddings.cols() != f_out.cols()) {
    throw DimensionError("infer_openvocab: embedding width differs from F_out");
  }
  Matrix logits = f_out.topRows(preds.m) * open_embeddings.transpose();
  for (Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - top).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  return instances_from_probs(preds, logits, layout, thresholds);
}

TaskOutputs run_all_tasks(const PredictionSet& preds, const PointLayout& layout,
                          const std::vector<bool>& closed_stuff_flags,
                          const Matrix& open_embeddings, const InferenceThresholds& thresholds) {
  TaskOutputs out;
  out.instances = infer_instances(preds, layout, thresholds);
  out.semantic = infer_semantic(preds, layout);
  out.panoptic = infer_panoptic(out.instances, out.semantic, closed_stuff_flags, thresholds);
  out.interactive = infer_interactive(preds, layout, thresholds);
  for (int i = 0; i < preds.k_v; ++i) {
    out.interactive_scores.push_back(
        mask_confidence(preds, preds.vision_row(i), layout, thresholds.binarize));
  }
  out.referring = infer_referring(preds, layout, thresholds);
  out.openvocab = infer_openvocab(preds, open_embeddings, layout, thresholds);
  return out;
}

std::string export_task_outputs(const TaskOutputs& outputs,
                                const std::vector<std::string>& closed_names,
                                const std::vector<std::string>& open_names) {
  auto name = [](const std::vector<std::string>& names, int c) {
    return c >= 0 && static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)]
                                                                 : std::string("void");
  };
  auto instance_list = [&](const std::vector<InstancePrediction>& list,
                           const std::vector<std::string>& names) {
    nlohmann::json arr = nlohmann::json::array();
    for (const InstancePrediction& inst : list) {
      arr.push_back({{"class", name(names, inst.cls)},
                     {"score", inst.score},
                     {"query", inst.query},
                     {"points", inst.points}});
    }
    return arr;
  };
  nlohmann::json doc;
  doc["panoptic_segment"] = outputs.panoptic.segment;
  nlohmann::json pan_cls = nlohmann::json::array();
  for (int c : outputs.panoptic.cls) pan_cls.push_back(name(closed_names, c));
  doc["panoptic_class"] = pan_cls;
  nlohmann::json sem = nlohmann::json::array();
  for (int c : outputs.semantic) sem.push_back(name(closed_names, c));
  doc["semantic"] = sem;
  doc["instances"] = instance_list(outputs.instances, closed_names);
  doc["interactive"] = outputs.interactive;
  doc["interactive_scores"] = outputs.interactive_scores;
  doc["referring"] = outputs.referring;
  doc["openvocab"] = instance_list(outputs.openvocab, open_names);
  return doc.dump(1) + "\n";
}

}  // namespace uniseg
