#pragma once

#include "uniseg/autodiff.hpp"

#include <utility>
#include <vector>

namespace uniseg {

// Ground-truth segment expressed over the sampled superpoints.
struct MaskTarget {
  Vector mask;  // 0/1 per sampled superpoint
  int cls = -1;
};

struct CostWeights {
  double dice = 1.0;
  double ce = 1.0;
};

// cost(i, j) = w_dice * (1 - Dice(sigmoid(mask_i), gt_j)) + w_ce * -log(cls_i[gt_j]).
// `mask_logits` rows are predictions; `class_prob` rows are probabilities.
// w_ce = 0 gives a Dice-only cost and ignores classes. Throws ContractError
// when a target mask is empty.
Matrix assignment_cost(const Matrix& mask_logits, const Matrix& class_prob,
                       const std::vector<MaskTarget>& targets, const CostWeights& weights = {});

using Assignment = std::vector<std::pair<int, int>>;

// Minimum-cost assignment of every column to a distinct row. When there are
// fewer rows than columns the matrix is padded with dummy rows costing
// 2 * max + 1 and pairs involving dummy rows are dropped. Pairs are sorted by
// row. Deterministic: fixed scan order with strict comparisons. Throws
// ContractError on non-finite entries.
Assignment hungarian(const Matrix& cost);

double assignment_cost_total(const Matrix& cost, const Assignment& assignment);

struct MatchResult {
  Assignment positives;     // (pred row, target index)
  Assignment pseudo_pairs;  // (pred row, pseudo mask index)
  std::vector<int> negatives;  // unified rows matched to neither, ascending
};

double mask_iou(const Vector& a, const Vector& b);

// Positives from `assignment`; the remaining rows are re-matched with a
// Dice-only Hungarian against pseudo masks whose IoU with every target is
// below `max_target_iou`. Rows matched to nothing are free negatives.
MatchResult split_and_rematch(const Assignment& assignment, const Matrix& mask_logits,
                              const std::vector<MaskTarget>& targets,
                              const std::vector<Vector>& pseudo_masks,
                              double max_target_iou = 0.5);

}  // namespace uniseg
