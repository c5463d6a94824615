#pragma once

#include "uniseg/autodiff.hpp"
#include "uniseg/decoder.hpp"
#include "uniseg/matching.hpp"

#include <optional>
#include <vector>

namespace uniseg {

// One supervised prediction row: an optional mask target (over sampled
// superpoints) and an optional class target with weight.
struct RowSupervision {
  int row = -1;
  std::optional<Vector> mask;
  int cls = -1;  // -1: no class term
  double cls_weight = 1.0;
};

// Rows for the unified queries: positives regress their target mask and
// class, pseudo pairs regress the pseudo mask only, free negatives are
// pushed toward `no_object_class` with weight `no_object_weight`.
std::vector<RowSupervision> unified_supervision(const MatchResult& match,
                                                const std::vector<MaskTarget>& targets,
                                                const std::vector<Vector>& pseudo_masks,
                                                int no_object_class, double no_object_weight);

// L_base = mean over mask rows of [BCE(sigmoid(mask), t) + 1 - Dice]
//        + weighted mean over class rows of -log softmax(cls)[c].
Var base_loss(const PredictionSet& preds, const std::vector<RowSupervision>& rows);

// s_ij = normalize(vision_i) . normalize(text_j), B x B.
Var similarity_matrix(Var vision_features, Var text_features);

struct ContrastiveTerms {
  Var vision_to_text;  // L_v
  Var text_to_vision;  // L_t
};

// Symmetric InfoNCE at temperature exp(log_tau). Throws ContractError when
// B = 0.
ContrastiveTerms contrastive_terms(Var similarity, Var log_tau);
Var contrastive_loss(Var similarity, Var log_tau);

// (1/B) sum_ij max(0, s_ij - s_ii).
Var ranking_loss(Var similarity);

// Per teacher row, the max(1, floor(k/100 * m)) highest entries (ties to
// lower column).
std::vector<std::vector<int>> top_region(const Matrix& teacher_logits, int k_percent);

// BCE(sigmoid(student)[R], sigmoid(teacher)[R]) with the teacher detached.
// Row i of student and teacher must describe the same instance.
Var distill_v_to_g(Var student_mask_logits, Var teacher_mask_logits, int k_percent);

// BCE(sigmoid(student_cls), sigmoid(teacher_cls)) with the teacher detached.
Var distill_v_to_r(Var student_cls_logits, Var teacher_cls_logits);

// Terms left invalid are treated as zero.
struct LossParts {
  Var base;
  Var v_to_g;
  Var v_to_r;
  Var contrastive;
  Var ranking;
};

// L = L_base + lambda * (L_v->g + L_v->r + L_con + L_rank).
Var total_loss(const LossParts& parts, double lambda);

// Sum of the valid inter-task terms as a plain number.
double inter_task_value(const LossParts& parts);

}  // namespace uniseg
