#include "uniseg/losses.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uniseg {

std::vector<RowSupervision> unified_supervision(const MatchResult& match,
                                                const std::vector<MaskTarget>& targets,
                                                const std::vector<Vector>& pseudo_masks,
                                                int no_object_class, double no_object_weight) {
  std::vector<RowSupervision> rows;
  for (const auto& [row, t] : match.positives) {
    const MaskTarget& target = targets[static_cast<std::size_t>(t)];
    rows.push_back({row, target.mask, target.cls, 1.0});
  }
  for (const auto& [row, k] : match.pseudo_pairs) {
    rows.push_back({row, pseudo_masks[static_cast<std::size_t>(k)], -1, 1.0});
  }
  for (int row : match.negatives) {
    rows.push_back({row, std::nullopt, no_object_class, no_object_weight});
  }
  return rows;
}

Var base_loss(const PredictionSet& preds, const std::vector<RowSupervision>& rows) {
  Tape& tape = *preds.mask_logits.tape();
  std::vector<int> mask_rows;
  std::vector<const Vector*> mask_targets;
  std::vector<std::pair<int, int>> cls_entries;
  std::vector<double> cls_weights;
  for (const RowSupervision& r : rows) {
    if (r.row < 0 || r.row >= preds.rows()) throw ContractError("base_loss: row out of range");
    if (r.mask) {
      if (r.mask->size() != preds.mask_logits.cols()) {
        throw DimensionError("base_loss: mask target length differs from prediction masks");
      }
      mask_rows.push_back(r.row);
      mask_targets.push_back(&*r.mask);
    }
    if (r.cls >= 0) {
      cls_entries.emplace_back(r.row, r.cls);
      cls_weights.push_back(r.cls_weight);
    }
  }

  Var total = tape.constant(Matrix::Zero(1, 1));
  if (!mask_rows.empty()) {
    Matrix target(static_cast<Index>(mask_rows.size()), preds.mask_logits.cols());
    for (std::size_t k = 0; k < mask_targets.size(); ++k) {
      target.row(static_cast<Index>(k)) = mask_targets[k]->transpose();
    }
    const Var t = tape.constant(target);
    const Var p = sigmoid(gather_rows(preds.mask_logits, mask_rows));
    total = add(total, add(bce(p, t), affine(mean(dice_coefficient(p, t)), -1.0, 1.0)));
  }
  if (!cls_entries.empty()) {
    const double weight_sum = std::accumulate(cls_weights.begin(), cls_weights.end(), 0.0);
    const Var picked = gather_entries(row_log_softmax(preds.cls_logits), cls_entries);
    const Var w = tape.constant(Eigen::Map<const Vector>(cls_weights.data(),
                                                          static_cast<Index>(cls_weights.size())));
    total = add(total, scale(sum(mul(picked, w)), -1.0 / weight_sum));
  }
  return total;
}

Var similarity_matrix(Var vision_features, Var text_features) {
  return matmul_nt(row_l2_normalize(vision_features), row_l2_normalize(text_features));
}

namespace {

Var diagonal(Var square) {
  std::vector<std::pair<int, int>> entries;
  for (Index i = 0; i < square.rows(); ++i) entries.emplace_back(i, i);
  return gather_entries(square, entries);
}

}  // namespace

ContrastiveTerms contrastive_terms(Var similarity, Var log_tau) {
  if (similarity.rows() == 0) throw ContractError("contrastive_loss: B = 0");
  if (similarity.rows() != similarity.cols()) {
    throw DimensionError("contrastive_loss: similarity matrix is not square");
  }
  const Var inv_tau = exp(scale(log_tau, -1.0));
  const Var logits = mul(similarity, inv_tau);
  const Var l_v = scale(mean(diagonal(row_log_softmax(logits))), -1.0);
  const Var l_t = scale(mean(diagonal(row_log_softmax(transpose(logits)))), -1.0);
  return {l_v, l_t};
}

Var contrastive_loss(Var similarity, Var log_tau) {
  const ContrastiveTerms terms = contrastive_terms(similarity, log_tau);
  return add(terms.vision_to_text, terms.text_to_vision);
}

Var ranking_loss(Var similarity) {
  const Index b = similarity.rows();
  if (b == 0) throw ContractError("ranking_loss: B = 0");
  if (similarity.cols() != b) throw DimensionError("ranking_loss: similarity matrix is not square");
  return scale(sum(relu(sub(similarity, diagonal(similarity)))), 1.0 / static_cast<double>(b));
}

std::vector<std::vector<int>> top_region(const Matrix& teacher_logits, int k_percent) {
  const Index m = teacher_logits.cols();
  if (m == 0) throw ContractError("top_region: m = 0");
  const auto size = std::max<Index>(1, static_cast<Index>(std::floor(k_percent / 100.0 * m)));
  std::vector<std::vector<int>> region;
  for (Index r = 0; r < teacher_logits.rows(); ++r) {
    std::vector<int> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), 0);
    std::stable_sort(cols.begin(), cols.end(), [&](int a, int b) {
      return teacher_logits(r, a) > teacher_logits(r, b);
    });
    cols.resize(static_cast<std::size_t>(size));
    std::sort(cols.begin(), cols.end());
    region.push_back(std::move(cols));
  }
  return region;
}

Var distill_v_to_g(Var student_mask_logits, Var teacher_mask_logits, int k_percent) {
  if (student_mask_logits.rows() != teacher_mask_logits.rows() ||
      student_mask_logits.cols() != teacher_mask_logits.cols()) {
    throw DimensionError("distill_v_to_g: student and teacher shapes differ");
  }
  Tape& tape = *student_mask_logits.tape();
  const Var teacher = tape.detach(teacher_mask_logits);
  std::vector<std::pair<int, int>> entries;
  const auto region = top_region(teacher.value(), k_percent);
  for (std::size_t r = 0; r < region.size(); ++r) {
    for (int c : region[r]) entries.emplace_back(static_cast<int>(r), c);
  }
  return bce(sigmoid(gather_entries(student_mask_logits, entries)),
             sigmoid(gather_entries(teacher, entries)));
}

Var distill_v_to_r(Var student_cls_logits, Var teacher_cls_logits) {
  Tape& tape = *student_cls_logits.tape();
  return bce(sigmoid(student_cls_logits), sigmoid(tape.detach(teacher_cls_logits)));
}

Var total_loss(const LossParts& parts, double lambda) {
  Var inter;
  for (const Var& v : {parts.v_to_g, parts.v_to_r, parts.contrastive, parts.ranking}) {
    if (!v.valid()) continue;
    inter = inter.valid() ? add(inter, v) : v;
  }
  if (!inter.valid()) return parts.base;
  return add(parts.base, scale(inter, lambda));
}

double inter_task_value(const LossParts& parts) {
  double total = 0.0;
  for (const Var& v : {parts.v_to_g, parts.v_to_r, parts.contrastive, parts.ranking}) {
    if (v.valid()) total += v.scalar();
  }
  return total;
}

}  // namespace uniseg
