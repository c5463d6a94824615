#include "uniseg/matching.hpp"

#include "uniseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uniseg {

Matrix assignment_cost(const Matrix& mask_logits, const Matrix& class_prob,
                       const std::vector<MaskTarget>& targets, const CostWeights& weights) {
  const Index rows = mask_logits.rows();
  const Index cols = static_cast<Index>(targets.size());
  const Matrix prob = mask_logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  const Vector prob_sum = prob.rowwise().sum();
  Matrix cost = Matrix::Zero(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    const MaskTarget& t = targets[static_cast<std::size_t>(j)];
    if (t.mask.size() != mask_logits.cols()) {
      throw DimensionError("assignment_cost: target mask length differs from prediction masks");
    }
    const double t_sum = t.mask.sum();
    if (t_sum <= 0.0) throw ContractError("assignment_cost: target " + std::to_string(j) + " is empty");
    const Vector inter = prob * t.mask;
    for (Index i = 0; i < rows; ++i) {
      double c = weights.dice * (1.0 - 2.0 * inter(i) / (prob_sum(i) + t_sum + 1e-12));
      if (weights.ce != 0.0) {
        c += weights.ce * -std::log(std::max(class_prob(i, t.cls), 1e-12));
      }
      cost(i, j) = std::max(c, 0.0);
    }
  }
  return cost;
}

Assignment hungarian(const Matrix& input) {
  if (!input.allFinite()) throw ContractError("hungarian: non-finite cost entries");
  const Index real_rows = input.rows();
  const Index cols = input.cols();
  if (cols == 0) return {};
  Matrix cost = input;
  if (real_rows < cols) {
    const double pad = 2.0 * std::max(input.size() ? input.maxCoeff() : 0.0, 0.0) + 1.0;
    cost.conservativeResize(cols, cols);
    cost.bottomRows(cols - real_rows).setConstant(pad);
  }
  // Shortest augmenting path with potentials; targets (columns of `cost`)
  // are inserted one at a time and matched to prediction rows.
  const Index n = cols, m = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Index> owner(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    owner[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), kInf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = owner[static_cast<std::size_t>(j0)];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(j - 1, i0 - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(owner[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (owner[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      owner[static_cast<std::size_t>(j0)] = owner[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  for (Index j = 1; j <= m; ++j) {
    const Index target = owner[static_cast<std::size_t>(j)];
    if (target != 0 && j - 1 < real_rows) {
      out.emplace_back(static_cast<int>(j - 1), static_cast<int>(target - 1));
    }
  }
  return out;
}

double assignment_cost_total(const Matrix& cost, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [r, c] : assignment) total += cost(r, c);
  return total;
}

double mask_iou(const Vector& a, const Vector& b) {
  double inter = 0.0, uni = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const bool x = a(i) > 0.5, y = b(i) > 0.5;
    inter += (x && y) ? 1.0 : 0.0;
    uni += (x || y) ? 1.0 : 0.0;
  }
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchResult split_and_rematch(const Assignment& assignment, const Matrix& mask_logits,
                              const std::vector<MaskTarget>& targets,
                              const std::vector<Vector>& pseudo_masks, double max_target_iou) {
  MatchResult result;
  result.positives = assignment;
  std::vector<char> taken(static_cast<std::size_t>(mask_logits.rows()), 0);
  for (const auto& [row, target] : assignment) taken[static_cast<std::size_t>(row)] = 1;

  std::vector<int> free_rows;
  for (Index r = 0; r < mask_logits.rows(); ++r) {
    if (!taken[static_cast<std::size_t>(r)]) free_rows.push_back(static_cast<int>(r));
  }

  std::vector<int> admissible;
  std::vector<MaskTarget> pseudo_targets;
  for (std::size_t k = 0; k < pseudo_masks.size(); ++k) {
    const Vector& pm = pseudo_masks[k];
    if (pm.sum() <= 0.0) continue;
    const bool overlaps = std::any_of(targets.begin(), targets.end(), [&](const MaskTarget& t) {
      return mask_iou(pm, t.mask) >= max_target_iou;
    });
    if (overlaps) continue;
    admissible.push_back(static_cast<int>(k));
    pseudo_targets.push_back({pm, -1});
  }

  if (!free_rows.empty() && !admissible.empty()) {
    Matrix sub(static_cast<Index>(free_rows.size()), mask_logits.cols());
    for (std::size_t r = 0; r < free_rows.size(); ++r) {
      sub.row(static_cast<Index>(r)) = mask_logits.row(free_rows[r]);
    }
    const Matrix cost = assignment_cost(sub, Matrix(), pseudo_targets, {1.0, 0.0});
    for (const auto& [r, c] : hungarian(cost)) {
      result.pseudo_pairs.emplace_back(free_rows[static_cast<std::size_t>(r)],
                                       admissible[static_cast<std::size_t>(c)]);
      taken[static_cast<std::size_t>(free_rows[static_cast<std::size_t>(r)])] = 1;
    }
  }
  for (Index r = 0; r < mask_logits.rows(); ++r) {
    if (!taken[static_cast<std::size_t>(r)]) result.negatives.push_back(static_cast<int>(r));
  }
  return result;
}

}  // namespace uniseg
