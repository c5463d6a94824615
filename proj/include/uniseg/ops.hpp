#pragma once

#include "uniseg/autodiff.hpp"

#include <utility>
#include <vector>

// Differentiable primitives over 2-D double matrices. Scalars are 1x1.
// Every primitive checks shapes (DimensionError naming the op) and
// finiteness of its output (NumericError).
namespace uniseg {

// Elementwise binary ops. `b` may match `a` exactly or broadcast as a
// 1xC row, an Rx1 column, or a 1x1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// s * a + c
Var affine(Var a, double s, double c = 0.0);
inline Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
Var gather_rows(Var a, const std::vector<int>& rows);
// Column vector of a(r, c) for each (r, c) pair.
Var gather_entries(Var a, const std::vector<std::pair<int, int>>& entries);

// Row g of the result is the mean of the rows of `a` with segment id g.
// Every segment in [0, segments) must be non-empty.
Var segment_mean(Var a, const std::vector<int>& segment_ids, int segments);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);

Var row_softmax(Var a);
Var row_log_softmax(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var relu(Var a);

// Row-wise zero-mean unit-variance normalization (no affine part).
Var layer_norm(Var a, double eps = 1e-5);
Var row_l2_normalize(Var a);

// Mean binary cross-entropy between probabilities `p` and targets `t` of the
// same shape. `p` is clamped into [1e-12, 1 - 1e-12] before the log.
Var bce(Var p, Var t);

// Per-row Dice coefficient 2*sum(p*t) / (sum(p) + sum(t) + 1e-12), Rx1.
Var dice_coefficient(Var p, Var t);

inline constexpr double kLogClamp = 1e-12;

}  // namespace uniseg
