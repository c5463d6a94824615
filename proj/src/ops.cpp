#include "uniseg/ops.hpp"

#include "uniseg/errors.hpp"

#include <cmath>
#include <string>

namespace uniseg {
namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw ContractError("operation on an unbound Var");
  return *v.tape();
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast classify(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_error(op, a, b);
}

Matrix expand(const Matrix& b, Broadcast mode, Index rows, Index cols) {
  switch (mode) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kCol:
      return b.replicate(1, cols);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast mode) {
  switch (mode) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kCol:
      return g.rowwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

}  // namespace

Var add(Var a, Var b) {
  const Broadcast mode = classify("add", a.value(), b.value());
  Matrix out = a.value() + expand(b.value(), mode, a.rows(), a.cols());
  return tape_of(a).record("add", std::move(out), {a, b},
                           [mode](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) *in[0] += g;
                             if (in[1]) *in[1] += reduce(g, mode);
                           });
}

Var sub(Var a, Var b) {
  const Broadcast mode = classify("sub", a.value(), b.value());
  Matrix out = a.value() - expand(b.value(), mode, a.rows(), a.cols());
  return tape_of(a).record("sub", std::move(out), {a, b},
                           [mode](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) *in[0] += g;
                             if (in[1]) *in[1] -= reduce(g, mode);
                           });
}

Var mul(Var a, Var b) {
  const Broadcast mode = classify("mul", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(expand(b.value(), mode, a.rows(), a.cols()));
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(
      "mul", std::move(out), {a, b},
      [mode, ia, ib](const Tape& t, const Matrix& g, std::span<Matrix* const> in) {
        const Matrix& av = t.value(ia);
        const Matrix& bv = t.value(ib);
        if (in[0]) *in[0] += g.cwiseProduct(expand(bv, mode, av.rows(), av.cols()));
        if (in[1]) *in[1] += reduce(g.cwiseProduct(av), mode);
      });
}

Var affine(Var a, double s, double c) {
  Matrix out = (a.value() * s).array() + c;
  return tape_of(a).record("affine", std::move(out), {a},
                           [s](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) *in[0] += s * g;
                           });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record("matmul", std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->noalias() += g * t.value(ib).transpose();
                             if (in[1]) in[1]->noalias() += t.value(ia).transpose() * g;
                           });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.value(), b.value());
  Matrix out = a.value() * b.value().transpose();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record("matmul_nt", std::move(out), {a, b},
                           [ia, ib](const Tape& t, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->noalias() += g * t.value(ib);
                             if (in[1]) in[1]->noalias() += g.transpose() * t.value(ia);
                           });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return tape_of(a).record("transpose", std::move(out), {a},
                           [](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) *in[0] += g.transpose();
                           });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
  }
  return tape_of(parts.front())
      .record("concat_rows", std::move(out), parts,
              [offsets](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                for (std::size_t k = 0; k < in.size(); ++k) {
                  if (in[k]) *in[k] += g.middleRows(offsets[k], in[k]->rows());
                }
              });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<Index> offsets;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    out.middleCols(offsets[k], parts[k].cols()) = parts[k].value();
  }
  return tape_of(parts.front())
      .record("concat_cols", std::move(out), parts,
              [offsets](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                for (std::size_t k = 0; k < in.size(); ++k) {
                  if (in[k]) *in[k] += g.middleCols(offsets[k], in[k]->cols());
                }
              });
}

Var slice_rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + std::to_string(a.rows()) +
                         " rows");
  }
  Matrix out = a.value().middleRows(start, count);
  return tape_of(a).record("slice_rows", std::move(out), {a},
                           [start, count](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->middleRows(start, count) += g;
                           });
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + std::to_string(a.cols()) +
                         " cols");
  }
  Matrix out = a.value().middleCols(start, count);
  return tape_of(a).record("slice_cols", std::move(out), {a},
                           [start, count](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->middleCols(start, count) += g;
                           });
}

Var gather_rows(Var a, const std::vector<int>& rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    }
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  return tape_of(a).record("gather_rows", std::move(out), {a},
                           [rows](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (!in[0]) return;
                             for (std::size_t i = 0; i < rows.size(); ++i) {
                               in[0]->row(rows[i]) += g.row(static_cast<Index>(i));
                             }
                           });
}

Var gather_entries(Var a, const std::vector<std::pair<int, int>>& entries) {
  Matrix out(static_cast<Index>(entries.size()), 1);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto [r, c] = entries[k];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
      throw DimensionError("gather_entries: index out of range");
    }
    out(static_cast<Index>(k), 0) = a.value()(r, c);
  }
  return tape_of(a).record("gather_entries", std::move(out), {a},
                           [entries](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (!in[0]) return;
                             for (std::size_t k = 0; k < entries.size(); ++k) {
                               (*in[0])(entries[k].first, entries[k].second) +=
                                   g(static_cast<Index>(k), 0);
                             }
                           });
}

Var segment_mean(Var a, const std::vector<int>& segment_ids, int segments) {
  if (static_cast<Index>(segment_ids.size()) != a.rows()) {
    throw DimensionError("segment_mean: " + std::to_string(segment_ids.size()) +
                         " segment ids for " + std::to_string(a.rows()) + " rows");
  }
  std::vector<double> counts(static_cast<std::size_t>(segments), 0.0);
  for (int s : segment_ids) {
    if (s < 0 || s >= segments) throw DimensionError("segment_mean: segment id out of range");
    counts[static_cast<std::size_t>(s)] += 1.0;
  }
  for (int s = 0; s < segments; ++s) {
    if (counts[static_cast<std::size_t>(s)] == 0.0) {
      throw ContractError("segment_mean: segment " + std::to_string(s) + " is empty");
    }
  }
  Matrix out = Matrix::Zero(segments, a.cols());
  for (std::size_t i = 0; i < segment_ids.size(); ++i) {
    out.row(segment_ids[i]) += a.value().row(static_cast<Index>(i));
  }
  for (int s = 0; s < segments; ++s) out.row(s) /= counts[static_cast<std::size_t>(s)];
  return tape_of(a).record(
      "segment_mean", std::move(out), {a},
      [segment_ids, counts](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
        if (!in[0]) return;
        for (std::size_t i = 0; i < segment_ids.size(); ++i) {
          const int s = segment_ids[i];
          in[0]->row(static_cast<Index>(i)) += g.row(s) / counts[static_cast<std::size_t>(s)];
        }
      });
}

Var sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return tape_of(a).record("sum", std::move(out), {a},
                           [](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->array() += g(0, 0);
                           });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean: empty input");
  const double n = static_cast<double>(a.value().size());
  Matrix out = Matrix::Constant(1, 1, a.value().sum() / n);
  return tape_of(a).record("mean", std::move(out), {a},
                           [n](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->array() += g(0, 0) / n;
                           });
}

Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  return tape_of(a).record("row_sum", std::move(out), {a},
                           [](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) *in[0] += g.replicate(1, in[0]->cols());
                           });
}

namespace {

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double hi = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - hi).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

}  // namespace

Var row_softmax(Var a) {
  if (a.cols() == 0) throw DimensionError("row_softmax: zero columns");
  Matrix out = softmax_rows(a.value());
  const Matrix y = out;
  return tape_of(a).record("row_softmax", std::move(out), {a},
                           [y](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (!in[0]) return;
                             const Matrix dot = g.cwiseProduct(y).rowwise().sum();
                             *in[0] += y.cwiseProduct(g - dot.replicate(1, g.cols()));
                           });
}

Var row_log_softmax(Var a) {
  if (a.cols() == 0) throw DimensionError("row_log_softmax: zero columns");
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double hi = x.row(r).maxCoeff();
    const double lse = hi + std::log((x.row(r).array() - hi).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  const Matrix y = out.array().exp();
  return tape_of(a).record("row_log_softmax", std::move(out), {a},
                           [y](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (!in[0]) return;
                             const Matrix total = g.rowwise().sum();
                             *in[0] += g - y.cwiseProduct(total.replicate(1, g.cols()));
                           });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const Matrix y = out;
  return tape_of(a).record("sigmoid", std::move(out), {a},
                           [y](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->array() += g.array() * y.array() * (1.0 - y.array());
                           });
}

Var log(Var a) {
  Matrix out = a.value().array().log();
  const int ia = a.id();
  return tape_of(a).record("log", std::move(out), {a},
                           [ia](const Tape& t, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->array() += g.array() / t.value(ia).array();
                           });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  const Matrix y = out;
  return tape_of(a).record("exp", std::move(out), {a},
                           [y](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (in[0]) in[0]->array() += g.array() * y.array();
                           });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  tape_of(a).note_activation_pattern(a.value());
  const int ia = a.id();
  return tape_of(a).record("relu", std::move(out), {a},
                           [ia](const Tape& t, const Matrix& g, std::span<Matrix* const> in) {
                             if (!in[0]) return;
                             in[0]->array() += (t.value(ia).array() > 0.0).cast<double>() * g.array();
                           });
}

Var layer_norm(Var a, double eps) {
  const Matrix& x = a.value();
  const Index d = x.cols();
  if (d == 0) throw DimensionError("layer_norm: zero columns");
  Matrix xhat(x.rows(), d);
  Vector inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat;
  return tape_of(a).record(
      "layer_norm", std::move(out), {a},
      [xhat, inv_std](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
        if (!in[0]) return;
        for (Index r = 0; r < g.rows(); ++r) {
          const double gm = g.row(r).mean();
          const double gx = g.row(r).cwiseProduct(xhat.row(r)).mean();
          in[0]->row(r).array() +=
              inv_std(r) * (g.row(r).array() - gm - xhat.row(r).array() * gx);
        }
      });
}

Var row_l2_normalize(Var a) {
  const Matrix& x = a.value();
  Vector norms = (x.rowwise().squaredNorm().array() + 1e-24).sqrt();
  Matrix out = x.array().colwise() / norms.array();
  const Matrix y = out;
  return tape_of(a).record("row_l2_normalize", std::move(out), {a},
                           [y, norms](const Tape&, const Matrix& g, std::span<Matrix* const> in) {
                             if (!in[0]) return;
                             const Vector dot = g.cwiseProduct(y).rowwise().sum();
                             const Matrix d = g - (y.array().colwise() * dot.array()).matrix();
                             in[0]->array() += d.array().colwise() / norms.array();
                           });
}

Var bce(Var p, Var t) {
  require_same_shape("bce", p.value(), t.value());
  if (p.value().size() == 0) throw DimensionError("bce: empty input");
  const double n = static_cast<double>(p.value().size());
  const Matrix pc = p.value().cwiseMax(kLogClamp).cwiseMin(1.0 - kLogClamp);
  const Matrix& tv = t.value();
  const double total =
      -(tv.array() * pc.array().log() + (1.0 - tv.array()) * (1.0 - pc.array()).log()).sum();
  Matrix out = Matrix::Constant(1, 1, total / n);
  const int ip = p.id(), it = t.id();
  return tape_of(p).record(
      "bce", std::move(out), {p, t},
      [pc, n, ip, it](const Tape& tape, const Matrix& g, std::span<Matrix* const> in) {
        const Matrix& pv = tape.value(ip);
        const Matrix& tv = tape.value(it);
        const double s = g(0, 0) / n;
        if (in[0]) {
          const auto inside =
              ((pv.array() > kLogClamp) && (pv.array() < 1.0 - kLogClamp)).cast<double>();
          in[0]->array() +=
              -s * inside * (tv.array() / pc.array() - (1.0 - tv.array()) / (1.0 - pc.array()));
        }
        if (in[1]) {
          in[1]->array() += -s * (pc.array().log() - (1.0 - pc.array()).log());
        }
      });
}

Var dice_coefficient(Var p, Var t) {
  require_same_shape("dice_coefficient", p.value(), t.value());
  const Matrix& pv = p.value();
  const Matrix& tv = t.value();
  const Vector num = 2.0 * pv.cwiseProduct(tv).rowwise().sum();
  const Vector den = (pv.rowwise().sum() + tv.rowwise().sum()).array() + 1e-12;
  Matrix out = num.cwiseQuotient(den);
  const int ip = p.id(), it = t.id();
  return tape_of(p).record(
      "dice_coefficient", std::move(out), {p, t},
      [num, den, ip, it](const Tape& tape, const Matrix& g, std::span<Matrix* const> in) {
        const Matrix& pv = tape.value(ip);
        const Matrix& tv = tape.value(it);
        for (Index r = 0; r < pv.rows(); ++r) {
          const double d2 = den(r) * den(r);
          if (in[0]) {
            in[0]->row(r).array() += g(r, 0) * (2.0 * tv.row(r).array() * den(r) - num(r)) / d2;
          }
          if (in[1]) {
            in[1]->row(r).array() += g(r, 0) * (2.0 * pv.row(r).array() * den(r) - num(r)) / d2;
          }
        }
      });
}

}  // namespace uniseg
