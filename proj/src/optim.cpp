#include "uniseg/optim.hpp"

#include "uniseg/errors.hpp"

#include <cmath>

namespace uniseg {

double PolySchedule::at(std::int64_t step) const {
  if (constant) return lr0;
  if (total_steps <= 0 || step >= total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * std::pow(frac, power);
}

AdamW::AdamW(const ParameterSet& params, AdamWOptions options) : options_(options) {
  for (const Parameter& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(ParameterSet& params, const Gradients& grads) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw DimensionError("adamw_step: gradient count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].value.rows() || g.cols() != params[i].value.cols()) {
      throw DimensionError("adamw_step: gradient shape mismatch for " + params[i].name);
    }
    if (!g.allFinite()) throw NumericError("adamw_step: non-finite gradient for " + params[i].name);
  }

  const double lr = options_.schedule.at(step_);
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double t = static_cast<double>(step_ + 1);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double decay = 1.0 - lr * options_.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i].value;
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseAbs2();
    p *= decay;
    p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
  }
  ++step_;
}

void AdamW::restore(const ParameterSet& params, std::int64_t step, std::vector<Matrix> m,
                    std::vector<Matrix> v) {
  if (m.size() != params.size() || v.size() != params.size()) {
    throw DimensionError("optimizer state: moment count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = params[i].value;
    if (m[i].rows() != p.rows() || m[i].cols() != p.cols() || v[i].rows() != p.rows() ||
        v[i].cols() != p.cols()) {
      throw DimensionError("optimizer state: moment shape mismatch for " + params[i].name);
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace uniseg
