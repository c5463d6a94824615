#pragma once

#include "uniseg/autodiff.hpp"

#include <cstdint>

namespace uniseg {

// lr(t) = lr0 * (1 - t/T)^power, clamped to 0 past T. `constant` pins lr(t)
// to lr0.
struct PolySchedule {
  double lr0 = 1e-4;
  std::int64_t total_steps = 1;
  double power = 0.9;
  bool constant = false;

  double at(std::int64_t step) const;
};

struct AdamWOptions {
  PolySchedule schedule;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay: p <- p*(1 - lr*wd) - lr*mhat/(sqrt(vhat)+eps).
class AdamW {
 public:
  AdamW(const ParameterSet& params, AdamWOptions options);

  // Throws NumericError naming the parameter on a non-finite gradient, and
  // DimensionError when a gradient does not match its parameter.
  void step(ParameterSet& params, const Gradients& grads);

  std::int64_t step_count() const { return step_; }
  double current_lr() const { return options_.schedule.at(step_); }
  const AdamWOptions& options() const { return options_; }
  AdamWOptions& options() { return options_; }

  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

  // Restores a saved state. Moment shapes must match the parameters.
  void restore(const ParameterSet& params, std::int64_t step, std::vector<Matrix> m,
               std::vector<Matrix> v);

 private:
  AdamWOptions options_;
  std::int64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace uniseg
