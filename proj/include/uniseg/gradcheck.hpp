#pragma once

#include "uniseg/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace uniseg {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries checked per tensor; larger tensors are subsampled (seeded).
  std::size_t max_entries = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6) over the
  // checked entries.
  double rel_error = 0.0;
  std::size_t entries = 0;
  // Entries whose +-step evaluations flipped a relu, so the central
  // difference straddles a kink. Excluded from rel_error.
  std::size_t kinked = 0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Central differences against tape gradients. Detached values are frozen
// at the unperturbed point through a StopGradientCache, so the oracle
// differentiates the same stop-gradient objective backward() does. Entries
// whose difference crosses a relu kink are counted, not compared.
using InputLossFn = std::function<Var(Tape&, const std::vector<Var>&)>;
std::vector<GradCheckResult> check_input_gradients(
    const InputLossFn& loss, const std::vector<std::pair<std::string, Matrix>>& inputs,
    const GradCheckOptions& options = {});

using ParamLossFn = std::function<Var(ParamBinder&)>;
std::vector<GradCheckResult> check_parameter_gradients(const ParamLossFn& loss,
                                                       const ParameterSet& params,
                                                       const GradCheckOptions& options = {});

double max_rel_error(const std::vector<GradCheckResult>& results);

}  // namespace uniseg
