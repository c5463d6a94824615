#include "uniseg/gradcheck.hpp"

#include "uniseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uniseg {
namespace {

std::vector<Index> pick_entries(Index size, const GradCheckOptions& options, std::uint64_t tag) {
  std::vector<Index> all(static_cast<std::size_t>(size));
  std::iota(all.begin(), all.end(), Index{0});
  if (all.size() <= options.max_entries) return all;
  Rng rng = Rng(options.seed).split(tag);
  rng.shuffle(all);
  all.resize(options.max_entries);
  std::sort(all.begin(), all.end());
  return all;
}

struct Probe {
  double value;
  std::uint64_t signature;
};

GradCheckResult compare(std::string name, const std::vector<double>& analytic,
                        const std::vector<double>& numeric, std::size_t kinked) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-6});
  return {std::move(name), std::sqrt(diff) / denom, analytic.size() + kinked, kinked, std::sqrt(na),
          std::sqrt(nn)};
}

}  // namespace

std::vector<GradCheckResult> check_input_gradients(
    const InputLossFn& loss, const std::vector<std::pair<std::string, Matrix>>& inputs,
    const GradCheckOptions& options) {
  StopGradientCache frozen;
  std::vector<Matrix> grads;
  {
    Tape tape;
    frozen.start_record();
    tape.set_stop_gradient_cache(&frozen);
    std::vector<Var> vars;
    for (const auto& [name, value] : inputs) vars.push_back(tape.variable(value));
    const Var out = loss(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) grads.push_back(tape.grad(v));
  }

  std::vector<Matrix> point;
  for (const auto& [name, value] : inputs) point.push_back(value);
  auto evaluate = [&]() {
    Tape tape;
    frozen.start_replay();
    tape.set_stop_gradient_cache(&frozen);
    std::vector<Var> vars;
    for (const Matrix& value : point) vars.push_back(tape.constant(value));
    const double value = loss(tape, vars).scalar();
    return Probe{value, tape.activation_signature()};
  };
  const std::uint64_t base = evaluate().signature;

  std::vector<GradCheckResult> results;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> analytic, numeric;
    std::size_t kinked = 0;
    for (Index e : pick_entries(point[k].size(), options, k)) {
      double& x = point[k].data()[e];
      const double saved = x;
      x = saved + options.step;
      const Probe up = evaluate();
      x = saved - options.step;
      const Probe down = evaluate();
      x = saved;
      if (up.signature != base || down.signature != base) {
        ++kinked;
        continue;
      }
      numeric.push_back((up.value - down.value) / (2.0 * options.step));
      analytic.push_back(grads[k].data()[e]);
    }
    results.push_back(compare(inputs[k].first, analytic, numeric, kinked));
  }
  return results;
}

std::vector<GradCheckResult> check_parameter_gradients(const ParamLossFn& loss,
                                                       const ParameterSet& params,
                                                       const GradCheckOptions& options) {
  StopGradientCache frozen;
  Gradients grads;
  {
    Tape tape;
    frozen.start_record();
    tape.set_stop_gradient_cache(&frozen);
    ParamBinder binder(tape, params, true);
    const Var out = loss(binder);
    tape.backward(out);
    grads = binder.gradients();
  }

  ParameterSet point = params;
  auto evaluate = [&]() {
    Tape tape;
    frozen.start_replay();
    tape.set_stop_gradient_cache(&frozen);
    ParamBinder binder(tape, point, false);
    const double value = loss(binder).scalar();
    return Probe{value, tape.activation_signature()};
  };
  const std::uint64_t base = evaluate().signature;

  std::vector<GradCheckResult> results;
  for (std::size_t k = 0; k < point.size(); ++k) {
    std::vector<double> analytic, numeric;
    std::size_t kinked = 0;
    for (Index e : pick_entries(point[k].value.size(), options, k)) {
      double& x = point[k].value.data()[e];
      const double saved = x;
      x = saved + options.step;
      const Probe up = evaluate();
      x = saved - options.step;
      const Probe down = evaluate();
      x = saved;
      if (up.signature != base || down.signature != base) {
        ++kinked;
        continue;
      }
      numeric.push_back((up.value - down.value) / (2.0 * options.step));
      analytic.push_back(grads[k].data()[e]);
    }
    results.push_back(compare(point[k].name, analytic, numeric, kinked));
  }
  return results;
}

double max_rel_error(const std::vector<GradCheckResult>& results) {
  double worst = 0.0;
  for (const auto& r : results) worst = std::max(worst, r.rel_error);
  return worst;
}

}  // namespace uniseg
