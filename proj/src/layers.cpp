#include "uniseg/layers.hpp"

#include "uniseg/ops.hpp"

#include <cmath>

namespace uniseg {

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Index c = 0; c < fan_out; ++c) {
    for (Index r = 0; r < fan_in; ++r) w(r, c) = rng.uniform(-bound, bound);
  }
  return w;
}

void init_linear(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng) {
  params.add(prefix + ".weight", xavier_uniform(in, out, rng));
  params.add(prefix + ".bias", Matrix::Zero(1, out));
}

Var linear(ParamBinder& p, Var x, const std::string& prefix) {
  return add(matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

void init_projection(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng) {
  params.add(prefix + ".weight", xavier_uniform(in, out, rng));
}

Var projection(ParamBinder& p, Var x, const std::string& prefix) {
  return matmul(x, p(prefix + ".weight"));
}

void init_layer_norm(ParameterSet& params, const std::string& prefix, Index dim) {
  params.add(prefix + ".gain", Matrix::Ones(1, dim));
  params.add(prefix + ".bias", Matrix::Zero(1, dim));
}

Var layer_norm(ParamBinder& p, Var x, const std::string& prefix) {
  return add(mul(layer_norm(x), p(prefix + ".gain")), p(prefix + ".bias"));
}

void init_mlp(ParameterSet& params, const std::string& prefix, Index in, Index hidden, Index out,
              Rng& rng) {
  init_linear(params, prefix + ".0", in, hidden, rng);
  init_linear(params, prefix + ".1", hidden, out, rng);
}

Var mlp(ParamBinder& p, Var x, const std::string& prefix) {
  return linear(p, relu(linear(p, x, prefix + ".0")), prefix + ".1");
}

}  // namespace uniseg
