#pragma once

#include "uniseg/autodiff.hpp"
#include "uniseg/rng.hpp"

#include <string>

namespace uniseg {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng);

// `<prefix>.weight` (in x out) and `<prefix>.bias` (1 x out).
void init_linear(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng);
Var linear(ParamBinder& p, Var x, const std::string& prefix);

// Weight only.
void init_projection(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng);
Var projection(ParamBinder& p, Var x, const std::string& prefix);

// `<prefix>.gain` ones, `<prefix>.bias` zeros, both 1 x dim.
void init_layer_norm(ParameterSet& params, const std::string& prefix, Index dim);
Var layer_norm(ParamBinder& p, Var x, const std::string& prefix);

// linear -> relu -> linear, named `<prefix>.0` and `<prefix>.1`.
void init_mlp(ParameterSet& params, const std::string& prefix, Index in, Index hidden, Index out,
              Rng& rng);
Var mlp(ParamBinder& p, Var x, const std::string& prefix);

}  // namespace uniseg
