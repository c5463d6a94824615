#pragma once

#include "uniseg/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uniseg {

inline constexpr int kCheckpointFormatVersion = 1;

struct OptimizerState {
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  Model model;
  OptimizerState optimizer;
  int epoch = 0;
  double best_overall = -1.0;  // -1 before the first evaluation
};

// JSON with every double written in shortest round-trip form.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws ParseError (with byte offset) or UnsupportedVersionError.
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Exact equality of parameters (names, order and values).
bool same_parameters(const ParameterSet& a, const ParameterSet& b);

}  // namespace uniseg
