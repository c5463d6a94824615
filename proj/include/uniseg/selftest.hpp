#pragma once

#include "uniseg/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uniseg {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Quick invariant suite: config defaults, assignment optimality, closed-form
// losses, metric minis, prompt isolation, gradients and file round trips.
std::vector<SelfTestResult> run_selftest();

// Finite-difference checks of every loss term and of the full decoder
// forward at small shapes (m <= 8, K_v = K_t = 2, d_in = 8).
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, std::size_t max_entries = 16);

}  // namespace uniseg
