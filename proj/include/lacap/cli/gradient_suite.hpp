#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lacap::app {

struct GradientSuiteResult {
  std::string model;
  double max_rel_error = 0.0;
  std::size_t checks = 0;
};

/// Finite-difference checks of every trainable loss on small randomly
/// initialized models, one check per seed and model.
std::vector<GradientSuiteResult> run_gradient_suites(std::size_t seeds = 20, std::uint64_t first_seed = 0);

}  // namespace lacap::app
