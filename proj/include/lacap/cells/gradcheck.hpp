#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

#include "lacap/cells/param_store.hpp"

namespace lacap::cells {

struct GradCheckResult {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  std::size_t coordinates = 0;
};

/// Builds a scalar loss on the given tape from the store's parameters.
using LossBuilder = std::function<num::Var(num::Tape&, ParamStore&)>;

/// Compares backward() against central finite differences of the forward
/// value. With `max_coords` set, a seeded subset of coordinates is checked.
GradCheckResult gradcheck(ParamStore& store, const LossBuilder& build, double eps = 1e-5,
                          std::optional<std::size_t> max_coords = std::nullopt, std::uint64_t seed = 0);

}  // namespace lacap::cells
