#include "lacap/cells/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace lacap::cells {

namespace {

double forward_value(ParamStore& store, const LossBuilder& build) {
  num::Tape tape;
  return tape.value(build(tape, store)).item();
}

}  // namespace

GradCheckResult gradcheck(ParamStore& store, const LossBuilder& build, double eps,
                          std::optional<std::size_t> max_coords, std::uint64_t seed) {
  store.zero_grad();
  {
    num::Tape tape;
    tape.backward(build(tape, store));
  }

  std::vector<std::pair<ParamId, std::size_t>> coords;
  for (ParamId id = 0; id < store.size(); ++id)
    for (std::size_t i = 0; i < store.value(id).size(); ++i) coords.emplace_back(id, i);
  if (max_coords && *max_coords < coords.size()) {
    num::Rng rng(seed);
    for (std::size_t i = 0; i < *max_coords; ++i) std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    coords.resize(*max_coords);
  }

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (auto [id, i] : coords) {
    Tensor& w = store.mutable_value(id);
    const double orig = w[i];
    w[i] = orig + eps;
    const double fp = forward_value(store, build);
    w[i] = orig - eps;
    const double fm = forward_value(store, build);
    w[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = store.entry(id).grad[i];
    diff2 += (analytic - numeric) * (analytic - numeric);
    a2 += analytic * analytic;
    n2 += numeric * numeric;
  }
  store.zero_grad();

  GradCheckResult r;
  r.coordinates = coords.size();
  r.analytic_norm = std::sqrt(a2);
  r.numeric_norm = std::sqrt(n2);
  const double denom = std::max(r.analytic_norm, r.numeric_norm);
  r.rel_error = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
  return r;
}

}  // namespace lacap::cells
