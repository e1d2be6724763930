#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "lacap/numcore/rng.hpp"
#include "lacap/numcore/tape.hpp"
#include "lacap/numcore/tensor.hpp"

namespace lacap::cells {

using num::Tensor;

using ParamId = std::size_t;

struct ParamEntry {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor v;  // Adam second moment
  std::size_t step = 0;
  bool has_grad = false;
};

/// Named dense parameters of one model, with gradient and Adam slots.
class ParamStore {
 public:
  /// Registers a parameter. Names must be unique.
  ParamId add(std::string name, Tensor init);
  /// Registers a parameter drawn uniformly from [-scale, scale].
  ParamId add_uniform(std::string name, num::Shape shape, double scale, num::Rng& rng);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const noexcept;

  ParamEntry& entry(ParamId id) { return entries_.at(id); }
  const ParamEntry& entry(ParamId id) const { return entries_.at(id); }
  const Tensor& value(ParamId id) const { return entries_.at(id).value; }
  Tensor& mutable_value(ParamId id) { return entries_.at(id).value; }
  /// Throws std::out_of_range when `name` is unknown.
  ParamId find(std::string_view name) const;
  const std::vector<ParamEntry>& entries() const noexcept { return entries_; }

  /// Leaf on `tape` whose gradient lands in this store on backward().
  num::Var bind(num::Tape& tape, ParamId id);

  void zero_grad();
  /// Marks every entry as carrying a (possibly zero) gradient.
  void mark_grads();
  /// L2 norm over all gradient slots.
  double grad_norm() const;
  /// Flat copy of all gradients in registration order.
  std::vector<double> flat_grad() const;

 private:
  std::vector<ParamEntry> entries_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam step on every entry, then clears gradients. Throws
/// std::logic_error if any entry has no gradient.
void adam_update(ParamStore& store, const AdamConfig& config);

}  // namespace lacap::cells
