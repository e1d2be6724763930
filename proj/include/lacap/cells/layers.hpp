#pragma once

// Linear maps, recurrent cells and the MLP. Each layer only records the ids of
// its parameters; values live in the owning model's ParamStore. Every layer
// has a taped path (for training) and a plain path (for inference) that
// perform the same floating-point operations in the same order.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lacap/cells/param_store.hpp"

namespace lacap::cells {

using num::Tape;
using num::Var;
using Vec = std::vector<double>;

inline constexpr double kInitScale = 0.08;

class Linear {
 public:
  struct Bound {
    Var w;
    std::optional<Var> b;
  };

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias,
         num::Rng& rng);

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t out_dim() const noexcept { return out_; }
  bool has_bias() const noexcept { return bias_.has_value(); }
  ParamId weight_id() const noexcept { return w_; }

  Bound bind(ParamStore& store, Tape& tape) const;
  Var forward(Tape& tape, const Bound& p, Var x) const;
  Vec forward(const ParamStore& store, std::span<const double> x) const;
  /// W[:, :k] * head with k = head.size(), no bias. Together with finish()
  /// this reproduces forward() bit for bit.
  Vec partial(const ParamStore& store, std::span<const double> head) const;
  /// Continues a partial product over the trailing columns, then adds the bias.
  Vec finish(const ParamStore& store, std::span<const double> partial, std::span<const double> tail) const;

 private:
  std::size_t in_ = 0, out_ = 0;
  ParamId w_ = 0;
  std::optional<ParamId> bias_;
};

struct LstmState {
  Vec h;
  Vec c;
};

/// Single-layer LSTM, gate order (input, forget, candidate, output).
class LstmCell {
 public:
  struct Bound {
    Var wx, wh, b;
  };
  struct TapedState {
    Var h, c;
  };

  LstmCell() = default;
  LstmCell(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, num::Rng& rng);

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  static std::size_t parameter_count(std::size_t in, std::size_t hidden) {
    return 4 * (hidden * in + hidden * hidden + hidden);
  }

  Bound bind(ParamStore& store, Tape& tape) const;
  TapedState zero_state(Tape& tape) const;
  TapedState step(Tape& tape, const Bound& p, const TapedState& prev, Var x) const;

  LstmState zero_state() const { return {Vec(hidden_, 0.0), Vec(hidden_, 0.0)}; }
  LstmState step(const ParamStore& store, const LstmState& prev, std::span<const double> x) const;
  /// Recurrent half of the gate pre-activation, shared by every input word.
  Vec recurrent_gates(const ParamStore& store, std::span<const double> h) const;
  /// Input half of the gate pre-activation.
  Vec input_gates(const ParamStore& store, std::span<const double> x) const;
  /// Finishes a step from both precomputed halves.
  LstmState combine(const ParamStore& store, const LstmState& prev, std::span<const double> input,
                    std::span<const double> recurrent) const;

 private:
  std::size_t in_ = 0, hidden_ = 0;
  ParamId wx_ = 0, wh_ = 0, b_ = 0;
};

/// Single-layer GRU: h' = (1 - z) * n + z * h.
class GruCell {
 public:
  struct Bound {
    Var wx, wh, bx, bh;
  };

  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, num::Rng& rng);

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  static std::size_t parameter_count(std::size_t in, std::size_t hidden) {
    return 3 * (hidden * in + hidden * hidden + 2 * hidden);
  }
  ParamId update_bias_id() const noexcept { return bx_; }

  Bound bind(ParamStore& store, Tape& tape) const;
  Var zero_state(Tape& tape) const;
  Var step(Tape& tape, const Bound& p, Var h, Var x) const;
  Vec step(const ParamStore& store, std::span<const double> h, std::span<const double> x) const;

 private:
  std::size_t in_ = 0, hidden_ = 0;
  ParamId wx_ = 0, wh_ = 0, bx_ = 0, bh_ = 0;
};

/// Feed-forward stack with ReLU hidden layers and a linear output layer.
class Mlp {
 public:
  using Bound = std::vector<Linear::Bound>;

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, std::vector<std::size_t> dims, num::Rng& rng);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<Linear>& layers() const noexcept { return layers_; }

  Bound bind(ParamStore& store, Tape& tape) const;
  Var forward(Tape& tape, const Bound& p, Var x) const;
  Vec forward(const ParamStore& store, std::span<const double> x) const;
  /// Remaining layers given the first layer's affine output.
  Vec forward_after_first(const ParamStore& store, Vec first) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<Linear> layers_;
};

}  // namespace lacap::cells
