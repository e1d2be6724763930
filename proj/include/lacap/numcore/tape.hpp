#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lacap/numcore/tensor.hpp"

namespace lacap::num {

enum class OpKind {
  leaf,
  constant,
  matmul,
  add,
  sub,
  mul,
  tanh,
  sigmoid,
  concat,
  slice,
  sum,
  scale,
  relu,  // hinge max(0, x); subgradient 0 at the kink
  dot,
  l2norm,  // x / ||x||
  softmax_xent,
};

std::string_view op_name(OpKind kind);

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Define-by-run reverse-mode differentiation record. Nodes are appended in
/// evaluation order, so inputs always precede their consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Leaf viewing an external tensor that must outlive the tape. Gradients
  /// reaching it are added into `grad_sink` (if non-null) by backward().
  Var leaf(const Tensor& value, Tensor* grad_sink = nullptr);
  /// Leaf owning its value; gradient is readable through grad().
  Var variable(Tensor value);
  Var constant(Tensor value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var concat(std::span<const Var> parts);
  Var concat(Var a, Var b);
  /// Contiguous range of the flattened input, reshaped to `shape`.
  Var slice(Var a, std::size_t offset, Shape shape);
  /// Row `r` of a matrix as a vector.
  Var row(Var a, std::size_t r);
  Var sum(Var a);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var dot(Var a, Var b);
  Var l2norm(Var a);

  struct Xent {
    Var loss;
    Tensor probs;
  };
  /// Cross-entropy of a softmax over `logits`; entries with mask 0 get zero
  /// probability. An empty mask means every entry is allowed.
  Xent softmax_xent(Var logits, std::size_t target, std::span<const unsigned char> mask = {});

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() root with respect to `v`.
  const Tensor& grad(Var v) const;
  OpKind kind(Var v) const { return nodes_[v.id].kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar root. Visits every node once.
  void backward(Var root);

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    std::size_t in0 = 0;
    std::size_t in1 = 0;
    std::vector<std::size_t> inputs;  // concat only
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* grad_sink = nullptr;
    double saved = 0.0;  // scale factor, norm
    std::size_t offset = 0;  // slice offset, xent target
    Tensor saved_tensor;  // softmax probabilities
  };

  Var push(Node node, std::string_view what);
  const Tensor& val(std::size_t id) const;
  Tensor& grad_slot(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace lacap::num
