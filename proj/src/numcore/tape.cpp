#include "lacap/numcore/tape.hpp"

#include <cmath>
#include <string>

#include "lacap/numcore/kernels.hpp"

namespace lacap::num {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::sum: return "sum";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::dot: return "dot";
    case OpKind::l2norm: return "l2norm";
    case OpKind::softmax_xent: return "softmax_xent";
  }
  return "?";
}

namespace {

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

const Tensor& Tape::val(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Tensor& Tape::value(Var v) const { return val(v.id); }

Tensor& Tape::grad_slot(std::size_t id) {
  if (grads_[id].size() == 0) grads_[id] = Tensor::zeros_like(val(id));
  return grads_[id];
}

const Tensor& Tape::grad(Var v) const { return grads_.at(v.id); }

Var Tape::push(Node node, std::string_view what) {
  const Tensor& out = node.external ? *node.external : node.value;
  if (!out.all_finite()) throw NumericError(std::string(what) + ": non-finite value produced");
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(const Tensor& value, Tensor* grad_sink) {
  Node n;
  n.kind = OpKind::leaf;
  n.external = &value;
  n.grad_sink = grad_sink;
  return push(std::move(n), "leaf");
}

Var Tape::variable(Tensor value) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  return push(std::move(n), "variable");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::constant;
  n.value = std::move(value);
  return push(std::move(n), "constant");
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.shape()[1] != B.shape()[0])
    mismatch("matmul", A.shape(), B.shape());
  const std::size_t r = A.shape()[0], k = A.shape()[1];
  const std::size_t c = B.rank() == 2 ? B.shape()[1] : 1;
  Node n;
  n.kind = OpKind::matmul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = B.rank() == 2 ? Tensor({r, c}) : Tensor({r});
  kernels::matmul(A.data(), B.data(), n.value.data(), r, k, c);
  return push(std::move(n), "matmul");
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (A.shape() != B.shape()) mismatch("add", A.shape(), B.shape());
  Node n;
  n.kind = OpKind::add;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = A;
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] += B[i];
  return push(std::move(n), "add");
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (A.shape() != B.shape()) mismatch("sub", A.shape(), B.shape());
  Node n;
  n.kind = OpKind::sub;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = A;
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] -= B[i];
  return push(std::move(n), "sub");
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (A.shape() != B.shape()) mismatch("mul", A.shape(), B.shape());
  Node n;
  n.kind = OpKind::mul;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = A;
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] *= B[i];
  return push(std::move(n), "mul");
}

Var Tape::tanh(Var a) {
  Node n;
  n.kind = OpKind::tanh;
  n.in0 = a.id;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = std::tanh(x);
  return push(std::move(n), "tanh");
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.kind = OpKind::sigmoid;
  n.in0 = a.id;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = kernels::sigmoid(x);
  return push(std::move(n), "sigmoid");
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<double> out;
  Node n;
  n.kind = OpKind::concat;
  for (Var p : parts) {
    const Tensor& t = val(p.id);
    if (t.rank() > 1) throw ShapeError("concat: expects vectors, got " + shape_string(t.shape()));
    out.insert(out.end(), t.data().begin(), t.data().end());
    n.inputs.push_back(p.id);
  }
  n.value = Tensor::vector(std::move(out));
  return push(std::move(n), "concat");
}

Var Tape::concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

Var Tape::slice(Var a, std::size_t offset, Shape shape) {
  const Tensor& A = val(a.id);
  const std::size_t len = shape_size(shape);
  if (offset + len > A.size())
    throw ShapeError("slice: range [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                     ") exceeds input " + shape_string(A.shape()));
  Node n;
  n.kind = OpKind::slice;
  n.in0 = a.id;
  n.offset = offset;
  n.value = Tensor(std::move(shape), std::vector<double>(A.data().begin() + static_cast<long>(offset),
                                                         A.data().begin() + static_cast<long>(offset + len)));
  return push(std::move(n), "slice");
}

Var Tape::row(Var a, std::size_t r) {
  const Tensor& A = val(a.id);
  if (A.rank() != 2 || r >= A.shape()[0])
    throw ShapeError("row " + std::to_string(r) + " out of range for " + shape_string(A.shape()));
  return slice(a, r * A.shape()[1], {A.shape()[1]});
}

Var Tape::sum(Var a) {
  Node n;
  n.kind = OpKind::sum;
  n.in0 = a.id;
  double s = 0.0;
  for (double x : val(a.id).data()) s += x;
  n.value = Tensor::scalar(s);
  return push(std::move(n), "sum");
}

Var Tape::scale(Var a, double factor) {
  Node n;
  n.kind = OpKind::scale;
  n.in0 = a.id;
  n.saved = factor;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x *= factor;
  return push(std::move(n), "scale");
}

Var Tape::relu(Var a) {
  Node n;
  n.kind = OpKind::relu;
  n.in0 = a.id;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = x > 0.0 ? x : 0.0;
  return push(std::move(n), "relu");
}

Var Tape::dot(Var a, Var b) {
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  if (A.rank() != 1 || A.shape() != B.shape()) mismatch("dot", A.shape(), B.shape());
  Node n;
  n.kind = OpKind::dot;
  n.in0 = a.id;
  n.in1 = b.id;
  n.value = Tensor::scalar(kernels::dot(A.data(), B.data()));
  return push(std::move(n), "dot");
}

Var Tape::l2norm(Var a) {
  const Tensor& A = val(a.id);
  const double norm = std::sqrt(kernels::dot(A.data(), A.data()));
  if (!(norm > 0.0)) throw NumericError("l2norm: zero-norm input");
  Node n;
  n.kind = OpKind::l2norm;
  n.in0 = a.id;
  n.saved = norm;
  n.value = A;
  for (auto& x : n.value.data()) x /= norm;
  return push(std::move(n), "l2norm");
}

Tape::Xent Tape::softmax_xent(Var logits, std::size_t target, std::span<const unsigned char> mask) {
  const Tensor& L = val(logits.id);
  if (L.rank() != 1) throw ShapeError("softmax_xent: logits must be a vector, got " + shape_string(L.shape()));
  if (target >= L.size())
    throw std::out_of_range("softmax_xent: target " + std::to_string(target) + " outside vocabulary of " +
                            std::to_string(L.size()));
  if (!mask.empty() && mask.size() != L.size())
    throw ShapeError("softmax_xent: mask length " + std::to_string(mask.size()) + " vs logits " +
                     shape_string(L.shape()));
  if (!mask.empty() && mask[target] == 0)
    throw std::out_of_range("softmax_xent: target " + std::to_string(target) + " is masked");
  Tensor logp(L.shape());
  kernels::log_softmax(L.data(), mask, logp.data());
  Tensor probs(L.shape());
  for (std::size_t i = 0; i < L.size(); ++i) probs[i] = std::exp(logp[i]);
  Node n;
  n.kind = OpKind::softmax_xent;
  n.in0 = logits.id;
  n.offset = target;
  n.saved_tensor = probs;
  n.value = Tensor::scalar(-logp[target]);
  return {push(std::move(n), "softmax_xent"), std::move(probs)};
}

void Tape::backward(Var root) {
  if (root.id >= nodes_.size()) throw std::out_of_range("backward: root not on this tape");
  if (val(root.id).size() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_string(val(root.id).shape()));
  grads_.assign(nodes_.size(), Tensor{});
  grad_slot(root.id).fill(1.0);

  for (std::size_t idx = root.id + 1; idx-- > 0;) {
    if (grads_[idx].size() == 0) continue;
    Node& n = nodes_[idx];
    const Tensor& g = grads_[idx];
    switch (n.kind) {
      case OpKind::leaf:
        if (n.grad_sink) {
          Tensor& sink = *n.grad_sink;
          if (sink.size() == 0) sink = Tensor::zeros_like(g);
          for (std::size_t i = 0; i < g.size(); ++i) sink[i] += g[i];
        }
        break;
      case OpKind::constant:
        break;
      case OpKind::matmul: {
        const Tensor& A = val(n.in0);
        const Tensor& B = val(n.in1);
        const std::size_t r = A.shape()[0], k = A.shape()[1];
        const std::size_t c = B.rank() == 2 ? B.shape()[1] : 1;
        kernels::matmul_acc_bt(g.data(), B.data(), grad_slot(n.in0).data(), r, k, c);
        kernels::matmul_acc_at(A.data(), g.data(), grad_slot(n.in1).data(), r, k, c);
        break;
      }
      case OpKind::add: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Tensor& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
      }
      case OpKind::sub: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Tensor& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
      }
      case OpKind::mul: {
        const Tensor& A = val(n.in0);
        const Tensor& B = val(n.in1);
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
        Tensor& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
        break;
      }
      case OpKind::tanh: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case OpKind::sigmoid: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (std::size_t in : n.inputs) {
          Tensor& gi = grad_slot(in);
          for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[off + i];
          off += gi.size();
        }
        break;
      }
      case OpKind::slice: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[n.offset + i] += g[i];
        break;
      }
      case OpKind::sum: {
        Tensor& ga = grad_slot(n.in0);
        const double gs = g[0];
        for (auto& x : ga.data()) x += gs;
        break;
      }
      case OpKind::scale: {
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.saved;
        break;
      }
      case OpKind::relu: {
        const Tensor& A = val(n.in0);
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (A[i] > 0.0) ga[i] += g[i];
        break;
      }
      case OpKind::dot: {
        const Tensor& A = val(n.in0);
        const Tensor& B = val(n.in1);
        const double gs = g[0];
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < A.size(); ++i) ga[i] += gs * B[i];
        Tensor& gb = grad_slot(n.in1);
        for (std::size_t i = 0; i < B.size(); ++i) gb[i] += gs * A[i];
        break;
      }
      case OpKind::l2norm: {
        const Tensor& y = n.value;
        const double yg = kernels::dot(y.data(), g.data());
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < y.size(); ++i) ga[i] += (g[i] - y[i] * yg) / n.saved;
        break;
      }
      case OpKind::softmax_xent: {
        const Tensor& p = n.saved_tensor;
        const double gs = g[0];
        Tensor& ga = grad_slot(n.in0);
        for (std::size_t i = 0; i < p.size(); ++i) ga[i] += gs * p[i];
        ga[n.offset] -= gs;
        break;
      }
    }
  }
}

}  // namespace lacap::num
