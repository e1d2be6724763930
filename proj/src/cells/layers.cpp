#include "lacap/cells/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "lacap/numcore/kernels.hpp"

namespace lacap::cells {

namespace kernels = num::kernels;

namespace {

void check_dim(std::string_view what, std::size_t got, std::size_t want) {
  if (got != want)
    throw num::ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                          std::to_string(got));
}

Vec matvec(const Tensor& w, std::span<const double> x) {
  Vec out(w.rows());
  kernels::matmul(w.data(), x, out, w.rows(), w.cols(), 1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias,
               num::Rng& rng)
    : in_(in), out_(out) {
  w_ = store.add_uniform(name + ".w", {out, in}, kInitScale, rng);
  if (bias) bias_ = store.add(name + ".b", Tensor({out}));
}

Linear::Bound Linear::bind(ParamStore& store, Tape& tape) const {
  Bound b{store.bind(tape, w_), std::nullopt};
  if (bias_) b.b = store.bind(tape, *bias_);
  return b;
}

Var Linear::forward(Tape& tape, const Bound& p, Var x) const {
  Var y = tape.matmul(p.w, x);
  return p.b ? tape.add(y, *p.b) : y;
}

Vec Linear::forward(const ParamStore& store, std::span<const double> x) const {
  check_dim("linear input", x.size(), in_);
  Vec y = matvec(store.value(w_), x);
  if (bias_) {
    const Tensor& b = store.value(*bias_);
    for (std::size_t i = 0; i < out_; ++i) y[i] += b[i];
  }
  return y;
}

Vec Linear::partial(const ParamStore& store, std::span<const double> head) const {
  if (head.size() > in_) check_dim("linear head", head.size(), in_);
  const Tensor& w = store.value(w_);
  Vec y(out_, 0.0);
  for (std::size_t r = 0; r < out_; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < head.size(); ++k) s += w[r * in_ + k] * head[k];
    y[r] = s;
  }
  return y;
}

Vec Linear::finish(const ParamStore& store, std::span<const double> partial, std::span<const double> tail) const {
  check_dim("linear partial", partial.size(), out_);
  if (tail.size() > in_) check_dim("linear tail", tail.size(), in_);
  const std::size_t offset = in_ - tail.size();
  const Tensor& w = store.value(w_);
  Vec y(out_);
  for (std::size_t r = 0; r < out_; ++r) {
    double s = partial[r];
    for (std::size_t k = 0; k < tail.size(); ++k) s += w[r * in_ + offset + k] * tail[k];
    y[r] = s;
  }
  if (bias_) {
    const Tensor& b = store.value(*bias_);
    for (std::size_t i = 0; i < out_; ++i) y[i] += b[i];
  }
  return y;
}

// ---------------------------------------------------------------- LSTM

LstmCell::LstmCell(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                   num::Rng& rng)
    : in_(in), hidden_(hidden) {
  wx_ = store.add_uniform(name + ".wx", {4 * hidden, in}, kInitScale, rng);
  wh_ = store.add_uniform(name + ".wh", {4 * hidden, hidden}, kInitScale, rng);
  Tensor b({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget gate
  b_ = store.add(name + ".b", std::move(b));
}

LstmCell::Bound LstmCell::bind(ParamStore& store, Tape& tape) const {
  return {store.bind(tape, wx_), store.bind(tape, wh_), store.bind(tape, b_)};
}

LstmCell::TapedState LstmCell::zero_state(Tape& tape) const {
  return {tape.constant(Tensor({hidden_})), tape.constant(Tensor({hidden_}))};
}

LstmCell::TapedState LstmCell::step(Tape& tape, const Bound& p, const TapedState& prev, Var x) const {
  check_dim("lstm input", tape.value(x).size(), in_);
  check_dim("lstm hidden", tape.value(prev.h).size(), hidden_);
  const std::size_t m = hidden_;
  Var gates = tape.add(tape.add(tape.matmul(p.wx, x), tape.matmul(p.wh, prev.h)), p.b);
  Var i = tape.sigmoid(tape.slice(gates, 0, {m}));
  Var f = tape.sigmoid(tape.slice(gates, m, {m}));
  Var g = tape.tanh(tape.slice(gates, 2 * m, {m}));
  Var o = tape.sigmoid(tape.slice(gates, 3 * m, {m}));
  Var c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

Vec LstmCell::recurrent_gates(const ParamStore& store, std::span<const double> h) const {
  check_dim("lstm hidden", h.size(), hidden_);
  return matvec(store.value(wh_), h);
}

Vec LstmCell::input_gates(const ParamStore& store, std::span<const double> x) const {
  check_dim("lstm input", x.size(), in_);
  return matvec(store.value(wx_), x);
}

LstmState LstmCell::combine(const ParamStore& store, const LstmState& prev, std::span<const double> gx,
                            std::span<const double> recurrent) const {
  const std::size_t m = hidden_;
  check_dim("lstm gates", gx.size(), 4 * m);
  check_dim("lstm gates", recurrent.size(), 4 * m);
  const Tensor& b = store.value(b_);
  LstmState out{Vec(m), Vec(m)};
  for (std::size_t j = 0; j < m; ++j) {
    const double gi = (gx[j] + recurrent[j]) + b[j];
    const double gf = (gx[m + j] + recurrent[m + j]) + b[m + j];
    const double gg = (gx[2 * m + j] + recurrent[2 * m + j]) + b[2 * m + j];
    const double go = (gx[3 * m + j] + recurrent[3 * m + j]) + b[3 * m + j];
    const double i = kernels::sigmoid(gi);
    const double f = kernels::sigmoid(gf);
    const double g = std::tanh(gg);
    const double o = kernels::sigmoid(go);
    out.c[j] = f * prev.c[j] + i * g;
    out.h[j] = o * std::tanh(out.c[j]);
  }
  return out;
}

LstmState LstmCell::step(const ParamStore& store, const LstmState& prev, std::span<const double> x) const {
  const Vec gx = input_gates(store, x);
  return combine(store, prev, gx, recurrent_gates(store, prev.h));
}

// ---------------------------------------------------------------- GRU

GruCell::GruCell(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, num::Rng& rng)
    : in_(in), hidden_(hidden) {
  wx_ = store.add_uniform(name + ".wx", {3 * hidden, in}, kInitScale, rng);
  wh_ = store.add_uniform(name + ".wh", {3 * hidden, hidden}, kInitScale, rng);
  bx_ = store.add(name + ".bx", Tensor({3 * hidden}));
  bh_ = store.add(name + ".bh", Tensor({3 * hidden}));
}

GruCell::Bound GruCell::bind(ParamStore& store, Tape& tape) const {
  return {store.bind(tape, wx_), store.bind(tape, wh_), store.bind(tape, bx_), store.bind(tape, bh_)};
}

Var GruCell::zero_state(Tape& tape) const { return tape.constant(Tensor({hidden_})); }

// Gate order (reset, update, candidate).
Var GruCell::step(Tape& tape, const Bound& p, Var h, Var x) const {
  check_dim("gru input", tape.value(x).size(), in_);
  check_dim("gru hidden", tape.value(h).size(), hidden_);
  const std::size_t m = hidden_;
  Var gx = tape.add(tape.matmul(p.wx, x), p.bx);
  Var gh = tape.add(tape.matmul(p.wh, h), p.bh);
  Var r = tape.sigmoid(tape.add(tape.slice(gx, 0, {m}), tape.slice(gh, 0, {m})));
  Var z = tape.sigmoid(tape.add(tape.slice(gx, m, {m}), tape.slice(gh, m, {m})));
  Var n = tape.tanh(tape.add(tape.slice(gx, 2 * m, {m}), tape.mul(r, tape.slice(gh, 2 * m, {m}))));
  return tape.add(n, tape.mul(z, tape.sub(h, n)));
}

Vec GruCell::step(const ParamStore& store, std::span<const double> h, std::span<const double> x) const {
  check_dim("gru input", x.size(), in_);
  check_dim("gru hidden", h.size(), hidden_);
  const std::size_t m = hidden_;
  Vec gx = matvec(store.value(wx_), x);
  Vec gh = matvec(store.value(wh_), h);
  const Tensor& bx = store.value(bx_);
  const Tensor& bh = store.value(bh_);
  for (std::size_t j = 0; j < 3 * m; ++j) {
    gx[j] += bx[j];
    gh[j] += bh[j];
  }
  Vec out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double r = kernels::sigmoid(gx[j] + gh[j]);
    const double z = kernels::sigmoid(gx[m + j] + gh[m + j]);
    const double n = std::tanh(gx[2 * m + j] + r * gh[2 * m + j]);
    out[j] = n + z * (h[j] - n);
  }
  return out;
}

// ---------------------------------------------------------------- MLP

Mlp::Mlp(ParamStore& store, const std::string& name, std::vector<std::size_t> dims, num::Rng& rng)
    : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l)
    layers_.emplace_back(store, name + ".l" + std::to_string(l), dims_[l], dims_[l + 1], true, rng);
}

Mlp::Bound Mlp::bind(ParamStore& store, Tape& tape) const {
  Bound out;
  for (const auto& l : layers_) out.push_back(l.bind(store, tape));
  return out;
}

Var Mlp::forward(Tape& tape, const Bound& p, Var x) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = layers_[l].forward(tape, p[l], x);
    if (l + 1 < layers_.size()) x = tape.relu(x);
  }
  return x;
}

Vec Mlp::forward(const ParamStore& store, std::span<const double> x) const {
  return forward_after_first(store, layers_.front().forward(store, x));
}

Vec Mlp::forward_after_first(const ParamStore& store, Vec cur) const {
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    for (auto& v : cur) v = v > 0.0 ? v : 0.0;
    cur = layers_[l].forward(store, cur);
  }
  return cur;
}

}  // namespace lacap::cells
