#include "lacap/cells/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace lacap::cells {

ParamId ParamStore::add(std::string name, Tensor init) {
  for (const auto& e : entries_)
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  ParamEntry e;
  e.name = std::move(name);
  e.grad = Tensor::zeros_like(init);
  e.m = Tensor::zeros_like(init);
  e.v = Tensor::zeros_like(init);
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

ParamId ParamStore::add_uniform(std::string name, num::Shape shape, double scale, num::Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform(-scale, scale);
  return add(std::move(name), std::move(t));
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParamId ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

num::Var ParamStore::bind(num::Tape& tape, ParamId id) {
  auto& e = entries_.at(id);
  e.has_grad = true;
  return tape.leaf(e.value, &e.grad);
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) {
    e.grad.fill(0.0);
    e.has_grad = false;
  }
}

void ParamStore::mark_grads() {
  for (auto& e : entries_) e.has_grad = true;
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& e : entries_)
    for (double g : e.grad.data()) s += g * g;
  return std::sqrt(s);
}

std::vector<double> ParamStore::flat_grad() const {
  std::vector<double> out;
  for (const auto& e : entries_) out.insert(out.end(), e.grad.data().begin(), e.grad.data().end());
  return out;
}

void adam_update(ParamStore& store, const AdamConfig& config) {
  for (std::size_t id = 0; id < store.size(); ++id)
    if (!store.entry(id).has_grad)
      throw std::logic_error("adam_update: missing gradient for " + store.entry(id).name);
  for (std::size_t id = 0; id < store.size(); ++id) {
    auto& e = store.entry(id);
    e.step += 1;
    const double t = static_cast<double>(e.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.m[i] = config.beta1 * e.m[i] + (1.0 - config.beta1) * g;
      e.v[i] = config.beta2 * e.v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = e.m[i] / c1;
      const double vhat = e.v[i] / c2;
      e.value[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
  store.zero_grad();
}

}  // namespace lacap::cells
