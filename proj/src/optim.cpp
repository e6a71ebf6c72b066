#include "atgan/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atgan {

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

static std::vector<float>& moment_buffer(std::map<std::string, std::vector<float>>& store,
                                         const std::string& name, std::size_t n) {
  auto [it, inserted] = store.try_emplace(name);
  if (inserted) it->second.assign(n, 0.0f);
  if (it->second.size() != n) {
    throw std::invalid_argument("optimizer state for '" + name + "' has size " +
                                std::to_string(it->second.size()) + ", parameter has " + std::to_string(n));
  }
  return it->second;
}

void adam_step(const ParamList& params, AdamState& state) {
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::size_t n = t.size();
    auto& m = moment_buffer(state.m, p.name, n);
    auto& v = moment_buffer(state.v, p.name, n);
    const bool has_grad = t.grad_allocated();
    auto& w = t.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = has_grad ? static_cast<double>(t.grad()[i]) : 0.0;
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<float>(w[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

void rmsprop_step(const ParamList& params, RmspropState& state) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::size_t n = t.size();
    auto& sq = moment_buffer(state.sq, p.name, n);
    const bool has_grad = t.grad_allocated();
    auto& w = t.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = has_grad ? static_cast<double>(t.grad()[i]) : 0.0;
      const double vi = state.rho * sq[i] + (1.0 - state.rho) * g * g;
      sq[i] = static_cast<float>(vi);
      w[i] = static_cast<float>(w[i] - state.lr * g / (std::sqrt(vi) + state.eps));
    }
  }
}

void clip_params(const ParamList& params, float bound) {
  if (!(bound > 0.0f)) {
    throw std::invalid_argument("clip_params: bound must be positive, got " + std::to_string(bound));
  }
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (auto& w : t.values()) w = std::clamp(w, -bound, bound);
  }
}

}  // namespace atgan
