#pragma once

#include <map>
#include <string>
#include <vector>

#include "atgan/tensor.hpp"

namespace atgan {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

void zero_grads(const ParamList& params);

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// created on first use. Update arithmetic runs in double, stored in float32.
struct AdamState {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  long long step = 0;
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
};

void adam_step(const ParamList& params, AdamState& state);

/// RMSprop: v <- rho*v + (1-rho)*g^2; w <- w - lr*g/(sqrt(v)+eps).
struct RmspropState {
  float lr = 5e-5f;
  float rho = 0.9f;
  float eps = 1e-8f;
  std::map<std::string, std::vector<float>> sq;
};

void rmsprop_step(const ParamList& params, RmspropState& state);

/// Clamps every element of every parameter into [-bound, bound].
void clip_params(const ParamList& params, float bound);

}  // namespace atgan
