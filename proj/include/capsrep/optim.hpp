#pragma once

#include <cstdint>
#include <vector>

#include "capsrep/autograd.hpp"

namespace capsrep::nd {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First/second moment state for one parameter tensor.
struct AdamMoments {
  Tensor m, v;
};

// One Adam update on a single tensor; `t` is the 1-based step count after
// this update. Returns the updated parameter.
Tensor adam_step(const Tensor& param, const Tensor& grad, AdamMoments& state,
                 std::int64_t t, const AdamConfig& cfg);

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);

  void step();       // applies grads, advances t
  void zero_grad();  // clears parameter grads
  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Serialization hooks for checkpoints.
  const std::vector<AdamMoments>& moments() const { return state_; }
  void restore(std::vector<AdamMoments> state, std::int64_t t);
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  std::vector<AdamMoments> state_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace capsrep::nd
