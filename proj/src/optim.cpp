#include "capsrep/optim.hpp"

#include <cmath>

namespace capsrep::nd {

namespace {
void validate(const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0f)) throw ParamError("adam: lr must be positive");
  if (!(cfg.beta1 >= 0.0f && cfg.beta1 < 1.0f))
    throw ParamError("adam: beta1 must be in [0, 1)");
  if (!(cfg.beta2 >= 0.0f && cfg.beta2 < 1.0f))
    throw ParamError("adam: beta2 must be in [0, 1)");
  if (!(cfg.eps > 0.0f)) throw ParamError("adam: eps must be positive");
}
}  // namespace

Tensor adam_step(const Tensor& param, const Tensor& grad, AdamMoments& state,
                 std::int64_t t, const AdamConfig& cfg) {
  validate(cfg);
  if (!param.same_shape(grad))
    throw DimError("adam: grad shape " + shape_str(grad.shape()) +
                   " does not match param " + shape_str(param.shape()));
  if (state.m.numel() == 0) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  if (!state.m.same_shape(param) || !state.v.same_shape(param))
    throw DimError("adam: moment shape does not match param " +
                   shape_str(param.shape()));
  if (t < 1) throw ParamError("adam: step index must be >= 1");

  const float b1 = cfg.beta1, b2 = cfg.beta2;
  const float bias1 =
      1.0f - std::pow(b1, static_cast<float>(t));
  const float bias2 =
      1.0f - std::pow(b2, static_cast<float>(t));
  Tensor out = param;
  float* p = out.mutable_data();
  float* m = state.m.mutable_data();
  float* v = state.v.mutable_data();
  const float* g = grad.data();
  const std::int64_t n = param.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
    const float mhat = m[i] / bias1;
    const float vhat = v[i] / bias2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  check_finite(out, "adam");
  return out;
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  validate(cfg_);
  state_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].requires_grad())
      throw ContractError("adam: parameter " + std::to_string(i) +
                          " does not require grad");
    state_[i].m = Tensor(params_[i].shape());
    state_[i].v = Tensor(params_[i].shape());
  }
}

void Adam::step() {
  ++t_;
  for (size_t i = 0; i < params_.size(); ++i) {
    const Tensor g = params_[i].grad();
    params_[i].assign_value(
        adam_step(params_[i].value(), g, state_[i], t_, cfg_));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::restore(std::vector<AdamMoments> state, std::int64_t t) {
  if (state.size() != params_.size())
    throw ContractError("adam.restore: state count mismatch");
  for (size_t i = 0; i < state.size(); ++i)
    if (!state[i].m.same_shape(params_[i].value()) ||
        !state[i].v.same_shape(params_[i].value()))
      throw DimError("adam.restore: moment shape mismatch at " +
                     std::to_string(i));
  state_ = std::move(state);
  if (t < 0) throw ParamError("adam.restore: negative step count");
  t_ = t;
}

}  // namespace capsrep::nd
