#include <cmath>

#include "capsrep/ops.hpp"

namespace capsrep::nd {

namespace {

template <typename FwdF>
Tensor map_unary(const Tensor& x, FwdF f) {
  Tensor out(x.shape());
  float* po = out.mutable_data();
  const float* px = x.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
  return out;
}

// dfn(g_i, x_i, y_i) -> gradient contribution w.r.t. x_i.
template <typename DF>
std::function<void(const Tensor&)> unary_backward(const Var& x, Tensor y,
                                                  DF dfn) {
  auto xn = x.node();
  return [xn, y = std::move(y), dfn](const Tensor& g) {
    Tensor dx(xn->value.shape());
    float* pd = dx.mutable_data();
    const float* pg = g.data();
    const float* px = xn->value.data();
    const float* py = y.data();
    const std::int64_t n = dx.numel();
    for (std::int64_t i = 0; i < n; ++i) pd[i] = dfn(pg[i], px[i], py[i]);
    xn->accumulate(dx);
  };
}

template <typename FwdF, typename DF>
Var unary_op(const Var& x, const char* name, FwdF f, DF dfn) {
  Tensor out = map_unary(x.value(), f);
  return make_op(out, {x}, name, unary_backward(x, out, dfn));
}

}  // namespace

Var relu(const Var& x) {
  return unary_op(
      x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float g, float v, float) { return v > 0.0f ? g : 0.0f; });
}

Var sigmoid(const Var& x) {
  return unary_op(
      x, "sigmoid",
      [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float g, float, float y) { return g * y * (1.0f - y); });
}

Var exp(const Var& x) {
  return unary_op(
      x, "exp", [](float v) { return std::exp(v); },
      [](float g, float, float y) { return g * y; });
}

Var log(const Var& x) {
  return unary_op(
      x, "log", [](float v) { return std::log(v); },
      [](float g, float v, float) { return g / v; });
}

Var sqrt(const Var& x) {
  // The backward denominator is floored so a gradient at exactly-zero input
  // stays finite (hinge regularizers evaluate sqrt at Var = 0).
  return unary_op(
      x, "sqrt", [](float v) { return std::sqrt(v); },
      [](float g, float, float y) {
        const float d = y > 1e-4f ? y : 1e-4f;
        return 0.5f * g / d;
      });
}

Var square(const Var& x) {
  return unary_op(
      x, "square", [](float v) { return v * v; },
      [](float g, float v, float) { return 2.0f * g * v; });
}

Var clamp_min(const Var& x, float lo) {
  if (!std::isfinite(lo)) throw ParamError("clamp_min: non-finite bound");
  return unary_op(
      x, "clamp_min", [lo](float v) { return v > lo ? v : lo; },
      [lo](float g, float v, float) { return v > lo ? g : 0.0f; });
}

Var affine(const Var& x, float a, float b) {
  if (!std::isfinite(a) || !std::isfinite(b))
    throw ParamError("affine: non-finite coefficient");
  return unary_op(
      x, "affine", [a, b](float v) { return a * v + b; },
      [a](float g, float, float) { return a * g; });
}

Var neg(const Var& x) { return affine(x, -1.0f, 0.0f); }

}  // namespace capsrep::nd
