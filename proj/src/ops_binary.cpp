#include "capsrep/ops.hpp"
#include "bc_plan.hpp"

namespace capsrep::nd {

namespace {

using detail::BcPlan;
using detail::bc_for_each_run;
using detail::make_bc_plan;

template <typename F>
Tensor bc_apply(const Tensor& a, const Tensor& b, const BcPlan& plan, F f) {
  Tensor out(plan.out_shape);
  float* po = out.mutable_data();
  const float* pa = a.data();
  const float* pb = b.data();
  bc_for_each_run(plan, [&](std::int64_t oa, std::int64_t ob, std::int64_t oo,
                            std::int64_t len, std::int64_t ia,
                            std::int64_t ib) {
    for (std::int64_t i = 0; i < len; ++i)
      po[oo + i] = f(pa[oa + i * ia], pb[ob + i * ib]);
  });
  return out;
}

// Accumulates f(g, a, b) into the gradient of one operand, reducing over its
// broadcast axes (inner broadcast runs are pre-summed in double).
template <typename F>
void bc_accum(const Tensor& g, const Tensor& a, const Tensor& b,
              const BcPlan& plan, bool into_a, F f, Tensor& dst) {
  float* pd = dst.mutable_data();
  const float* pg = g.data();
  const float* pa = a.data();
  const float* pb = b.data();
  bc_for_each_run(plan, [&](std::int64_t oa, std::int64_t ob, std::int64_t oo,
                            std::int64_t len, std::int64_t ia,
                            std::int64_t ib) {
    const std::int64_t target_off = into_a ? oa : ob;
    const std::int64_t target_stride = into_a ? ia : ib;
    if (target_stride == 0) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < len; ++i)
        acc += f(pg[oo + i], pa[oa + i * ia], pb[ob + i * ib]);
      pd[target_off] += static_cast<float>(acc);
    } else {
      for (std::int64_t i = 0; i < len; ++i)
        pd[target_off + i * target_stride] +=
            f(pg[oo + i], pa[oa + i * ia], pb[ob + i * ib]);
    }
  });
}

template <typename FwdF, typename DaF, typename DbF>
Var binary_op(const Var& a, const Var& b, const char* name, FwdF fwd, DaF da,
              DbF db) {
  const BcPlan plan = make_bc_plan(a.shape(), b.shape());
  Tensor out = bc_apply(a.value(), b.value(), plan, fwd);
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, name,
                 [an, bn, plan, da, db](const Tensor& g) {
                   if (an->requires_grad) {
                     Tensor acc(an->value.shape());
                     bc_accum(g, an->value, bn->value, plan, true, da, acc);
                     an->accumulate(acc);
                   }
                   if (bn->requires_grad) {
                     Tensor acc(bn->value.shape());
                     bc_accum(g, an->value, bn->value, plan, false, db, acc);
                     bn->accumulate(acc);
                   }
                 });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, "add", [](float x, float y) { return x + y; },
      [](float g, float, float) { return g; },
      [](float g, float, float) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, "sub", [](float x, float y) { return x - y; },
      [](float g, float, float) { return g; },
      [](float g, float, float) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, "mul", [](float x, float y) { return x * y; },
      [](float g, float, float y) { return g * y; },
      [](float g, float x, float) { return g * x; });
}

Var div(const Var& a, const Var& b) {
  return binary_op(
      a, b, "div", [](float x, float y) { return x / y; },
      [](float g, float, float y) { return g / y; },
      [](float g, float x, float y) { return -g * x / (y * y); });
}

}  // namespace capsrep::nd
