#include <cmath>

#include "capsrep/ops.hpp"

namespace capsrep::nd {

namespace {

struct AxisSplit {
  std::int64_t outer, mid, inner;
};

AxisSplit split_at(const Shape& s, int axis) {
  if (axis < 0 || static_cast<size_t>(axis) >= s.size())
    throw ParamError("reduce: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  AxisSplit r{1, s[static_cast<size_t>(axis)], 1};
  for (size_t i = 0; i < static_cast<size_t>(axis); ++i) r.outer *= s[i];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
    r.inner *= s[i];
  return r;
}

Shape drop_axis(const Shape& s, int axis) {
  Shape out;
  for (size_t i = 0; i < s.size(); ++i)
    if (i != static_cast<size_t>(axis)) out.push_back(s[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

Var reduce_axis(const Var& x, int axis, float out_scale, const char* name) {
  const AxisSplit sp = split_at(x.shape(), axis);
  Tensor out(drop_axis(x.shape(), axis));
  {
    std::vector<double> acc(static_cast<size_t>(out.numel()), 0.0);
    const float* px = x.value().data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t m = 0; m < sp.mid; ++m) {
        const float* row = px + (o * sp.mid + m) * sp.inner;
        double* arow = acc.data() + o * sp.inner;
        for (std::int64_t i = 0; i < sp.inner; ++i) arow[i] += row[i];
      }
    float* po = out.mutable_data();
    for (size_t i = 0; i < acc.size(); ++i)
      po[i] = static_cast<float>(acc[i] * out_scale);
  }
  auto xn = x.node();
  return make_op(std::move(out), {x}, name,
                 [xn, sp, out_scale](const Tensor& g) {
                   Tensor dx(xn->value.shape());
                   float* pd = dx.mutable_data();
                   const float* pg = g.data();
                   for (std::int64_t o = 0; o < sp.outer; ++o)
                     for (std::int64_t m = 0; m < sp.mid; ++m) {
                       float* row = pd + (o * sp.mid + m) * sp.inner;
                       const float* grow = pg + o * sp.inner;
                       for (std::int64_t i = 0; i < sp.inner; ++i)
                         row[i] = grow[i] * out_scale;
                     }
                   xn->accumulate(dx);
                 });
}

}  // namespace

Var sum(const Var& x, int axis) { return reduce_axis(x, axis, 1.0f, "sum"); }

Var mean(const Var& x, int axis) {
  const AxisSplit sp = split_at(x.shape(), axis);
  return reduce_axis(x, axis, 1.0f / static_cast<float>(sp.mid), "mean");
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  const float* px = x.value().data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += px[i];
  auto xn = x.node();
  return make_op(Tensor::scalar(static_cast<float>(acc)), {x}, "sum_all",
                 [xn](const Tensor& g) {
                   xn->accumulate(Tensor::full(xn->value.shape(), g[0]));
                 });
}

Var mean_all(const Var& x) {
  const float inv_n = 1.0f / static_cast<float>(x.numel());
  return scale(sum_all(x), inv_n);
}

Var softmax(const Var& x, int axis) {
  const AxisSplit sp = split_at(x.shape(), axis);
  if (sp.mid < 1) throw ParamError("softmax: empty axis");
  Tensor out(x.shape());
  {
    const float* px = x.value().data();
    float* po = out.mutable_data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t i = 0; i < sp.inner; ++i) {
        const std::int64_t base = o * sp.mid * sp.inner + i;
        float mx = px[base];
        for (std::int64_t m = 1; m < sp.mid; ++m) {
          const float v = px[base + m * sp.inner];
          if (v > mx) mx = v;
        }
        double denom = 0.0;
        for (std::int64_t m = 0; m < sp.mid; ++m) {
          const float e = std::exp(px[base + m * sp.inner] - mx);
          po[base + m * sp.inner] = e;
          denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (std::int64_t m = 0; m < sp.mid; ++m)
          po[base + m * sp.inner] *= inv;
      }
  }
  auto xn = x.node();
  Tensor y = out;
  return make_op(std::move(out), {x}, "softmax",
                 [xn, y, sp](const Tensor& g) {
                   Tensor dx(xn->value.shape());
                   float* pd = dx.mutable_data();
                   const float* pg = g.data();
                   const float* py = y.data();
                   for (std::int64_t o = 0; o < sp.outer; ++o)
                     for (std::int64_t i = 0; i < sp.inner; ++i) {
                       const std::int64_t base = o * sp.mid * sp.inner + i;
                       double dot = 0.0;
                       for (std::int64_t m = 0; m < sp.mid; ++m) {
                         const std::int64_t k = base + m * sp.inner;
                         dot += static_cast<double>(pg[k]) * py[k];
                       }
                       for (std::int64_t m = 0; m < sp.mid; ++m) {
                         const std::int64_t k = base + m * sp.inner;
                         pd[k] = py[k] *
                                 (pg[k] - static_cast<float>(dot));
                       }
                     }
                   xn->accumulate(dx);
                 });
}

}  // namespace capsrep::nd
