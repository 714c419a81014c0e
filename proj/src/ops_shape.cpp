#include <numeric>

#include "capsrep/ops.hpp"

namespace capsrep::nd {

Var reshape(const Var& x, Shape new_shape) {
  Tensor out = x.value().reshaped(new_shape);  // validates element count
  auto xn = x.node();
  return make_op(std::move(out), {x}, "reshape", [xn](const Tensor& g) {
    xn->accumulate(g.reshaped(xn->value.shape()));
  });
}

Var transpose(const Var& x) {
  if (x.shape().size() != 2)
    throw DimError("transpose: expected 2-d, got shape " +
                   shape_str(x.shape()));
  return permute(x, {1, 0});
}

Var permute(const Var& x, std::vector<int> dims) {
  const Shape& in_shape = x.shape();
  const size_t nd = in_shape.size();
  if (dims.size() != nd)
    throw ParamError("permute: got " + std::to_string(dims.size()) +
                     " axes for shape " + shape_str(in_shape));
  std::vector<bool> seen(nd, false);
  for (int d : dims) {
    if (d < 0 || static_cast<size_t>(d) >= nd || seen[static_cast<size_t>(d)])
      throw ParamError("permute: invalid axis list for shape " +
                       shape_str(in_shape));
    seen[static_cast<size_t>(d)] = true;
  }

  auto apply = [](const Tensor& t, const std::vector<int>& perm) {
    const Shape& s = t.shape();
    const size_t n = s.size();
    Shape out_shape(n);
    for (size_t i = 0; i < n; ++i)
      out_shape[i] = s[static_cast<size_t>(perm[i])];
    Tensor out(out_shape);
    const auto in_strides = t.strides();
    std::vector<std::int64_t> step(n);
    for (size_t i = 0; i < n; ++i)
      step[i] = in_strides[static_cast<size_t>(perm[i])];
    float* po = out.mutable_data();
    const float* pi = t.data();
    std::vector<std::int64_t> idx(n, 0);
    std::int64_t off = 0;
    const std::int64_t total = t.numel();
    for (std::int64_t flat = 0; flat < total; ++flat) {
      po[flat] = pi[off];
      for (size_t d = n; d-- > 0;) {
        ++idx[d];
        off += step[d];
        if (idx[d] < out_shape[d]) break;
        idx[d] = 0;
        off -= step[d] * out_shape[d];
      }
    }
    return out;
  };

  std::vector<int> inverse(nd);
  for (size_t i = 0; i < nd; ++i) inverse[static_cast<size_t>(dims[i])] = static_cast<int>(i);

  Tensor out = apply(x.value(), dims);
  auto xn = x.node();
  return make_op(std::move(out), {x}, "permute",
                 [xn, apply, inverse](const Tensor& g) {
                   xn->accumulate(apply(g, inverse));
                 });
}

Var slice_cols(const Var& x, std::int64_t start, std::int64_t count) {
  if (x.shape().size() != 2)
    throw DimError("slice_cols: expected 2-d, got shape " +
                   shape_str(x.shape()));
  const std::int64_t rows = x.shape()[0], cols = x.shape()[1];
  if (count <= 0 || start < 0 || start + count > cols)
    throw ParamError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(cols) + " columns");
  Tensor out({rows, count});
  float* po = out.mutable_data();
  const float* pi = x.value().data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < count; ++c)
      po[r * count + c] = pi[r * cols + start + c];
  auto xn = x.node();
  return make_op(std::move(out), {x}, "slice_cols",
                 [xn, start, count, rows, cols](const Tensor& g) {
                   Tensor dx({rows, cols});
                   float* pd = dx.mutable_data();
                   const float* pg = g.data();
                   for (std::int64_t r = 0; r < rows; ++r)
                     for (std::int64_t c = 0; c < count; ++c)
                       pd[r * cols + start + c] = pg[r * count + c];
                   xn->accumulate(dx);
                 });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw DimError("concat_cols: expected 2-d inputs, got " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.shape()[0] != b.shape()[0])
    throw DimError("concat_cols: row mismatch between " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t rows = a.shape()[0];
  const std::int64_t ca = a.shape()[1], cb = b.shape()[1];
  Tensor out({rows, ca + cb});
  float* po = out.mutable_data();
  const float* pa = a.value().data();
  const float* pb = b.value().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < ca; ++c) po[r * (ca + cb) + c] = pa[r * ca + c];
    for (std::int64_t c = 0; c < cb; ++c)
      po[r * (ca + cb) + ca + c] = pb[r * cb + c];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, "concat_cols",
                 [an, bn, rows, ca, cb](const Tensor& g) {
                   const float* pg = g.data();
                   if (an->requires_grad) {
                     Tensor da({rows, ca});
                     float* pd = da.mutable_data();
                     for (std::int64_t r = 0; r < rows; ++r)
                       for (std::int64_t c = 0; c < ca; ++c)
                         pd[r * ca + c] = pg[r * (ca + cb) + c];
                     an->accumulate(da);
                   }
                   if (bn->requires_grad) {
                     Tensor db({rows, cb});
                     float* pd = db.mutable_data();
                     for (std::int64_t r = 0; r < rows; ++r)
                       for (std::int64_t c = 0; c < cb; ++c)
                         pd[r * cb + c] = pg[r * (ca + cb) + ca + c];
                     bn->accumulate(db);
                   }
                 });
}

}  // namespace capsrep::nd
