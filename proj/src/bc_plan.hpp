#pragma once

// Internal broadcasting machinery shared by the elementwise kernels.

#include <cstdint>
#include <vector>

#include "capsrep/tensor.hpp"

namespace capsrep::nd::detail {

// Collapsed iteration plan for a broadcast binary op. Strides are in
// elements; 0 marks a broadcast axis. The last collapsed dim is the inner
// loop; the output inner stride is always 1.
struct BcPlan {
  Shape out_shape;
  std::vector<std::int64_t> dims;
  std::vector<std::int64_t> sa, sb;
};

inline BcPlan make_bc_plan(const Shape& a, const Shape& b) {
  const size_t nd = a.size() > b.size() ? a.size() : b.size();
  Shape out(nd);
  std::vector<std::int64_t> da(nd, 1), db(nd, 1);
  for (size_t i = 0; i < nd; ++i) {
    const std::int64_t ad =
        i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::int64_t bd =
        i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (ad != bd && ad != 1 && bd != 1)
      throw DimError("broadcast: incompatible shapes " + shape_str(a) +
                     " and " + shape_str(b));
    da[i] = ad;
    db[i] = bd;
    out[i] = ad > bd ? ad : bd;
  }
  // Row-major strides, zeroed on broadcast axes.
  std::vector<std::int64_t> sa(nd), sb(nd);
  std::int64_t acc_a = 1, acc_b = 1;
  for (size_t i = nd; i-- > 0;) {
    sa[i] = da[i] == 1 ? 0 : acc_a;
    sb[i] = db[i] == 1 ? 0 : acc_b;
    acc_a *= da[i];
    acc_b *= db[i];
  }
  // Collapse adjacent dims that are jointly contiguous.
  BcPlan p;
  p.out_shape = out;
  for (size_t i = 0; i < nd; ++i) {
    if (!p.dims.empty()) {
      const size_t k = p.dims.size() - 1;
      if (p.sa[k] == sa[i] * out[i] && p.sb[k] == sb[i] * out[i]) {
        p.dims[k] *= out[i];
        p.sa[k] = sa[i];
        p.sb[k] = sb[i];
        continue;
      }
    }
    p.dims.push_back(out[i]);
    p.sa.push_back(sa[i]);
    p.sb.push_back(sb[i]);
  }
  return p;
}

// Visits every inner run of the plan: fn(offset_a, offset_b, offset_out,
// length, stride_a, stride_b). The output walks contiguously.
template <typename F>
inline void bc_for_each_run(const BcPlan& p, F&& fn) {
  const size_t nd = p.dims.size();
  const std::int64_t len = p.dims[nd - 1];
  const std::int64_t ia = p.sa[nd - 1], ib = p.sb[nd - 1];
  if (nd == 1) {
    fn(std::int64_t{0}, std::int64_t{0}, std::int64_t{0}, len, ia, ib);
    return;
  }
  std::vector<std::int64_t> idx(nd - 1, 0);
  std::int64_t oa = 0, ob = 0, oo = 0;
  const std::int64_t inner_out = len;
  for (;;) {
    fn(oa, ob, oo, len, ia, ib);
    oo += inner_out;
    size_t d = nd - 1;
    while (d-- > 0) {
      ++idx[d];
      oa += p.sa[d];
      ob += p.sb[d];
      if (idx[d] < p.dims[d]) break;
      oa -= p.sa[d] * p.dims[d];
      ob -= p.sb[d] * p.dims[d];
      idx[d] = 0;
      if (d == 0) return;
    }
  }
}

}  // namespace capsrep::nd::detail
