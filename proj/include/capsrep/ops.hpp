#pragma once

#include <utility>

#include "capsrep/autograd.hpp"

namespace capsrep::nd {

// ---- elementwise binary, numpy-style broadcasting -------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

// ---- elementwise unary -----------------------------------------------------
Var neg(const Var& x);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var square(const Var& x);
Var clamp_min(const Var& x, float lo);
// a*x + b, elementwise with scalar coefficients.
Var affine(const Var& x, float a, float b);
inline Var scale(const Var& x, float a) { return affine(x, a, 0.0f); }

// ---- shape -----------------------------------------------------------------
Var reshape(const Var& x, Shape new_shape);
Var transpose(const Var& x);                      // 2-d only
Var permute(const Var& x, std::vector<int> dims);  // general axis permutation
Var slice_cols(const Var& x, std::int64_t start, std::int64_t count);  // 2-d
Var concat_cols(const Var& a, const Var& b);                            // 2-d

// ---- reductions (f64 accumulators) ------------------------------------------
Var sum(const Var& x, int axis);
Var mean(const Var& x, int axis);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var softmax(const Var& x, int axis);

// ---- dense linear algebra ----------------------------------------------------
Var matmul(const Var& a, const Var& b);  // (m,k)x(k,n)

// input (B,C,H,W) or (C,H,W); kernels (C_out,C,k,k); stride>=1, padding>=0.
Var conv2d(const Var& input, const Var& kernels, int stride, int padding);

// u (B,N,K) x w (N,K,M) -> (B,N,M): an independent linear map per middle index.
Var per_capsule_linear(const Var& u, const Var& w);

// w (B,M,K) x x (B,K) -> (B,M): per-row matrix-vector product.
Var batched_matvec(const Var& w, const Var& x);

// ---- eager (non-graph) batch statistics -------------------------------------
// Z is (B,d); returns (mean over rows, unbiased variance over rows), each (d).
std::pair<Tensor, Tensor> batch_stats(const Tensor& z);
// Z is (B,d); returns the (d,d) unbiased covariance matrix.
Tensor covariance_matrix(const Tensor& z);

}  // namespace capsrep::nd
