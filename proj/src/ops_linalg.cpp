#include <Eigen/Core>

#include "capsrep/ops.hpp"

namespace capsrep::nd {

namespace {

using MatRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using StrideT = Eigen::OuterStride<>;
using MapMS = Eigen::Map<MatRM, 0, StrideT>;
using MapCMS = Eigen::Map<const MatRM, 0, StrideT>;

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw DimError("matmul: expected 2-d operands, got " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  const std::int64_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw DimError("matmul: inner dims disagree between " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor out({m, n});
  MapM(out.mutable_data(), m, n).noalias() =
      MapCM(a.value().data(), m, k) * MapCM(b.value().data(), k, n);
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, "matmul",
                 [an, bn, m, k, n](const Tensor& g) {
                   MapCM G(g.data(), m, n);
                   if (an->requires_grad) {
                     Tensor da({m, k});
                     MapM(da.mutable_data(), m, k).noalias() =
                         G * MapCM(bn->value.data(), k, n).transpose();
                     an->accumulate(da);
                   }
                   if (bn->requires_grad) {
                     Tensor db({k, n});
                     MapM(db.mutable_data(), k, n).noalias() =
                         MapCM(an->value.data(), m, k).transpose() * G;
                     bn->accumulate(db);
                   }
                 });
}

namespace {

struct ConvDims {
  std::int64_t batch, cin, h, w, cout, kh, kw, oh, ow;
  int stride, padding;
  bool batched_input;
};

ConvDims conv_dims(const Shape& in, const Shape& ker, int stride,
                   int padding) {
  if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
  if (padding < 0) throw ParamError("conv2d: padding must be >= 0");
  if (ker.size() != 4)
    throw DimError("conv2d: kernels must be 4-d, got " + shape_str(ker));
  ConvDims d{};
  d.stride = stride;
  d.padding = padding;
  if (in.size() == 4) {
    d.batched_input = true;
    d.batch = in[0];
    d.cin = in[1];
    d.h = in[2];
    d.w = in[3];
  } else if (in.size() == 3) {
    d.batched_input = false;
    d.batch = 1;
    d.cin = in[0];
    d.h = in[1];
    d.w = in[2];
  } else {
    throw DimError("conv2d: input must be 3-d or 4-d, got " + shape_str(in));
  }
  d.cout = ker[0];
  d.kh = ker[2];
  d.kw = ker[3];
  if (ker[1] != d.cin)
    throw DimError("conv2d: kernel channels " + shape_str(ker) +
                   " do not match input " + shape_str(in));
  if (d.h + 2 * padding < d.kh || d.w + 2 * padding < d.kw)
    throw DimError("conv2d: kernel " + shape_str(ker) +
                   " larger than padded input " + shape_str(in));
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
  return d;
}

// Expands one image into a (cin*kh*kw) x (oh*ow) patch matrix.
void im2col(const float* img, const ConvDims& d, float* col) {
  const std::int64_t patch = d.oh * d.ow;
  for (std::int64_t c = 0; c < d.cin; ++c)
    for (std::int64_t ki = 0; ki < d.kh; ++ki)
      for (std::int64_t kj = 0; kj < d.kw; ++kj) {
        float* row =
            col + ((c * d.kh + ki) * d.kw + kj) * patch;
        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
          const std::int64_t y = oy * d.stride - d.padding + ki;
          float* out_row = row + oy * d.ow;
          if (y < 0 || y >= d.h) {
            for (std::int64_t ox = 0; ox < d.ow; ++ox) out_row[ox] = 0.0f;
            continue;
          }
          const float* in_row = img + (c * d.h + y) * d.w;
          for (std::int64_t ox = 0; ox < d.ow; ++ox) {
            const std::int64_t x = ox * d.stride - d.padding + kj;
            out_row[ox] = (x < 0 || x >= d.w) ? 0.0f : in_row[x];
          }
        }
      }
}

// Scatter-adds a patch-matrix gradient back onto the image.
void col2im(const float* col, const ConvDims& d, float* img) {
  const std::int64_t patch = d.oh * d.ow;
  for (std::int64_t c = 0; c < d.cin; ++c)
    for (std::int64_t ki = 0; ki < d.kh; ++ki)
      for (std::int64_t kj = 0; kj < d.kw; ++kj) {
        const float* row = col + ((c * d.kh + ki) * d.kw + kj) * patch;
        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
          const std::int64_t y = oy * d.stride - d.padding + ki;
          if (y < 0 || y >= d.h) continue;
          float* in_row = img + (c * d.h + y) * d.w;
          const float* g_row = row + oy * d.ow;
          for (std::int64_t ox = 0; ox < d.ow; ++ox) {
            const std::int64_t x = ox * d.stride - d.padding + kj;
            if (x >= 0 && x < d.w) in_row[x] += g_row[ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernels, int stride, int padding) {
  const ConvDims d =
      conv_dims(input.shape(), kernels.shape(), stride, padding);
  const std::int64_t ckk = d.cin * d.kh * d.kw;
  const std::int64_t patch = d.oh * d.ow;
  const std::int64_t in_sz = d.cin * d.h * d.w;
  const std::int64_t out_sz = d.cout * patch;

  Shape out_shape = d.batched_input
                        ? Shape{d.batch, d.cout, d.oh, d.ow}
                        : Shape{d.cout, d.oh, d.ow};
  Tensor out(out_shape);

  const bool need_col_cache =
      kernels.requires_grad() || input.requires_grad();
  auto cols = std::make_shared<std::vector<float>>();
  if (need_col_cache) cols->resize(static_cast<size_t>(d.batch * ckk * patch));
  std::vector<float> scratch;
  if (!need_col_cache) scratch.resize(static_cast<size_t>(ckk * patch));

  {
    MapCM K(kernels.value().data(), d.cout, ckk);
    const float* pin = input.value().data();
    float* pout = out.mutable_data();
    for (std::int64_t b = 0; b < d.batch; ++b) {
      float* col = need_col_cache ? cols->data() + b * ckk * patch
                                  : scratch.data();
      im2col(pin + b * in_sz, d, col);
      MapM(pout + b * out_sz, d.cout, patch).noalias() =
          K * MapCM(col, ckk, patch);
    }
  }

  auto in_node = input.node();
  auto ker_node = kernels.node();
  return make_op(
      std::move(out), {input, kernels}, "conv2d",
      [in_node, ker_node, d, ckk, patch, in_sz, out_sz,
       cols](const Tensor& g) {
        const float* pg = g.data();
        if (ker_node->requires_grad) {
          Tensor dk(ker_node->value.shape());
          MapM DK(dk.mutable_data(), d.cout, ckk);
          for (std::int64_t b = 0; b < d.batch; ++b) {
            MapCM G(pg + b * out_sz, d.cout, patch);
            MapCM col(cols->data() + b * ckk * patch, ckk, patch);
            DK.noalias() += G * col.transpose();
          }
          ker_node->accumulate(dk);
        }
        if (in_node->requires_grad) {
          Tensor din(in_node->value.shape());
          float* pdin = din.mutable_data();
          std::vector<float> dcol(static_cast<size_t>(ckk * patch));
          MapCM K(ker_node->value.data(), d.cout, ckk);
          for (std::int64_t b = 0; b < d.batch; ++b) {
            MapCM G(pg + b * out_sz, d.cout, patch);
            MapM(dcol.data(), ckk, patch).noalias() = K.transpose() * G;
            col2im(dcol.data(), d, pdin + b * in_sz);
          }
          in_node->accumulate(din);
        }
      });
}

Var per_capsule_linear(const Var& u, const Var& w) {
  if (u.shape().size() != 3 || w.shape().size() != 3)
    throw DimError("per_capsule_linear: expected 3-d operands, got " +
                   shape_str(u.shape()) + " and " + shape_str(w.shape()));
  const std::int64_t B = u.shape()[0], N = u.shape()[1], K = u.shape()[2];
  const std::int64_t M = w.shape()[2];
  if (w.shape()[0] != N || w.shape()[1] != K)
    throw DimError("per_capsule_linear: weight shape " + shape_str(w.shape()) +
                   " does not match input " + shape_str(u.shape()));
  Tensor out({B, N, M});
  {
    const float* pu = u.value().data();
    const float* pw = w.value().data();
    float* po = out.mutable_data();
    for (std::int64_t n = 0; n < N; ++n) {
      MapCMS U(pu + n * K, B, K, StrideT(N * K));
      MapCM W(pw + n * K * M, K, M);
      MapMS O(po + n * M, B, M, StrideT(N * M));
      O.noalias() = U * W;
    }
  }
  auto un = u.node();
  auto wn = w.node();
  return make_op(
      std::move(out), {u, w}, "per_capsule_linear",
      [un, wn, B, N, K, M](const Tensor& g) {
        const float* pg = g.data();
        if (un->requires_grad) {
          Tensor du({B, N, K});
          float* pd = du.mutable_data();
          const float* pw = wn->value.data();
          for (std::int64_t n = 0; n < N; ++n) {
            MapCMS G(pg + n * M, B, M, StrideT(N * M));
            MapCM W(pw + n * K * M, K, M);
            MapMS DU(pd + n * K, B, K, StrideT(N * K));
            DU.noalias() = G * W.transpose();
          }
          un->accumulate(du);
        }
        if (wn->requires_grad) {
          Tensor dw({N, K, M});
          float* pd = dw.mutable_data();
          const float* pu = un->value.data();
          for (std::int64_t n = 0; n < N; ++n) {
            MapCMS U(pu + n * K, B, K, StrideT(N * K));
            MapCMS G(pg + n * M, B, M, StrideT(N * M));
            MapM DW(pd + n * K * M, K, M);
            DW.noalias() = U.transpose() * G;
          }
          wn->accumulate(dw);
        }
      });
}

Var batched_matvec(const Var& w, const Var& x) {
  if (w.shape().size() != 3 || x.shape().size() != 2)
    throw DimError("batched_matvec: expected (B,M,K) and (B,K), got " +
                   shape_str(w.shape()) + " and " + shape_str(x.shape()));
  const std::int64_t B = w.shape()[0], M = w.shape()[1], K = w.shape()[2];
  if (x.shape()[0] != B || x.shape()[1] != K)
    throw DimError("batched_matvec: operand shapes " + shape_str(w.shape()) +
                   " and " + shape_str(x.shape()) + " disagree");
  Tensor out({B, M});
  {
    const float* pw = w.value().data();
    const float* px = x.value().data();
    float* po = out.mutable_data();
    for (std::int64_t b = 0; b < B; ++b) {
      MapCM W(pw + b * M * K, M, K);
      Eigen::Map<const Eigen::VectorXf> X(px + b * K, K);
      Eigen::Map<Eigen::VectorXf> O(po + b * M, M);
      O.noalias() = W * X;
    }
  }
  auto wn = w.node();
  auto xn = x.node();
  return make_op(
      std::move(out), {w, x}, "batched_matvec",
      [wn, xn, B, M, K](const Tensor& g) {
        const float* pg = g.data();
        if (wn->requires_grad) {
          Tensor dw({B, M, K});
          float* pd = dw.mutable_data();
          const float* px = xn->value.data();
          for (std::int64_t b = 0; b < B; ++b) {
            MapM DW(pd + b * M * K, M, K);
            Eigen::Map<const Eigen::VectorXf> G(pg + b * M, M);
            Eigen::Map<const Eigen::VectorXf> X(px + b * K, K);
            DW.noalias() = G * X.transpose();
          }
          wn->accumulate(dw);
        }
        if (xn->requires_grad) {
          Tensor dx({B, K});
          float* pd = dx.mutable_data();
          const float* pw = wn->value.data();
          for (std::int64_t b = 0; b < B; ++b) {
            MapCM W(pw + b * M * K, M, K);
            Eigen::Map<const Eigen::VectorXf> G(pg + b * M, M);
            Eigen::Map<Eigen::VectorXf> DX(pd + b * K, K);
            DX.noalias() = W.transpose() * G;
          }
          xn->accumulate(dx);
        }
      });
}

std::pair<Tensor, Tensor> batch_stats(const Tensor& z) {
  if (z.shape().size() != 2)
    throw DimError("batch_stats: expected 2-d input, got " +
                   shape_str(z.shape()));
  const std::int64_t B = z.shape()[0], D = z.shape()[1];
  if (B < 2)
    throw DegenerateBatchError("batch_stats: needs at least 2 rows, got " +
                               std::to_string(B));
  Tensor mean({D}), var({D});
  std::vector<double> acc(static_cast<size_t>(D), 0.0);
  const float* pz = z.data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t j = 0; j < D; ++j) acc[static_cast<size_t>(j)] += pz[b * D + j];
  float* pm = mean.mutable_data();
  for (std::int64_t j = 0; j < D; ++j)
    pm[j] = static_cast<float>(acc[static_cast<size_t>(j)] / B);
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t j = 0; j < D; ++j) {
      const double dv = static_cast<double>(pz[b * D + j]) - pm[j];
      acc[static_cast<size_t>(j)] += dv * dv;
    }
  float* pv = var.mutable_data();
  for (std::int64_t j = 0; j < D; ++j)
    pv[j] = static_cast<float>(acc[static_cast<size_t>(j)] / (B - 1));
  return {mean, var};
}

Tensor covariance_matrix(const Tensor& z) {
  if (z.shape().size() != 2)
    throw DimError("covariance_matrix: expected 2-d input, got " +
                   shape_str(z.shape()));
  const std::int64_t B = z.shape()[0], D = z.shape()[1];
  if (B < 2)
    throw DegenerateBatchError(
        "covariance_matrix: needs at least 2 rows, got " + std::to_string(B));
  std::vector<double> mean(static_cast<size_t>(D), 0.0);
  const float* pz = z.data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t j = 0; j < D; ++j) mean[static_cast<size_t>(j)] += pz[b * D + j];
  for (auto& m : mean) m /= B;
  Tensor cov({D, D});
  float* pc = cov.mutable_data();
  std::vector<double> row(static_cast<size_t>(D));
  std::vector<double> acc(static_cast<size_t>(D * D), 0.0);
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t j = 0; j < D; ++j)
      row[static_cast<size_t>(j)] = pz[b * D + j] - mean[static_cast<size_t>(j)];
    for (std::int64_t i = 0; i < D; ++i) {
      const double ri = row[static_cast<size_t>(i)];
      double* arow = acc.data() + i * D;
      for (std::int64_t j = 0; j < D; ++j) arow[j] += ri * row[static_cast<size_t>(j)];
    }
  }
  for (std::int64_t i = 0; i < D * D; ++i)
    pc[i] = static_cast<float>(acc[static_cast<size_t>(i)] / (B - 1));
  return cov;
}

}  // namespace capsrep::nd
