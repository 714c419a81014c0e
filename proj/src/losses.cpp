#include "capsrep/losses.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace capsrep::obj {

namespace {

constexpr float kLogEps = 1e-8f;

void check_simplex(const nd::Tensor& z, const char* who) {
  const auto& s = z.shape();
  if (s.size() != 2) {
    throw DimError(std::string(who) + " expects a (B, K) matrix, got " +
                   shape_str(s));
  }
  const float* d = z.data();
  for (std::int64_t b = 0; b < s[0]; ++b) {
    double sum = 0.0;
    for (std::int64_t k = 0; k < s[1]; ++k) {
      const float v = d[b * s[1] + k];
      if (v < -1e-6f) {
        throw ContractError(std::string(who) + " row " + std::to_string(b) +
                            " has a negative probability");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
      throw ContractError(std::string(who) + " row " + std::to_string(b) +
                          " is not on the simplex (sum " +
                          std::to_string(sum) + ")");
    }
  }
}

void check_batch_matrix(const nd::Tensor& z, const char* who) {
  const auto& s = z.shape();
  if (s.size() != 2) {
    throw DimError(std::string(who) + " expects a (B, d) matrix, got " +
                   shape_str(s));
  }
  if (s[0] < 2) {
    throw DegenerateBatchError(std::string(who) +
                               " needs at least two rows, got " +
                               std::to_string(s[0]));
  }
}

// Column-centered copy of z: z - mean(z, rows), shape (B, d).
nd::Var centered(const nd::Var& z) { return nd::sub(z, nd::mean(z, 0)); }

double scalar_of(const nd::Var& v) {
  return static_cast<double>(v.value().data()[0]);
}

// Scalar combination sum_i coeffs[i] * terms[i], accumulated in double and
// rounded once, so the reported breakdown recombines to the stored total.
nd::Var weighted_sum(const std::vector<nd::Var>& terms,
                     const std::vector<double>& coeffs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    acc += coeffs[i] * scalar_of(terms[i]);
  }
  std::vector<std::shared_ptr<nd::Node>> nodes;
  nodes.reserve(terms.size());
  for (const auto& t : terms) nodes.push_back(t.node());
  return nd::make_op(
      nd::Tensor::scalar(static_cast<float>(acc)), terms, "weighted_sum",
      [nodes, coeffs](const nd::Tensor& g) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          const float gi = g.data()[0] * static_cast<float>(coeffs[i]);
          nodes[i]->accumulate(nd::Tensor::full(nodes[i]->value.shape(), gi));
        }
      });
}

}  // namespace

nd::Var cross_entropy(const nd::Var& p, const nd::Var& q) {
  check_simplex(p.value(), "cross_entropy lhs");
  check_simplex(q.value(), "cross_entropy rhs");
  if (p.shape() != q.shape()) {
    throw DimError("cross_entropy shape mismatch: " + shape_str(p.shape()) +
                   " vs " + shape_str(q.shape()));
  }
  const float inv_b = 1.0f / static_cast<float>(p.shape()[0]);
  const auto log_q = nd::log(nd::clamp_min(q, kLogEps));
  return nd::scale(nd::sum_all(nd::mul(p, log_q)), -inv_b);
}

nd::Var invariant_loss(const nd::Var& z_act_a, const nd::Var& z_act_b,
                       bool symmetrize) {
  if (!symmetrize) return cross_entropy(z_act_a, z_act_b);
  return nd::scale(nd::add(cross_entropy(z_act_a, z_act_b),
                           cross_entropy(z_act_b, z_act_a)),
                   0.5f);
}

nd::Var mean_entropy(const nd::Var& z_act) {
  check_simplex(z_act.value(), "mean_entropy");
  const auto mean_p = nd::mean(z_act, 0);
  const auto log_p = nd::log(nd::clamp_min(mean_p, kLogEps));
  return nd::neg(nd::sum_all(nd::mul(mean_p, log_p)));
}

nd::Var equivariant_loss(const nd::Var& pred, const nd::Var& target) {
  if (pred.shape().size() != 2 || pred.shape() != target.shape()) {
    throw DimError("equivariant_loss shape mismatch: " +
                   shape_str(pred.shape()) + " vs " +
                   shape_str(target.shape()));
  }
  const float inv_b = 1.0f / static_cast<float>(pred.shape()[0]);
  return nd::scale(nd::sum_all(nd::square(nd::sub(pred, target))), inv_b);
}

nd::Var variance_reg(const nd::Var& z) {
  check_batch_matrix(z.value(), "variance_reg");
  const auto b = z.shape()[0];
  const float inv_n1 = 1.0f / static_cast<float>(b - 1);
  const auto var = nd::scale(nd::sum(nd::square(centered(z)), 0), inv_n1);
  const auto hinge = nd::relu(nd::affine(nd::sqrt(var), -1.0f, 1.0f));
  return nd::mean_all(hinge);
}

nd::Var covariance_reg(const nd::Var& z) {
  check_batch_matrix(z.value(), "covariance_reg");
  const auto b = z.shape()[0];
  const auto d = z.shape()[1];
  if (d == 1) return nd::constant(nd::Tensor::scalar(0.0f));
  const float inv_n1 = 1.0f / static_cast<float>(b - 1);
  const auto c = centered(z);
  const auto cov = nd::scale(nd::matmul(nd::transpose(c), c), inv_n1);
  nd::Tensor mask = nd::Tensor::full({d, d}, 1.0f);
  float* m = mask.mutable_data();
  for (std::int64_t i = 0; i < d; ++i) m[i * d + i] = 0.0f;
  const auto off_diag = nd::mul(nd::square(cov), nd::constant(mask));
  return nd::scale(nd::sum_all(off_diag), 1.0f / static_cast<float>(d));
}

TotalLoss total_loss(const nd::Var& z_act_a, const nd::Var& z_act_b,
                     const nd::Var& z_pose_a, const nd::Var& z_pose_b,
                     const nd::Var& pred, const LossWeights& weights) {
  for (const float w : {weights.lambda_inv, weights.lambda_equi,
                        weights.lambda_v, weights.lambda_c}) {
    if (!std::isfinite(w) || w < 0.0f) {
      throw ConfigError("loss weights must be finite and nonnegative");
    }
  }
  const std::int64_t b = z_act_a.shape()[0];
  for (const auto* v : {&z_act_b, &z_pose_a, &z_pose_b, &pred}) {
    if (v->shape().size() != 2 || v->shape()[0] != b) {
      throw DimError("total_loss batch mismatch: expected " +
                     std::to_string(b) + " rows, got " +
                     shape_str(v->shape()));
    }
  }

  const auto ce = invariant_loss(z_act_a, z_act_b, weights.symmetrize);
  const auto ent_a = mean_entropy(z_act_a);
  const auto ent_b = mean_entropy(z_act_b);
  const auto mse = equivariant_loss(pred, z_pose_b);
  const auto var_a = variance_reg(z_pose_a);
  const auto var_b = variance_reg(z_pose_b);
  const auto var_p = variance_reg(pred);
  const auto cov_a = covariance_reg(z_pose_a);
  const auto cov_b = covariance_reg(z_pose_b);

  TotalLoss out;
  out.total = weighted_sum(
      {ce, ent_a, ent_b, mse, var_a, var_b, var_p, cov_a, cov_b},
      {weights.lambda_inv, -1.0, -1.0, weights.lambda_equi, weights.lambda_v,
       weights.lambda_v, weights.lambda_v, weights.lambda_c,
       weights.lambda_c});
  out.parts.invariant_ce = scalar_of(ce);
  out.parts.mean_entropy_a = scalar_of(ent_a);
  out.parts.mean_entropy_b = scalar_of(ent_b);
  out.parts.equivariant_mse = scalar_of(mse);
  out.parts.var_reg_a = scalar_of(var_a);
  out.parts.var_reg_b = scalar_of(var_b);
  out.parts.predictor_var_reg = scalar_of(var_p);
  out.parts.cov_reg_a = scalar_of(cov_a);
  out.parts.cov_reg_b = scalar_of(cov_b);
  out.parts.total = scalar_of(out.total);
  return out;
}

}  // namespace capsrep::obj
