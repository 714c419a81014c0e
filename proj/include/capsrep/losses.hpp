#pragma once

#include "capsrep/autograd.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/ops.hpp"

namespace capsrep::obj {

struct LossWeights {
  float lambda_inv = 0.1f;
  float lambda_equi = 5.0f;
  float lambda_v = 10.0f;
  float lambda_c = 1.0f;
  // Average both cross-entropy directions; the views are interchangeable.
  bool symmetrize = true;
};

struct LossBreakdown {
  double invariant_ce = 0.0;
  double mean_entropy_a = 0.0;
  double mean_entropy_b = 0.0;
  double equivariant_mse = 0.0;
  double var_reg_a = 0.0;
  double var_reg_b = 0.0;
  double cov_reg_a = 0.0;
  double cov_reg_b = 0.0;
  double predictor_var_reg = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  nd::Var total;  // scalar graph node driving the optimizer
  LossBreakdown parts;
};

// One direction: -(1/B) sum_b sum_k p[b,k] * log(clamp(q[b,k], 1e-8)).
// Rows of both inputs must lie on the probability simplex (sum 1 within 1e-4).
nd::Var cross_entropy(const nd::Var& p, const nd::Var& q);

// Cross entropy between the two views' activation distributions, averaged
// over both directions when symmetrize is set.
nd::Var invariant_loss(const nd::Var& z_act_a, const nd::Var& z_act_b,
                       bool symmetrize = true);

// Entropy of the batch-mean activation distribution.
nd::Var mean_entropy(const nd::Var& z_act);

// Mean squared Euclidean distance between row pairs.
nd::Var equivariant_loss(const nd::Var& pred, const nd::Var& target);

// (1/d) sum_j max(0, 1 - sqrt(Var(Z[:,j]))), unbiased column variance.
nd::Var variance_reg(const nd::Var& z);

// (1/d) sum_{i != j} Cov(Z)_{ij}^2, unbiased covariance.
nd::Var covariance_reg(const nd::Var& z);

// Full objective over a batch of paired views plus the pose prediction.
TotalLoss total_loss(const nd::Var& z_act_a, const nd::Var& z_act_b,
                     const nd::Var& z_pose_a, const nd::Var& z_pose_b,
                     const nd::Var& pred, const LossWeights& weights);

}  // namespace capsrep::obj
