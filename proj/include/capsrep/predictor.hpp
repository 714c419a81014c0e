#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capsrep/autograd.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/ops.hpp"
#include "capsrep/rng.hpp"
#include "capsrep/rotations.hpp"

namespace capsrep::pred {

// Hypernetwork predictor: a single linear map turns the relative rotation
// quaternion g into the weights of a residual two-layer MLP which is then
// applied to the pose embedding. With a zero generator the MLP contributes
// nothing and the predictor is exactly the identity.
class HyperPredictor {
 public:
  HyperPredictor(std::int64_t pose_dim, nd::Rng& rng);

  // z_pose (B, D), g_batch (B, 4) row-wise unit quaternions -> (B, D)
  nd::Var predict(const nd::Var& z_pose, const nd::Var& g_batch) const;

  struct Blocks {
    nd::Tensor w1;  // (D, D)
    nd::Tensor b1;  // (D)
    nd::Tensor w2;  // (D, D)
    nd::Tensor b2;  // (D)
  };
  // Eager single-quaternion weight generation (inspection/testing path).
  Blocks generate_weights(const rot::Quat& g) const;

  std::int64_t pose_dim() const { return d_; }
  std::int64_t generated_param_count() const { return 2 * d_ * d_ + 2 * d_; }

  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;

 private:
  std::int64_t d_ = 0;
  nd::Var gen_w_;  // (4, 2*D*D + 2*D)
  nd::Var gen_b_;  // (2*D*D + 2*D)
};

// Packs per-row quaternions into a (B, 4) tensor in (w, x, y, z) order.
nd::Tensor pack_quaternions(const std::vector<rot::Quat>& quats);

}  // namespace capsrep::pred
