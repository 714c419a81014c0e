#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capsrep/autograd.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/ops.hpp"
#include "capsrep/rng.hpp"

namespace capsrep::caps {

inline constexpr std::int64_t kPoseDim = 16;

// Primary capsules laid out over the feature-map grid. Lower-capsule index
// runs capsule-major: l = capsule * (grid_h * grid_w) + position.
struct CapsuleGrid {
  nd::Var poses;        // (B, n_caps * P, 16)
  nd::Var activations;  // (B, n_caps * P), each in (0, 1)
  std::int64_t n_caps = 0;
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;

  std::int64_t n_lower() const { return n_caps * grid_h * grid_w; }
};

struct CapsuleSet {
  nd::Var poses;        // (B, J, 16)
  nd::Var activations;  // (B, J)
};

// Whether a zero denominator raises or is clamped to 1e-8. The layer forward
// clamps so training never aborts mid-step; the standalone routing functions
// default to raising on exact zeroes.
enum class DivisionPolicy { kError, kClamp };

// 1x1 conv heads turning a feature map into pose vectors and activations.
class PrimaryCapsules {
 public:
  PrimaryCapsules(std::int64_t in_channels, std::int64_t n_caps, nd::Rng& rng);

  CapsuleGrid forward(const nd::Var& features) const;  // (B, C, H, W)

  std::int64_t n_caps() const { return n_caps_; }
  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;

 private:
  std::int64_t in_channels_ = 0;
  std::int64_t n_caps_ = 0;
  nd::Var pose_w_, pose_b_;  // (n_caps*16, C, 1, 1), (n_caps*16)
  nd::Var act_w_, act_b_;    // (n_caps, C, 1, 1), (n_caps)
};

// c = row-softmax of per-capsule logits W_route_i^T u_i.
// u: (B, L, 16), w_route: (L, 16, J) -> (B, L, J)
nd::Var coupling_coefficients(const nd::Var& u, const nd::Var& w_route);

// a_out_j = sum_i c_ij a_i / sum_i a_i.  a: (B, L), c: (B, L, J) -> (B, J)
nd::Var route_activations(const nd::Var& a, const nd::Var& c,
                          DivisionPolicy policy = DivisionPolicy::kError);

// Votes u_hat_{j|i} = W_pose_ij u_i for every pair. The per-pair 16x16
// matrices are stored fused as w_pose (L, 16, J*16) with
// w_pose[i][k][j*16+m] = (W_pose_ij)[m][k].
// u: (B, L, 16) -> (B, L, J, 16)
nd::Var transform_votes(const nd::Var& u, const nd::Var& w_pose,
                        std::int64_t n_upper);

// u_out_j = sum_i c_ij a_i u_hat_{j|i} / sum_i c_ij a_i.
// votes: (B, L, J, 16), c: (B, L, J), a: (B, L) -> (B, J, 16)
nd::Var route_poses(const nd::Var& votes, const nd::Var& c, const nd::Var& a,
                    DivisionPolicy policy = DivisionPolicy::kError);

// Non-iterative self-routing over a fixed lower-capsule index set.
class RoutingLayer {
 public:
  RoutingLayer(std::int64_t n_lower, std::int64_t n_upper, nd::Rng& rng);

  CapsuleSet forward(const CapsuleGrid& grid) const;
  CapsuleSet forward(const nd::Var& poses, const nd::Var& activations) const;

  std::int64_t n_lower() const { return n_lower_; }
  std::int64_t n_upper() const { return n_upper_; }
  const nd::Var& w_route() const { return w_route_; }
  const nd::Var& w_pose() const { return w_pose_; }
  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;

 private:
  std::int64_t n_lower_ = 0;
  std::int64_t n_upper_ = 0;
  nd::Var w_route_;  // (L, 16, J)
  nd::Var w_pose_;   // (L, 16, J*16)
};

// Mean pose and activation per capsule over the spatial grid.
CapsuleSet spatial_average_pool(const CapsuleGrid& grid);

}  // namespace capsrep::caps
