#include "capsrep/capsules.hpp"

#include <cmath>

namespace capsrep::caps {

namespace {

constexpr float kDenomFloor = 1e-8f;

nd::Tensor normal_tensor(nd::Shape shape, double std_dev, nd::Rng& rng) {
  nd::Tensor t(std::move(shape));
  float* d = t.mutable_data();
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    d[i] = static_cast<float>(rng.normal() * std_dev);
  }
  return t;
}

}  // namespace

PrimaryCapsules::PrimaryCapsules(std::int64_t in_channels, std::int64_t n_caps,
                                 nd::Rng& rng)
    : in_channels_(in_channels), n_caps_(n_caps) {
  if (in_channels < 1) throw ConfigError("primary capsules need input channels");
  if (n_caps < 1) throw ConfigError("primary capsules need a positive capsule count");
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in_channels));
  pose_w_ = nd::parameter(
      normal_tensor({n_caps * kPoseDim, in_channels, 1, 1}, std_dev, rng));
  pose_b_ = nd::parameter(nd::Tensor({n_caps * kPoseDim}));
  act_w_ = nd::parameter(normal_tensor({n_caps, in_channels, 1, 1}, std_dev, rng));
  act_b_ = nd::parameter(nd::Tensor({n_caps}));
}

CapsuleGrid PrimaryCapsules::forward(const nd::Var& features) const {
  const nd::Shape& s = features.shape();
  if (s.size() != 4) {
    throw ConfigError("primary capsules expect a (B, C, H, W) feature map, got " +
                      shape_str(s));
  }
  if (s[1] != in_channels_) {
    throw ConfigError("feature map has " + std::to_string(s[1]) +
                      " channels, primary capsules were built for " +
                      std::to_string(in_channels_));
  }
  const std::int64_t b = s[0], h = s[2], w = s[3];
  const std::int64_t p = h * w;

  nd::Var pose = nd::conv2d(features, pose_w_, 1, 0);
  pose = nd::add(pose, nd::reshape(pose_b_, {1, n_caps_ * kPoseDim, 1, 1}));
  pose = nd::reshape(pose, {b, n_caps_, kPoseDim, p});
  pose = nd::permute(pose, {0, 1, 3, 2});
  pose = nd::reshape(pose, {b, n_caps_ * p, kPoseDim});

  nd::Var act = nd::conv2d(features, act_w_, 1, 0);
  act = nd::add(act, nd::reshape(act_b_, {1, n_caps_, 1, 1}));
  act = nd::sigmoid(nd::reshape(act, {b, n_caps_ * p}));

  CapsuleGrid grid;
  grid.poses = pose;
  grid.activations = act;
  grid.n_caps = n_caps_;
  grid.grid_h = h;
  grid.grid_w = w;
  return grid;
}

std::vector<std::pair<std::string, nd::Var>> PrimaryCapsules::named_parameters()
    const {
  return {{"primary.pose_w", pose_w_},
          {"primary.pose_b", pose_b_},
          {"primary.act_w", act_w_},
          {"primary.act_b", act_b_}};
}

nd::Var coupling_coefficients(const nd::Var& u, const nd::Var& w_route) {
  const nd::Shape& us = u.shape();
  const nd::Shape& ws = w_route.shape();
  if (us.size() != 3 || ws.size() != 3 || us[1] != ws[0] || us[2] != ws[1]) {
    throw DimError("coupling expects u (B,L,16) and w_route (L,16,J), got " +
                   shape_str(us) + " and " + shape_str(ws));
  }
  const nd::Var logits = nd::per_capsule_linear(u, w_route);
  return nd::softmax(logits, 2);
}

nd::Var route_activations(const nd::Var& a, const nd::Var& c,
                          DivisionPolicy policy) {
  const nd::Shape& as = a.shape();
  const nd::Shape& cs = c.shape();
  if (as.size() != 2 || cs.size() != 3 || as[0] != cs[0] || as[1] != cs[1]) {
    throw DimError("activation routing expects a (B,L) and c (B,L,J), got " +
                   shape_str(as) + " and " + shape_str(cs));
  }
  const std::int64_t b = as[0], l = as[1];

  if (policy == DivisionPolicy::kError) {
    const float* av = a.value().data();
    for (std::int64_t r = 0; r < b; ++r) {
      double total = 0.0;
      for (std::int64_t i = 0; i < l; ++i) total += av[r * l + i];
      if (total == 0.0) {
        throw DivisionGuardError("all lower activations are zero in batch row " +
                                 std::to_string(r));
      }
    }
  }

  const nd::Var weighted = nd::mul(c, nd::reshape(a, {b, l, 1}));
  const nd::Var numerator = nd::sum(weighted, 1);                   // (B, J)
  const nd::Var denominator = nd::reshape(nd::sum(a, 1), {b, 1});   // (B, 1)
  return nd::div(numerator, nd::clamp_min(denominator, kDenomFloor));
}

nd::Var transform_votes(const nd::Var& u, const nd::Var& w_pose,
                        std::int64_t n_upper) {
  const nd::Shape& us = u.shape();
  const nd::Shape& ws = w_pose.shape();
  if (us.size() != 3 || ws.size() != 3 || us[1] != ws[0] || us[2] != ws[1] ||
      ws[2] != n_upper * kPoseDim) {
    throw DimError("vote transform expects u (B,L,16) and w_pose (L,16,J*16), got " +
                   shape_str(us) + " and " + shape_str(ws) + " with J = " +
                   std::to_string(n_upper));
  }
  const nd::Var flat = nd::per_capsule_linear(u, w_pose);  // (B, L, J*16)
  return nd::reshape(flat, {us[0], us[1], n_upper, kPoseDim});
}

nd::Var route_poses(const nd::Var& votes, const nd::Var& c, const nd::Var& a,
                    DivisionPolicy policy) {
  const nd::Shape& vs = votes.shape();
  const nd::Shape& cs = c.shape();
  const nd::Shape& as = a.shape();
  if (vs.size() != 4 || cs.size() != 3 || as.size() != 2 || vs[0] != cs[0] ||
      vs[1] != cs[1] || vs[2] != cs[2] || as[0] != vs[0] || as[1] != vs[1] ||
      vs[3] != kPoseDim) {
    throw DimError("pose routing expects votes (B,L,J,16), c (B,L,J), a (B,L), got " +
                   shape_str(vs) + ", " + shape_str(cs) + ", " +
                   shape_str(as));
  }
  const std::int64_t b = vs[0], l = vs[1], j = vs[2];

  const nd::Var weights = nd::mul(c, nd::reshape(a, {b, l, 1}));  // (B, L, J)

  if (policy == DivisionPolicy::kError) {
    const float* wv = weights.value().data();
    for (std::int64_t r = 0; r < b; ++r) {
      for (std::int64_t col = 0; col < j; ++col) {
        double total = 0.0;
        for (std::int64_t i = 0; i < l; ++i) total += wv[(r * l + i) * j + col];
        if (total == 0.0) {
          throw DivisionGuardError("upper capsule " + std::to_string(col) +
                                   " receives zero total routing weight in batch row " +
                                   std::to_string(r));
        }
      }
    }
  }

  const nd::Var numerator = nd::sum(nd::mul(votes, nd::reshape(weights, {b, l, j, 1})), 1);
  const nd::Var denominator = nd::reshape(nd::sum(weights, 1), {b, j, 1});
  return nd::div(numerator, nd::clamp_min(denominator, kDenomFloor));
}

RoutingLayer::RoutingLayer(std::int64_t n_lower, std::int64_t n_upper, nd::Rng& rng)
    : n_lower_(n_lower), n_upper_(n_upper) {
  if (n_lower < 1 || n_upper < 1) {
    throw ConfigError("routing layer needs positive capsule counts");
  }
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(kPoseDim));
  w_route_ = nd::parameter(normal_tensor({n_lower, kPoseDim, n_upper}, std_dev, rng));
  w_pose_ = nd::parameter(
      normal_tensor({n_lower, kPoseDim, n_upper * kPoseDim}, std_dev, rng));
}

CapsuleSet RoutingLayer::forward(const CapsuleGrid& grid) const {
  return forward(grid.poses, grid.activations);
}

CapsuleSet RoutingLayer::forward(const nd::Var& poses,
                                 const nd::Var& activations) const {
  if (poses.shape().size() != 3 || poses.shape()[1] != n_lower_) {
    throw DimError("routing layer was built for " + std::to_string(n_lower_) +
                   " lower capsules, got poses " + shape_str(poses.shape()));
  }
  const nd::Var c = coupling_coefficients(poses, w_route_);
  const nd::Var votes = transform_votes(poses, w_pose_, n_upper_);
  CapsuleSet out;
  out.activations = route_activations(activations, c, DivisionPolicy::kClamp);
  out.poses = route_poses(votes, c, activations, DivisionPolicy::kClamp);
  return out;
}

std::vector<std::pair<std::string, nd::Var>> RoutingLayer::named_parameters()
    const {
  return {{"routing.w_route", w_route_}, {"routing.w_pose", w_pose_}};
}

CapsuleSet spatial_average_pool(const CapsuleGrid& grid) {
  if (!grid.poses.defined() || grid.n_caps < 1 || grid.grid_h < 1 ||
      grid.grid_w < 1) {
    throw ConfigError("cannot pool an empty capsule grid");
  }
  const std::int64_t b = grid.poses.shape()[0];
  const std::int64_t p = grid.grid_h * grid.grid_w;

  CapsuleSet out;
  nd::Var pose = nd::reshape(grid.poses, {b, grid.n_caps, p, kPoseDim});
  out.poses = nd::mean(pose, 2);
  nd::Var act = nd::reshape(grid.activations, {b, grid.n_caps, p});
  out.activations = nd::mean(act, 2);
  return out;
}

}  // namespace capsrep::caps
