#include "capsrep/network.hpp"

#include <cmath>

namespace capsrep::caps {

namespace {

nd::Tensor normal_tensor(nd::Shape shape, double std_dev, nd::Rng& rng) {
  nd::Tensor t(std::move(shape));
  float* d = t.mutable_data();
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    d[i] = static_cast<float>(rng.normal() * std_dev);
  }
  return t;
}

}  // namespace

CapsuleNetwork::CapsuleNetwork(NetworkConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      encoder_([&] {
        nd::Rng rng(nd::mix_seed(seed, 1));
        return Encoder(config_.encoder, rng);
      }()),
      primary_([&] {
        nd::Rng rng(nd::mix_seed(seed, 2));
        return PrimaryCapsules(encoder_.out_channels(), config_.n_caps, rng);
      }()),
      routing_([&] {
        nd::Rng rng(nd::mix_seed(seed, 3));
        const std::int64_t positions = encoder_.out_size() * encoder_.out_size();
        return RoutingLayer(config_.n_caps * positions, config_.n_caps, rng);
      }()) {
  if (config_.n_caps < 1) throw ConfigError("n_caps must be positive");
}

CapsuleNetwork::Output CapsuleNetwork::forward(const nd::Var& images) const {
  Output out;
  const nd::Var features = encoder_.forward(images);
  out.primary = primary_.forward(features);
  out.routed = routing_.forward(out.primary);
  out.z_act = out.routed.activations;
  const std::int64_t b = images.shape()[0];
  out.z_pose = nd::reshape(out.routed.poses, {b, pose_dim()});
  return out;
}

std::vector<std::pair<std::string, nd::Var>> CapsuleNetwork::named_parameters()
    const {
  std::vector<std::pair<std::string, nd::Var>> params = encoder_.named_parameters();
  for (auto& p : primary_.named_parameters()) params.push_back(std::move(p));
  for (auto& p : routing_.named_parameters()) params.push_back(std::move(p));
  return params;
}

std::vector<nd::Var> CapsuleNetwork::parameters() const {
  std::vector<nd::Var> out;
  for (auto& [name, var] : named_parameters()) out.push_back(var);
  return out;
}

SplitMlpProjector::SplitMlpProjector(std::int64_t in_dim, std::int64_t hidden_dim,
                                     std::int64_t out_dim, nd::Rng& rng)
    : in_dim_(in_dim), hidden_dim_(hidden_dim), out_dim_(out_dim) {
  if (in_dim < 2 || in_dim % 2 != 0) {
    throw ConfigError("split projector input dim must be even, got " +
                      std::to_string(in_dim));
  }
  if (hidden_dim < 1 || out_dim < 1) {
    throw ConfigError("split projector dims must be positive");
  }
  const std::int64_t half = in_dim / 2;
  for (int side = 0; side < 2; ++side) {
    w1_[side] = nd::parameter(
        normal_tensor({half, hidden_dim}, std::sqrt(2.0 / half), rng));
    b1_[side] = nd::parameter(nd::Tensor({hidden_dim}));
    w2_[side] = nd::parameter(
        normal_tensor({hidden_dim, out_dim}, std::sqrt(2.0 / hidden_dim), rng));
    b2_[side] = nd::parameter(nd::Tensor({out_dim}));
  }
}

nd::Var SplitMlpProjector::head(const nd::Var& half, int side) const {
  const nd::Var hidden =
      nd::relu(nd::add(nd::matmul(half, w1_[side]), b1_[side]));
  return nd::add(nd::matmul(hidden, w2_[side]), b2_[side]);
}

std::pair<nd::Var, nd::Var> SplitMlpProjector::forward(
    const nd::Var& representation) const {
  const nd::Shape& s = representation.shape();
  if (s.size() != 2 || s[1] != in_dim_) {
    throw DimError("split projector expects (B, " + std::to_string(in_dim_) +
                   "), got " + shape_str(s));
  }
  const std::int64_t half = in_dim_ / 2;
  const nd::Var left = nd::slice_cols(representation, 0, half);
  const nd::Var right = nd::slice_cols(representation, half, half);
  return {head(left, 0), head(right, 1)};
}

std::vector<std::pair<std::string, nd::Var>> SplitMlpProjector::named_parameters()
    const {
  std::vector<std::pair<std::string, nd::Var>> params;
  const char* sides[2] = {"inv", "equi"};
  for (int side = 0; side < 2; ++side) {
    params.emplace_back(std::string("split.") + sides[side] + ".w1", w1_[side]);
    params.emplace_back(std::string("split.") + sides[side] + ".b1", b1_[side]);
    params.emplace_back(std::string("split.") + sides[side] + ".w2", w2_[side]);
    params.emplace_back(std::string("split.") + sides[side] + ".b2", b2_[side]);
  }
  return params;
}

}  // namespace capsrep::caps
