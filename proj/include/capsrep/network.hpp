#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capsrep/capsules.hpp"
#include "capsrep/encoder.hpp"

namespace capsrep::caps {

struct NetworkConfig {
  EncoderConfig encoder;
  std::int64_t n_caps = 16;  // upper capsule count J; pose output is J*16 wide
};

// Encoder -> primary capsules -> one self-routing layer. The routed
// activations are the invariant embedding, the routed poses (flattened)
// the equivariant one.
class CapsuleNetwork {
 public:
  CapsuleNetwork(NetworkConfig config, std::uint64_t seed);

  struct Output {
    CapsuleGrid primary;
    CapsuleSet routed;
    nd::Var z_act;   // (B, J), simplex over upper capsules
    nd::Var z_pose;  // (B, J*16)
  };

  Output forward(const nd::Var& images) const;

  const NetworkConfig& config() const { return config_; }
  std::int64_t act_dim() const { return config_.n_caps; }
  std::int64_t pose_dim() const { return config_.n_caps * kPoseDim; }

  const Encoder& encoder() const { return encoder_; }
  const PrimaryCapsules& primary() const { return primary_; }
  const RoutingLayer& routing() const { return routing_; }

  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;
  std::vector<nd::Var> parameters() const;

 private:
  NetworkConfig config_;
  Encoder encoder_;
  PrimaryCapsules primary_;
  RoutingLayer routing_;
};

// Baseline projector: the representation is split in half and each half
// feeds its own one-hidden-layer MLP, so the two outputs share no inputs.
class SplitMlpProjector {
 public:
  SplitMlpProjector(std::int64_t in_dim, std::int64_t hidden_dim,
                    std::int64_t out_dim, nd::Rng& rng);

  // (B, in_dim) -> (z_inv (B, out_dim), z_equi (B, out_dim))
  std::pair<nd::Var, nd::Var> forward(const nd::Var& representation) const;

  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;

 private:
  nd::Var head(const nd::Var& half, int side) const;

  std::int64_t in_dim_ = 0, hidden_dim_ = 0, out_dim_ = 0;
  nd::Var w1_[2], b1_[2], w2_[2], b2_[2];  // [0] = left/invariant head
};

}  // namespace capsrep::caps
