#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capsrep/autograd.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/ops.hpp"
#include "capsrep/rng.hpp"

namespace capsrep::caps {

struct ConvStage {
  std::int64_t out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

struct EncoderConfig {
  std::int64_t in_channels = 3;
  std::int64_t image_size = 32;
  std::vector<ConvStage> stages = {{32, 3, 2, 1},
                                   {64, 3, 2, 1},
                                   {128, 3, 2, 1},
                                   {128, 3, 1, 1}};
};

// Strided convolutional stack with ReLU after every stage.
class Encoder {
 public:
  Encoder(EncoderConfig config, nd::Rng& rng);

  // (B, in_channels, image_size, image_size) -> (B, out_channels, S, S)
  nd::Var forward(const nd::Var& images) const;

  std::int64_t out_channels() const { return out_channels_; }
  std::int64_t out_size() const { return out_size_; }
  const EncoderConfig& config() const { return config_; }

  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;

 private:
  EncoderConfig config_;
  std::vector<nd::Var> weights_;
  std::vector<nd::Var> biases_;
  std::int64_t out_channels_ = 0;
  std::int64_t out_size_ = 0;
};

}  // namespace capsrep::caps
