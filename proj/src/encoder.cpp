#include "capsrep/encoder.hpp"

#include <cmath>

namespace capsrep::caps {

Encoder::Encoder(EncoderConfig config, nd::Rng& rng) : config_(std::move(config)) {
  if (config_.stages.empty()) throw ConfigError("encoder needs at least one stage");
  if (config_.in_channels < 1 || config_.image_size < 1) {
    throw ConfigError("encoder input shape must be positive");
  }

  std::int64_t channels = config_.in_channels;
  std::int64_t size = config_.image_size;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    const ConvStage& st = config_.stages[s];
    if (st.out_channels < 1 || st.kernel < 1 || st.stride < 1 || st.padding < 0) {
      throw ConfigError("invalid conv stage " + std::to_string(s));
    }
    size = (size + 2 * st.padding - st.kernel) / st.stride + 1;
    if (size < 1) {
      throw ConfigError("stage " + std::to_string(s) +
                        " shrinks the feature map below 1x1");
    }

    nd::Tensor w({st.out_channels, channels, st.kernel, st.kernel});
    const double std_dev =
        std::sqrt(2.0 / static_cast<double>(channels * st.kernel * st.kernel));
    float* wd = w.mutable_data();
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      wd[i] = static_cast<float>(rng.normal() * std_dev);
    }
    weights_.push_back(nd::parameter(std::move(w)));
    biases_.push_back(nd::parameter(nd::Tensor({st.out_channels})));
    channels = st.out_channels;
  }
  out_channels_ = channels;
  out_size_ = size;
}

nd::Var Encoder::forward(const nd::Var& images) const {
  const nd::Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config_.in_channels || s[2] != config_.image_size ||
      s[3] != config_.image_size) {
    throw DimError("encoder expects (B, " + std::to_string(config_.in_channels) +
                   ", " + std::to_string(config_.image_size) + ", " +
                   std::to_string(config_.image_size) + "), got " +
                   shape_str(s));
  }
  nd::Var x = images;
  for (std::size_t i = 0; i < config_.stages.size(); ++i) {
    const ConvStage& st = config_.stages[i];
    x = nd::conv2d(x, weights_[i], st.stride, st.padding);
    const nd::Var bias = nd::reshape(biases_[i], {1, st.out_channels, 1, 1});
    x = nd::relu(nd::add(x, bias));
  }
  return x;
}

std::vector<std::pair<std::string, nd::Var>> Encoder::named_parameters() const {
  std::vector<std::pair<std::string, nd::Var>> params;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    params.emplace_back("encoder.w" + std::to_string(i), weights_[i]);
    params.emplace_back("encoder.b" + std::to_string(i), biases_[i]);
  }
  return params;
}

}  // namespace capsrep::caps
