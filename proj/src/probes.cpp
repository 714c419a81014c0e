#include "capsrep/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capsrep/metrics.hpp"
#include "capsrep/ops.hpp"

namespace capsrep::eval {

Probe::Probe(const ProbeConfig& cfg, nd::Rng& rng) : cfg_(cfg) {
  if (cfg.in_dim < 1 || cfg.out_dim < 1 || cfg.hidden < 0) {
    throw ConfigError("probe dims must be positive (hidden may be 0)");
  }
  if (cfg.epochs < 1 || cfg.batch < 1) {
    throw ConfigError("probe epochs and batch size must be positive");
  }
  const auto init = [&rng](nd::Shape shape, double std) {
    nd::Tensor t(std::move(shape));
    float* d = t.mutable_data();
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      d[i] = static_cast<float>(std * rng.normal());
    }
    return t;
  };
  if (cfg.hidden == 0) {
    w1_ = nd::parameter(
        init({cfg.in_dim, cfg.out_dim}, std::sqrt(1.0 / cfg.in_dim)));
    b1_ = nd::parameter(nd::Tensor({cfg.out_dim}));
  } else {
    w1_ = nd::parameter(
        init({cfg.in_dim, cfg.hidden}, std::sqrt(2.0 / cfg.in_dim)));
    b1_ = nd::parameter(nd::Tensor({cfg.hidden}));
    w2_ = nd::parameter(
        init({cfg.hidden, cfg.out_dim}, std::sqrt(1.0 / cfg.hidden)));
    b2_ = nd::parameter(nd::Tensor({cfg.out_dim}));
  }
}

nd::Var Probe::forward(const nd::Var& x) const {
  if (x.shape().size() != 2 || x.shape()[1] != cfg_.in_dim) {
    throw DimError("probe expects (B, " + std::to_string(cfg_.in_dim) +
                   ") inputs, got " + shape_str(x.shape()));
  }
  const auto first = nd::add(nd::matmul(x, w1_), b1_);
  if (cfg_.hidden == 0) return first;
  return nd::add(nd::matmul(nd::relu(first), w2_), b2_);
}

std::vector<nd::Var> Probe::parameters() const {
  if (cfg_.hidden == 0) return {w1_, b1_};
  return {w1_, b1_, w2_, b2_};
}

namespace {

nd::Tensor gather(const nd::Tensor& t, const std::vector<std::int64_t>& rows,
                  std::int64_t begin, std::int64_t count) {
  const std::int64_t d = t.shape()[1];
  nd::Tensor out({count, d});
  float* po = out.mutable_data();
  const float* pt = t.data();
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t r = rows[static_cast<std::size_t>(begin + i)];
    std::copy(pt + r * d, pt + (r + 1) * d, po + i * d);
  }
  return out;
}

nd::Var batch_loss(const Probe& probe, const nd::Tensor& x,
                   const nd::Tensor& y, ProbeKind kind) {
  const auto out = probe.forward(nd::constant(x));
  const float inv_b = 1.0f / static_cast<float>(x.shape()[0]);
  if (kind == ProbeKind::kClassification) {
    const auto log_p =
        nd::log(nd::clamp_min(nd::softmax(out, 1), 1e-8f));
    return nd::scale(nd::sum_all(nd::mul(nd::constant(y), log_p)), -inv_b);
  }
  return nd::scale(nd::sum_all(nd::square(nd::sub(out, nd::constant(y)))),
                   inv_b);
}

// Flips each 4-wide row onto the w >= 0 hemisphere (first nonzero of the
// vector part decides when w == 0).
nd::Tensor canonical_rows(const nd::Tensor& t) {
  nd::Tensor out = t;
  const std::int64_t n = t.shape()[0];
  float* d = out.mutable_data();
  for (std::int64_t i = 0; i < n; ++i) {
    float* row = d + i * 4;
    bool flip = row[0] < 0.0f;
    if (row[0] == 0.0f) {
      for (int k = 1; k < 4; ++k) {
        if (row[k] != 0.0f) {
          flip = row[k] < 0.0f;
          break;
        }
      }
    }
    if (flip) {
      for (int k = 0; k < 4; ++k) row[k] = -row[k];
    }
  }
  return out;
}

}  // namespace

Probe train_probe(const nd::Tensor& inputs, const nd::Tensor& targets,
                  ProbeKind kind, const ProbeConfig& cfg) {
  if (inputs.shape().size() != 2 || inputs.shape()[1] != cfg.in_dim) {
    throw ConfigError("probe inputs must be (N, " + std::to_string(cfg.in_dim) +
                      "), got " + shape_str(inputs.shape()));
  }
  if (targets.shape().size() != 2 || targets.shape()[0] != inputs.shape()[0] ||
      targets.shape()[1] != cfg.out_dim) {
    throw ConfigError("probe targets must be (" +
                      std::to_string(inputs.shape()[0]) + ", " +
                      std::to_string(cfg.out_dim) + "), got " +
                      shape_str(targets.shape()));
  }
  const std::int64_t n = inputs.shape()[0];

  nd::Rng rng(cfg.seed);
  Probe probe(cfg, rng);
  nd::Adam opt(probe.parameters(), cfg.adam);

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::int64_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::int64_t>(rng.uniform_int(i + 1));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }
    for (std::int64_t begin = 0; begin < n; begin += cfg.batch) {
      const std::int64_t count = std::min(cfg.batch, n - begin);
      const nd::Tensor x = gather(inputs, order, begin, count);
      const nd::Tensor y = gather(targets, order, begin, count);
      const auto loss = batch_loss(probe, x, y, kind);
      opt.zero_grad();
      nd::backward(loss);
      opt.step();
    }
  }
  return probe;
}

nd::Tensor one_hot(const std::vector<std::int64_t>& labels, std::int64_t k) {
  nd::Tensor out({static_cast<std::int64_t>(labels.size()), k});
  float* d = out.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ParamError("one_hot label " + std::to_string(labels[i]) +
                       " out of range for " + std::to_string(k) + " classes");
    }
    d[static_cast<std::int64_t>(i) * k + labels[i]] = 1.0f;
  }
  return out;
}

double classification_accuracy(const Probe& probe, const nd::Tensor& inputs,
                               const std::vector<std::int64_t>& labels) {
  if (static_cast<std::int64_t>(labels.size()) != inputs.shape()[0]) {
    throw DimError("classification_accuracy: " +
                   std::to_string(labels.size()) + " labels for " +
                   std::to_string(inputs.shape()[0]) + " rows");
  }
  const nd::Tensor logits = probe.forward(nd::constant(inputs)).value();
  const std::int64_t k = logits.shape()[1];
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < logits.shape()[0]; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < k; ++j) {
      if (logits.at({i, j}) > logits.at({i, best})) best = j;
    }
    if (best == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.shape()[0]);
}

double regression_r2(const Probe& probe, const nd::Tensor& inputs,
                     const nd::Tensor& targets) {
  const nd::Tensor preds = probe.forward(nd::constant(inputs)).value();
  return r_squared(targets, preds);
}

double quaternion_r2(const Probe& probe, const nd::Tensor& inputs,
                     const nd::Tensor& targets) {
  if (targets.shape().size() != 2 || targets.shape()[1] != 4) {
    throw DimError("quaternion_r2 targets must be (N, 4), got " +
                   shape_str(targets.shape()));
  }
  const nd::Tensor preds = probe.forward(nd::constant(inputs)).value();
  return r_squared(canonical_rows(targets), canonical_rows(preds));
}

ProbeConfig desk_classification_probe(std::int64_t in_dim, std::int64_t k) {
  ProbeConfig cfg;
  cfg.in_dim = in_dim;
  cfg.out_dim = k;
  cfg.epochs = 100;
  cfg.seed = 11;
  return cfg;
}

ProbeConfig desk_rotation_probe(std::int64_t in_dim) {
  ProbeConfig cfg;
  cfg.in_dim = in_dim;
  cfg.out_dim = 4;
  cfg.epochs = 100;
  cfg.seed = 12;
  return cfg;
}

ProbeConfig desk_colour_probe(std::int64_t in_dim) {
  ProbeConfig cfg;
  cfg.in_dim = in_dim;
  cfg.out_dim = 4;
  cfg.epochs = 17;
  cfg.seed = 13;
  return cfg;
}

}  // namespace capsrep::eval
