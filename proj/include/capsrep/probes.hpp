#pragma once

#include <cstdint>
#include <vector>

#include "capsrep/autograd.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/optim.hpp"
#include "capsrep/rng.hpp"
#include "capsrep/tensor.hpp"

namespace capsrep::eval {

enum class ProbeKind { kClassification, kRegression };

struct ProbeConfig {
  std::int64_t in_dim = 0;
  std::int64_t out_dim = 0;
  std::int64_t hidden = 0;  // 0 = single linear layer, else MLP hidden width
  std::int64_t epochs = 100;
  std::int64_t batch = 64;
  nd::AdamConfig adam;
  std::uint64_t seed = 1;
};

// A shallow (linear) or deep (one hidden ReLU layer) head trained on frozen
// embeddings. Classification heads emit logits, regression heads raw values.
class Probe {
 public:
  Probe(const ProbeConfig& cfg, nd::Rng& rng);

  nd::Var forward(const nd::Var& x) const;
  std::vector<nd::Var> parameters() const;
  const ProbeConfig& config() const { return cfg_; }

 private:
  ProbeConfig cfg_;
  nd::Var w1_, b1_, w2_, b2_;  // w2_/b2_ undefined for shallow heads
};

// Minibatch Adam training. Classification expects one-hot targets (N, K)
// and uses softmax cross-entropy; regression uses mean squared error.
Probe train_probe(const nd::Tensor& inputs, const nd::Tensor& targets,
                  ProbeKind kind, const ProbeConfig& cfg);

nd::Tensor one_hot(const std::vector<std::int64_t>& labels, std::int64_t k);

// Fraction of rows whose argmax logit matches the label.
double classification_accuracy(const Probe& probe, const nd::Tensor& inputs,
                               const std::vector<std::int64_t>& labels);

double regression_r2(const Probe& probe, const nd::Tensor& inputs,
                     const nd::Tensor& targets);

// R^2 with every 4-wide row of targets and predictions sign-normalized to
// the w >= 0 hemisphere first, so the quaternion double cover cannot count
// a correct prediction as an error.
double quaternion_r2(const Probe& probe, const nd::Tensor& inputs,
                     const nd::Tensor& targets);

// Standard probe profiles for full (offline) evaluation runs. Epoch budgets
// are the reference protocol's divided by three; all use Adam at lr 1e-3.
ProbeConfig desk_classification_probe(std::int64_t in_dim, std::int64_t k);
ProbeConfig desk_rotation_probe(std::int64_t in_dim);
ProbeConfig desk_colour_probe(std::int64_t in_dim);

}  // namespace capsrep::eval
