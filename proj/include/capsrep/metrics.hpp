#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capsrep/errors.hpp"
#include "capsrep/rotations.hpp"
#include "capsrep/tensor.hpp"

namespace capsrep::eval {

// 1 - sum((y - yhat)^2) / sum((y - colmean(y))^2), summed over all entries.
// Negative when the fit is worse than the column-mean baseline.
double r_squared(const nd::Tensor& y, const nd::Tensor& y_hat);

// Frozen per-view embeddings plus the latent factors each probe needs.
struct EmbeddingTable {
  nd::Tensor act;   // (N, K) routed activations
  nd::Tensor pose;  // (N, D) flattened routed poses
  std::vector<std::int64_t> object_ids;
  std::vector<std::int64_t> view_ids;
  std::vector<std::int64_t> class_ids;
  std::vector<rot::Quat> rotations;
  std::vector<float> floor_hues;
  std::vector<float> light_hues;

  std::int64_t size() const {
    return static_cast<std::int64_t>(object_ids.size());
  }
};

// Batched prediction hook: pose rows (M, D) and quaternions (M, 4) -> (M, D).
using PredictFn = std::function<nd::Tensor(const nd::Tensor&, const nd::Tensor&)>;

struct RetrievalReport {
  double mrr = 0.0;
  double h_at_1 = 0.0;
  double h_at_5 = 0.0;
  double pre = 0.0;
  std::int64_t n_pairs = 0;
  std::int64_t skipped_objects = 0;  // objects that yielded no (source, target) pair
  std::string source_split;
  std::string retrieval_split;
};

// For every ordered (source, target) view pair of an object: predict the
// target pose embedding from the source via `predict`, rank the true target
// among the object's gallery views by Euclidean distance (ties broken by
// ascending view index; the source view competes as a regular candidate),
// and score the nearest neighbour's rotation against the target's.
RetrievalReport retrieval_metrics(const EmbeddingTable& table,
                                  const PredictFn& predict,
                                  const std::vector<std::int64_t>& source_rows,
                                  const std::vector<std::int64_t>& gallery_rows,
                                  std::string source_split,
                                  std::string retrieval_split);

}  // namespace capsrep::eval
