#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "capsrep/dataset.hpp"
#include "capsrep/metrics.hpp"
#include "capsrep/network.hpp"

namespace capsrep::eval {

// Maps an image batch (B, C, H, W) to detached (act (B, K), pose (B, D))
// embedding values.
using ForwardFn =
    std::function<std::pair<nd::Tensor, nd::Tensor>(const nd::Tensor&)>;

// Copies the listed records into a (B, C, H, W) batch.
nd::Tensor stack_images(const data::DatasetArchive& archive,
                        const std::vector<std::int64_t>& rows);

// Row subset of a (N, d) matrix, in the given order.
nd::Tensor gather_rows(const nd::Tensor& t,
                       const std::vector<std::int64_t>& rows);

// Frozen forward pass over every record of the archive; embeddings are
// detached values, so probe training cannot reach the backbone.
EmbeddingTable embed_archive(const ForwardFn& forward, std::int64_t act_dim,
                             std::int64_t pose_dim,
                             const data::DatasetArchive& archive,
                             std::int64_t batch_size = 64);
EmbeddingTable embed_archive(const caps::CapsuleNetwork& net,
                             const data::DatasetArchive& archive,
                             std::int64_t batch_size = 64);

struct PairRegressionData {
  nd::Tensor inputs;   // (M, 2*d) source and target embeddings side by side
  nd::Tensor targets;  // (M, 4) relative rotation quaternion, w >= 0
};

// All ordered same-object view pairs drawn from `rows`, with embeddings
// taken from `emb` ((N, d): the table's act or pose matrix).
PairRegressionData build_rotation_pairs(const EmbeddingTable& table,
                                        const nd::Tensor& emb,
                                        const std::vector<std::int64_t>& rows);

// (N, 4) circular encoding (cos, sin) of floor hue and light hue.
nd::Tensor colour_targets(const EmbeddingTable& table);

}  // namespace capsrep::eval
