#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capsrep/checkpoint.hpp"
#include "capsrep/dataset.hpp"
#include "capsrep/embeddings.hpp"
#include "capsrep/losses.hpp"
#include "capsrep/network.hpp"
#include "capsrep/optim.hpp"
#include "capsrep/predictor.hpp"

namespace capsrep::train {

enum class ProjectorKind { kCapsule, kSplitMlp };

struct TrainConfig {
  std::string dataset_path;
  std::int64_t n_caps = 16;
  std::int64_t epochs = 100;
  std::int64_t batch = 128;
  std::int64_t pairs_per_object = 4;  // view pairs sampled per object per epoch
  std::uint64_t seed = 1;
  obj::LossWeights weights;
  nd::AdamConfig adam;
  std::int64_t eval_cadence = 0;      // epochs between online probe runs, 0 = off
  std::int64_t checkpoint_every = 0;  // epochs between snapshots, 0 = final only
  ProjectorKind projector = ProjectorKind::kCapsule;
  std::int64_t split_hidden = 512;  // hidden width of the baseline MLP heads
  caps::EncoderConfig encoder;
};

void validate(const TrainConfig& cfg);

// JSON round trip. "seed" is required; unknown keys are rejected so config
// typos fail loudly instead of silently using defaults.
TrainConfig parse_train_config(const std::string& json_text);
std::string train_config_json(const TrainConfig& cfg);
std::uint64_t train_config_hash(const TrainConfig& cfg);

// The trainable bundle: either the capsule network or the split-MLP baseline
// (encoder + two independent heads), plus the rotation-conditioned predictor
// over the pose embedding. The baseline's invariant head is softmaxed so both
// projector kinds feed the same objective.
class Model {
 public:
  explicit Model(const TrainConfig& cfg);

  struct Embeddings {
    nd::Var z_act;   // (B, K) on the simplex
    nd::Var z_pose;  // (B, D)
  };
  Embeddings forward(const nd::Var& images) const;

  std::int64_t act_dim() const { return act_dim_; }
  std::int64_t pose_dim() const { return pose_dim_; }
  ProjectorKind kind() const { return kind_; }
  const pred::HyperPredictor& predictor() const { return *predictor_; }
  const caps::CapsuleNetwork* capsule_net() const {
    return capsule_ ? &*capsule_ : nullptr;
  }

  std::vector<std::pair<std::string, nd::Var>> named_parameters() const;
  std::vector<nd::Var> parameters() const;
  std::uint64_t parameter_checksum() const;

  eval::EmbeddingTable embed(const data::DatasetArchive& archive,
                             std::int64_t batch_size = 64) const;

 private:
  ProjectorKind kind_ = ProjectorKind::kCapsule;
  std::optional<caps::CapsuleNetwork> capsule_;
  std::optional<caps::Encoder> encoder_;  // baseline path
  std::optional<caps::SplitMlpProjector> split_;
  std::optional<pred::HyperPredictor> predictor_;
  std::int64_t act_dim_ = 0, pose_dim_ = 0, flat_dim_ = 0;
};

CheckpointState capture_checkpoint(const TrainConfig& cfg, const Model& model,
                                   const nd::Adam& opt, std::int64_t epoch,
                                   std::int64_t step,
                                   const std::string& rng_state);
void restore_model(Model& model, const CheckpointState& state);
void restore_optimizer(nd::Adam& opt, const Model& model,
                       const CheckpointState& state);
Model model_from_checkpoint(const CheckpointState& state);

// Per-object view split: the last quarter of each object's views (at least
// one, when there are at least two) is held out for probe evaluation.
struct ViewSplit {
  std::vector<std::int64_t> train_rows, val_rows;
};
ViewSplit split_archive_rows(const data::DatasetArchive& archive);

struct EvalPoint {
  std::int64_t epoch = 0;
  double classification_top1 = 0.0;
  double rotation_r2 = 0.0;
  bool has_rotation = false;  // false when no split has two views of an object
};

// Reduced-budget probes (shallow heads, 30 epochs, capped pair counts) used
// for the periodic curves during pretraining.
EvalPoint online_eval_point(const Model& model,
                            const data::DatasetArchive& archive,
                            std::int64_t epoch, std::uint64_t probe_seed);

struct TrainResult {
  CheckpointState state;               // snapshot after the final epoch
  std::vector<std::string> log_lines;  // JSON lines: step and eval records
  std::vector<EvalPoint> eval_series;
};

using CheckpointSink = std::function<void(const CheckpointState&)>;

TrainResult pretrain(const TrainConfig& cfg,
                     const data::DatasetArchive& archive,
                     const CheckpointSink& on_checkpoint = {});
TrainResult resume_pretrain(const CheckpointState& from,
                            const data::DatasetArchive& archive,
                            const CheckpointSink& on_checkpoint = {});

struct SweepRow {
  std::int64_t n_caps = 0;
  std::int64_t pose_dim = 0;
  std::uint64_t dataset_checksum = 0;
  double classification_top1 = 0.0;
  double rotation_r2 = 0.0;
  bool has_rotation = false;
};

// One pretrain per capsule count, identical seed and archive throughout,
// each scored by a final online-eval probe pass.
std::vector<SweepRow> capsule_sweep(const TrainConfig& base,
                                    const std::vector<std::int64_t>& caps_list,
                                    const data::DatasetArchive& archive);

}  // namespace capsrep::train
