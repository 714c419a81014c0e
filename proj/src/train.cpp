#include "capsrep/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "capsrep/ops.hpp"
#include "capsrep/probes.hpp"
#include "capsrep/util.hpp"

namespace capsrep::train {

namespace {

// Salts for the independent deterministic streams derived from the run seed.
constexpr std::uint64_t kNetSalt = 101;
constexpr std::uint64_t kPredictorSalt = 102;
constexpr std::uint64_t kSplitSalt = 103;
constexpr std::uint64_t kPairSalt = 0x50414952;  // per-epoch view pairing
constexpr std::uint64_t kEvalSalt = 0x4556414C;  // per-epoch probe streams

constexpr std::int64_t kOnlineProbeEpochs = 30;
constexpr std::int64_t kOnlinePairCap = 2000;

void reject_unknown(const nlohmann::json& j,
                    const std::set<std::string>& allowed, const char* scope) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end()) {
      throw ConfigError(std::string("unknown ") + scope + " key '" + key +
                        "'");
    }
  }
}

std::string projector_name(ProjectorKind kind) {
  return kind == ProjectorKind::kCapsule ? "capsule" : "split-mlp-baseline";
}

ProjectorKind projector_from_name(const std::string& name) {
  if (name == "capsule") return ProjectorKind::kCapsule;
  if (name == "split-mlp-baseline") return ProjectorKind::kSplitMlp;
  throw ConfigError("unknown projector kind '" + name +
                    "' (expected \"capsule\" or \"split-mlp-baseline\")");
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.batch < 2) {
    throw ConfigError("batch size must be at least 2, got " +
                      std::to_string(cfg.batch));
  }
  if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
  if (cfg.n_caps < 1) throw ConfigError("n_caps must be positive");
  if (cfg.pairs_per_object < 1) {
    throw ConfigError("pairs_per_object must be positive");
  }
  if (cfg.eval_cadence < 0) throw ConfigError("eval_cadence must be >= 0");
  if (cfg.checkpoint_every < 0) {
    throw ConfigError("checkpoint_every must be >= 0");
  }
  if (cfg.split_hidden < 1) throw ConfigError("split_hidden must be positive");
  if (!(cfg.adam.lr > 0.0f) || !std::isfinite(cfg.adam.lr)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  const float lambdas[] = {cfg.weights.lambda_inv, cfg.weights.lambda_equi,
                           cfg.weights.lambda_v, cfg.weights.lambda_c};
  for (const float l : lambdas) {
    if (!std::isfinite(l) || l < 0.0f) {
      throw ConfigError("loss weights must be finite and non-negative");
    }
  }
  if (cfg.encoder.stages.empty()) {
    throw ConfigError("encoder needs at least one stage");
  }
  if (cfg.encoder.in_channels < 1 || cfg.encoder.image_size < 1) {
    throw ConfigError("encoder input dims must be positive");
  }
}

std::string train_config_json(const TrainConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cfg.encoder.stages) {
    stages.push_back({s.out_channels, s.kernel, s.stride, s.padding});
  }
  const nlohmann::json j{
      {"dataset_path", cfg.dataset_path},
      {"n_caps", cfg.n_caps},
      {"epochs", cfg.epochs},
      {"batch", cfg.batch},
      {"pairs_per_object", cfg.pairs_per_object},
      {"seed", cfg.seed},
      {"weights",
       {{"lambda_inv", cfg.weights.lambda_inv},
        {"lambda_equi", cfg.weights.lambda_equi},
        {"lambda_v", cfg.weights.lambda_v},
        {"lambda_c", cfg.weights.lambda_c},
        {"symmetrize", cfg.weights.symmetrize}}},
      {"adam",
       {{"lr", cfg.adam.lr},
        {"beta1", cfg.adam.beta1},
        {"beta2", cfg.adam.beta2},
        {"eps", cfg.adam.eps}}},
      {"eval_cadence", cfg.eval_cadence},
      {"checkpoint_every", cfg.checkpoint_every},
      {"projector", projector_name(cfg.projector)},
      {"split_hidden", cfg.split_hidden},
      {"encoder",
       {{"in_channels", cfg.encoder.in_channels},
        {"image_size", cfg.encoder.image_size},
        {"stages", stages}}}};
  return j.dump();
}

TrainConfig parse_train_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") +
                      e.what());
  }
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");

  TrainConfig cfg;
  try {
    reject_unknown(j,
                   {"dataset_path", "n_caps", "epochs", "batch",
                    "pairs_per_object", "seed", "weights", "adam",
                    "eval_cadence", "checkpoint_every", "projector",
                    "split_hidden", "encoder"},
                   "train config");
    if (!j.contains("seed")) {
      throw ConfigError("train config must set \"seed\"");
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("dataset_path")) {
      cfg.dataset_path = j.at("dataset_path").get<std::string>();
    }
    if (j.contains("n_caps")) cfg.n_caps = j.at("n_caps").get<std::int64_t>();
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::int64_t>();
    if (j.contains("batch")) cfg.batch = j.at("batch").get<std::int64_t>();
    if (j.contains("pairs_per_object")) {
      cfg.pairs_per_object = j.at("pairs_per_object").get<std::int64_t>();
    }
    if (j.contains("eval_cadence")) {
      cfg.eval_cadence = j.at("eval_cadence").get<std::int64_t>();
    }
    if (j.contains("checkpoint_every")) {
      cfg.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
    }
    if (j.contains("projector")) {
      cfg.projector =
          projector_from_name(j.at("projector").get<std::string>());
    }
    if (j.contains("split_hidden")) {
      cfg.split_hidden = j.at("split_hidden").get<std::int64_t>();
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      reject_unknown(w,
                     {"lambda_inv", "lambda_equi", "lambda_v", "lambda_c",
                      "symmetrize"},
                     "weights");
      if (w.contains("lambda_inv")) {
        cfg.weights.lambda_inv = w.at("lambda_inv").get<float>();
      }
      if (w.contains("lambda_equi")) {
        cfg.weights.lambda_equi = w.at("lambda_equi").get<float>();
      }
      if (w.contains("lambda_v")) {
        cfg.weights.lambda_v = w.at("lambda_v").get<float>();
      }
      if (w.contains("lambda_c")) {
        cfg.weights.lambda_c = w.at("lambda_c").get<float>();
      }
      if (w.contains("symmetrize")) {
        cfg.weights.symmetrize = w.at("symmetrize").get<bool>();
      }
    }
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      reject_unknown(a, {"lr", "beta1", "beta2", "eps"}, "adam");
      if (a.contains("lr")) cfg.adam.lr = a.at("lr").get<float>();
      if (a.contains("beta1")) cfg.adam.beta1 = a.at("beta1").get<float>();
      if (a.contains("beta2")) cfg.adam.beta2 = a.at("beta2").get<float>();
      if (a.contains("eps")) cfg.adam.eps = a.at("eps").get<float>();
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      reject_unknown(e, {"in_channels", "image_size", "stages"}, "encoder");
      if (e.contains("in_channels")) {
        cfg.encoder.in_channels = e.at("in_channels").get<std::int64_t>();
      }
      if (e.contains("image_size")) {
        cfg.encoder.image_size = e.at("image_size").get<std::int64_t>();
      }
      if (e.contains("stages")) {
        cfg.encoder.stages.clear();
        for (const auto& s : e.at("stages")) {
          if (!s.is_array() || s.size() != 4) {
            throw ConfigError("encoder stage must be [out_channels, kernel, "
                              "stride, padding]");
          }
          caps::ConvStage stage;
          stage.out_channels = s.at(0).get<std::int64_t>();
          stage.kernel = s.at(1).get<int>();
          stage.stride = s.at(2).get<int>();
          stage.padding = s.at(3).get<int>();
          cfg.encoder.stages.push_back(stage);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

std::uint64_t train_config_hash(const TrainConfig& cfg) {
  const std::string canonical = train_config_json(cfg);
  return util::fnv1a64(canonical.data(), canonical.size());
}

Model::Model(const TrainConfig& cfg) : kind_(cfg.projector) {
  validate(cfg);
  if (kind_ == ProjectorKind::kCapsule) {
    caps::NetworkConfig nc;
    nc.encoder = cfg.encoder;
    nc.n_caps = cfg.n_caps;
    capsule_.emplace(nc, nd::mix_seed(cfg.seed, kNetSalt));
    act_dim_ = capsule_->act_dim();
    pose_dim_ = capsule_->pose_dim();
  } else {
    nd::Rng enc_rng(nd::mix_seed(cfg.seed, kNetSalt));
    encoder_.emplace(cfg.encoder, enc_rng);
    flat_dim_ = encoder_->out_channels() * encoder_->out_size() *
                encoder_->out_size();
    const std::int64_t out_dim = cfg.n_caps * caps::kPoseDim;
    nd::Rng split_rng(nd::mix_seed(cfg.seed, kSplitSalt));
    split_.emplace(flat_dim_, cfg.split_hidden, out_dim, split_rng);
    act_dim_ = out_dim;
    pose_dim_ = out_dim;
  }
  nd::Rng pred_rng(nd::mix_seed(cfg.seed, kPredictorSalt));
  predictor_.emplace(pose_dim_, pred_rng);
}

Model::Embeddings Model::forward(const nd::Var& images) const {
  Embeddings out;
  if (kind_ == ProjectorKind::kCapsule) {
    const auto net_out = capsule_->forward(images);
    out.z_act = net_out.z_act;
    out.z_pose = net_out.z_pose;
    return out;
  }
  const nd::Var features = encoder_->forward(images);
  const nd::Var flat =
      nd::reshape(features, {images.shape()[0], flat_dim_});
  const auto [z_inv, z_equi] = split_->forward(flat);
  out.z_act = nd::softmax(z_inv, 1);
  out.z_pose = z_equi;
  return out;
}

std::vector<std::pair<std::string, nd::Var>> Model::named_parameters() const {
  std::vector<std::pair<std::string, nd::Var>> params;
  if (kind_ == ProjectorKind::kCapsule) {
    params = capsule_->named_parameters();
  } else {
    params = encoder_->named_parameters();
    for (auto& p : split_->named_parameters()) params.push_back(std::move(p));
  }
  for (auto& p : predictor_->named_parameters()) {
    params.push_back(std::move(p));
  }
  return params;
}

std::vector<nd::Var> Model::parameters() const {
  std::vector<nd::Var> out;
  for (auto& [name, var] : named_parameters()) out.push_back(var);
  return out;
}

std::uint64_t Model::parameter_checksum() const {
  std::vector<std::uint8_t> bytes;
  for (const auto& [name, var] : named_parameters()) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(var.value().data());
    bytes.insert(bytes.end(), raw,
                 raw + sizeof(float) * static_cast<std::size_t>(var.numel()));
  }
  return util::fnv1a64(bytes.data(), bytes.size());
}

eval::EmbeddingTable Model::embed(const data::DatasetArchive& archive,
                                  std::int64_t batch_size) const {
  const eval::ForwardFn fn = [this](const nd::Tensor& images) {
    const Embeddings out = forward(nd::constant(images));
    return std::make_pair(out.z_act.value(), out.z_pose.value());
  };
  return eval::embed_archive(fn, act_dim_, pose_dim_, archive, batch_size);
}

CheckpointState capture_checkpoint(const TrainConfig& cfg, const Model& model,
                                   const nd::Adam& opt, std::int64_t epoch,
                                   std::int64_t step,
                                   const std::string& rng_state) {
  CheckpointState state;
  state.config_json = train_config_json(cfg);
  state.config_hash = train_config_hash(cfg);
  state.epoch = epoch;
  state.step = step;
  state.adam_t = opt.step_count();
  state.rng_state = rng_state;

  const auto named = model.named_parameters();
  const auto& moments = opt.moments();
  if (moments.size() != named.size()) {
    throw ContractError("optimizer tracks " + std::to_string(moments.size()) +
                        " tensors but the model has " +
                        std::to_string(named.size()));
  }
  state.blocks.reserve(named.size() * 3);
  for (const auto& [name, var] : named) {
    state.blocks.emplace_back(name, var.value());
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    state.blocks.emplace_back("adam.m:" + named[i].first, moments[i].m);
    state.blocks.emplace_back("adam.v:" + named[i].first, moments[i].v);
  }
  return state;
}

void restore_model(Model& model, const CheckpointState& state) {
  for (const auto& [name, var] : model.named_parameters()) {
    const nd::Tensor& block = state.block(name);
    if (!block.same_shape(var.value())) {
      throw ConfigError("checkpoint block '" + name + "' has shape " +
                        shape_str(block.shape()) + ", model expects " +
                        shape_str(var.value().shape()));
    }
    var.assign_value(block);
  }
}

void restore_optimizer(nd::Adam& opt, const Model& model,
                       const CheckpointState& state) {
  std::vector<nd::AdamMoments> moments;
  for (const auto& [name, var] : model.named_parameters()) {
    (void)var;
    nd::AdamMoments m;
    m.m = state.block("adam.m:" + name);
    m.v = state.block("adam.v:" + name);
    moments.push_back(std::move(m));
  }
  opt.restore(std::move(moments), state.adam_t);
}

Model model_from_checkpoint(const CheckpointState& state) {
  const TrainConfig cfg = parse_train_config(state.config_json);
  if (train_config_hash(cfg) != state.config_hash) {
    throw ConfigError("checkpoint config hash mismatch");
  }
  Model model(cfg);
  restore_model(model, state);
  return model;
}

ViewSplit split_archive_rows(const data::DatasetArchive& archive) {
  ViewSplit split;
  const auto views =
      static_cast<std::int64_t>(archive.manifest.views_per_object);
  const std::int64_t val_count =
      views >= 2 ? std::max<std::int64_t>(1, views / 4) : 0;
  for (std::int64_t o = 0; o < archive.n_objects(); ++o) {
    for (std::int64_t v = 0; v < views; ++v) {
      const std::int64_t row = o * views + v;
      if (v >= views - val_count) {
        split.val_rows.push_back(row);
      } else {
        split.train_rows.push_back(row);
      }
    }
  }
  return split;
}

namespace {

std::int64_t pair_count(const eval::EmbeddingTable& table,
                        const std::vector<std::int64_t>& rows) {
  std::map<std::int64_t, std::int64_t> members;
  for (const std::int64_t r : rows) {
    ++members[table.object_ids[static_cast<std::size_t>(r)]];
  }
  std::int64_t pairs = 0;
  for (const auto& [obj, k] : members) pairs += k * (k - 1);
  return pairs;
}

eval::PairRegressionData cap_pair_rows(eval::PairRegressionData data,
                                       std::int64_t cap, std::uint64_t seed) {
  const std::int64_t m = data.inputs.shape()[0];
  if (m <= cap) return data;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = i;
  nd::Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(cap));
  eval::PairRegressionData out;
  out.inputs = eval::gather_rows(data.inputs, idx);
  out.targets = eval::gather_rows(data.targets, idx);
  return out;
}

std::vector<std::int64_t> labels_for(const eval::EmbeddingTable& table,
                                     const std::vector<std::int64_t>& rows) {
  std::vector<std::int64_t> labels;
  labels.reserve(rows.size());
  for (const std::int64_t r : rows) {
    labels.push_back(table.class_ids[static_cast<std::size_t>(r)]);
  }
  return labels;
}

}  // namespace

EvalPoint online_eval_point(const Model& model,
                            const data::DatasetArchive& archive,
                            std::int64_t epoch, std::uint64_t probe_seed) {
  EvalPoint point;
  point.epoch = epoch;

  const eval::EmbeddingTable table = model.embed(archive);
  const ViewSplit split = split_archive_rows(archive);
  const auto& train_rows = split.train_rows;
  const auto& eval_rows =
      split.val_rows.empty() ? split.train_rows : split.val_rows;

  const auto classes = static_cast<std::int64_t>(archive.manifest.classes);
  eval::ProbeConfig ccfg;
  ccfg.in_dim = model.act_dim();
  ccfg.out_dim = classes;
  ccfg.epochs = kOnlineProbeEpochs;
  ccfg.seed = nd::mix_seed(probe_seed, 1);
  const eval::Probe cls_probe = eval::train_probe(
      eval::gather_rows(table.act, train_rows),
      eval::one_hot(labels_for(table, train_rows), classes),
      eval::ProbeKind::kClassification, ccfg);
  point.classification_top1 = eval::classification_accuracy(
      cls_probe, eval::gather_rows(table.act, eval_rows),
      labels_for(table, eval_rows));

  if (pair_count(table, train_rows) > 0) {
    const auto& pair_eval_rows =
        pair_count(table, eval_rows) > 0 ? eval_rows : train_rows;
    const auto train_pairs =
        cap_pair_rows(eval::build_rotation_pairs(table, table.pose, train_rows),
                      kOnlinePairCap, nd::mix_seed(probe_seed, 2));
    const auto eval_pairs = cap_pair_rows(
        eval::build_rotation_pairs(table, table.pose, pair_eval_rows),
        kOnlinePairCap, nd::mix_seed(probe_seed, 3));
    eval::ProbeConfig rcfg;
    rcfg.in_dim = 2 * model.pose_dim();
    rcfg.out_dim = 4;
    rcfg.epochs = kOnlineProbeEpochs;
    rcfg.seed = nd::mix_seed(probe_seed, 4);
    const eval::Probe rot_probe =
        eval::train_probe(train_pairs.inputs, train_pairs.targets,
                          eval::ProbeKind::kRegression, rcfg);
    point.rotation_r2 =
        eval::quaternion_r2(rot_probe, eval_pairs.inputs, eval_pairs.targets);
    point.has_rotation = true;
  }
  return point;
}

namespace {

nlohmann::json step_record(std::int64_t step, std::int64_t epoch,
                           std::int64_t batch_index, float lr,
                           const obj::LossBreakdown& parts) {
  return nlohmann::json{{"type", "step"},
                        {"step", step},
                        {"epoch", epoch},
                        {"batch", batch_index},
                        {"lr", static_cast<double>(lr)},
                        {"total", parts.total},
                        {"invariant_ce", parts.invariant_ce},
                        {"mean_entropy_a", parts.mean_entropy_a},
                        {"mean_entropy_b", parts.mean_entropy_b},
                        {"equivariant_mse", parts.equivariant_mse},
                        {"var_reg_a", parts.var_reg_a},
                        {"var_reg_b", parts.var_reg_b},
                        {"cov_reg_a", parts.cov_reg_a},
                        {"cov_reg_b", parts.cov_reg_b},
                        {"predictor_var_reg", parts.predictor_var_reg}};
}

std::string components_suffix(const obj::LossBreakdown& parts) {
  std::ostringstream os;
  os << " [components: invariant_ce=" << parts.invariant_ce
     << ", mean_entropy_a=" << parts.mean_entropy_a
     << ", mean_entropy_b=" << parts.mean_entropy_b
     << ", equivariant_mse=" << parts.equivariant_mse
     << ", var_reg_a=" << parts.var_reg_a << ", var_reg_b=" << parts.var_reg_b
     << ", cov_reg_a=" << parts.cov_reg_a << ", cov_reg_b=" << parts.cov_reg_b
     << ", predictor_var_reg=" << parts.predictor_var_reg
     << ", total=" << parts.total << "]";
  return os.str();
}

TrainResult run_loop(const TrainConfig& cfg,
                     const data::DatasetArchive& archive, Model& model,
                     nd::Adam& opt, std::int64_t start_epoch,
                     std::int64_t start_step, nd::Rng first_epoch_rng,
                     const CheckpointSink& on_checkpoint) {
  if (archive.records.empty()) {
    throw ParamError("pretrain needs a non-empty archive");
  }
  if (start_epoch > cfg.epochs) {
    throw ConfigError("checkpoint is at epoch " + std::to_string(start_epoch) +
                      ", past the configured " + std::to_string(cfg.epochs));
  }

  TrainResult result;
  std::int64_t step = start_step;
  const std::int64_t n_pairs = archive.n_objects() * cfg.pairs_per_object;

  for (std::int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    nd::Rng pair_rng =
        epoch == start_epoch
            ? first_epoch_rng
            : nd::Rng(nd::mix_seed(cfg.seed,
                                   kPairSalt + static_cast<std::uint64_t>(epoch)));
    std::vector<data::TrainingPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n_pairs));
    for (std::int64_t i = 0; i < n_pairs; ++i) {
      pairs.push_back(data::sample_training_pair(archive, pair_rng));
    }

    std::int64_t batch_index = 0;
    for (std::int64_t begin = 0; begin < n_pairs; begin += cfg.batch) {
      const std::int64_t count = std::min(cfg.batch, n_pairs - begin);
      if (count < 2) break;  // variance terms need two samples

      std::vector<std::int64_t> rows_a, rows_b;
      std::vector<rot::Quat> rels;
      rows_a.reserve(static_cast<std::size_t>(count));
      rows_b.reserve(static_cast<std::size_t>(count));
      rels.reserve(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(begin + i)];
        rows_a.push_back(p.index_a);
        rows_b.push_back(p.index_b);
        rels.push_back(p.g_rel);
      }

      obj::LossBreakdown parts;
      bool have_parts = false;
      try {
        const nd::Var images_a =
            nd::constant(eval::stack_images(archive, rows_a));
        const nd::Var images_b =
            nd::constant(eval::stack_images(archive, rows_b));
        const nd::Var g = nd::constant(pred::pack_quaternions(rels));

        const Model::Embeddings fa = model.forward(images_a);
        const Model::Embeddings fb = model.forward(images_b);
        const nd::Var predicted = model.predictor().predict(fa.z_pose, g);
        const obj::TotalLoss loss =
            obj::total_loss(fa.z_act, fb.z_act, fa.z_pose, fb.z_pose,
                            predicted, cfg.weights);
        parts = loss.parts;
        have_parts = true;

        opt.zero_grad();
        nd::backward(loss.total);
        opt.step();
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "pretrain aborted by non-finite values at epoch " << epoch
            << ", optimizer step " << step + 1 << ", batch " << batch_index
            << ": " << e.what();
        if (have_parts) msg << components_suffix(parts);
        throw NumericError(msg.str());
      }

      ++step;
      result.log_lines.push_back(
          step_record(step, epoch, batch_index, cfg.adam.lr, parts).dump());
      ++batch_index;
    }

    if (cfg.eval_cadence > 0 && (epoch + 1) % cfg.eval_cadence == 0) {
      const EvalPoint point = online_eval_point(
          model, archive, epoch,
          nd::mix_seed(cfg.seed, kEvalSalt + static_cast<std::uint64_t>(epoch)));
      nlohmann::json record{{"type", "eval"},
                            {"epoch", point.epoch},
                            {"classification_top1", point.classification_top1}};
      if (point.has_rotation) {
        record["rotation_r2"] = point.rotation_r2;
      } else {
        record["rotation_r2"] = nullptr;
      }
      result.log_lines.push_back(record.dump());
      result.eval_series.push_back(point);
    }

    const bool final_epoch = epoch + 1 == cfg.epochs;
    if (!final_epoch && on_checkpoint && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0) {
      const std::string next_rng =
          nd::Rng(nd::mix_seed(cfg.seed, kPairSalt +
                                             static_cast<std::uint64_t>(epoch + 1)))
              .serialize();
      on_checkpoint(
          capture_checkpoint(cfg, model, opt, epoch + 1, step, next_rng));
    }
  }

  const std::string end_rng =
      nd::Rng(nd::mix_seed(
                  cfg.seed,
                  kPairSalt + static_cast<std::uint64_t>(cfg.epochs)))
          .serialize();
  result.state =
      capture_checkpoint(cfg, model, opt, cfg.epochs, step, end_rng);
  return result;
}

}  // namespace

TrainResult pretrain(const TrainConfig& cfg,
                     const data::DatasetArchive& archive,
                     const CheckpointSink& on_checkpoint) {
  validate(cfg);
  Model model(cfg);
  nd::Adam opt(model.parameters(), cfg.adam);
  nd::Rng first(nd::mix_seed(cfg.seed, kPairSalt));
  return run_loop(cfg, archive, model, opt, 0, 0, first, on_checkpoint);
}

TrainResult resume_pretrain(const CheckpointState& from,
                            const data::DatasetArchive& archive,
                            const CheckpointSink& on_checkpoint) {
  const TrainConfig cfg = parse_train_config(from.config_json);
  if (train_config_hash(cfg) != from.config_hash) {
    throw ConfigError("checkpoint config hash mismatch");
  }
  Model model(cfg);
  restore_model(model, from);
  nd::Adam opt(model.parameters(), cfg.adam);
  restore_optimizer(opt, model, from);
  nd::Rng first = nd::Rng::deserialize(from.rng_state);
  return run_loop(cfg, archive, model, opt, from.epoch, from.step, first,
                  on_checkpoint);
}

std::vector<SweepRow> capsule_sweep(const TrainConfig& base,
                                    const std::vector<std::int64_t>& caps_list,
                                    const data::DatasetArchive& archive) {
  if (caps_list.empty()) {
    throw ParamError("capsule_sweep needs at least one capsule count");
  }
  const std::uint64_t checksum = data::archive_checksum(archive);

  std::vector<SweepRow> rows;
  rows.reserve(caps_list.size());
  for (const std::int64_t n : caps_list) {
    TrainConfig cfg = base;
    cfg.n_caps = n;
    const TrainResult result = pretrain(cfg, archive);

    EvalPoint point;
    if (!result.eval_series.empty() &&
        result.eval_series.back().epoch == cfg.epochs - 1) {
      point = result.eval_series.back();
    } else {
      Model model = model_from_checkpoint(result.state);
      point = online_eval_point(
          model, archive, cfg.epochs - 1,
          nd::mix_seed(cfg.seed,
                       kEvalSalt + static_cast<std::uint64_t>(cfg.epochs - 1)));
    }

    SweepRow row;
    row.n_caps = n;
    row.pose_dim = n * caps::kPoseDim;
    row.dataset_checksum = checksum;
    row.classification_top1 = point.classification_top1;
    row.rotation_r2 = point.rotation_r2;
    row.has_rotation = point.has_rotation;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace capsrep::train
