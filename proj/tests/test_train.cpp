#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsrep/train.hpp"

using capsrep::data::DatasetArchive;
using capsrep::data::DatasetManifest;
using capsrep::nd::Tensor;
using capsrep::train::CheckpointState;
using capsrep::train::Model;
using capsrep::train::ProjectorKind;
using capsrep::train::TrainConfig;
using capsrep::train::TrainResult;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(float) * static_cast<std::size_t>(a.numel())) == 0;
}

DatasetArchive tiny_archive(std::uint64_t seed, std::uint32_t classes = 1,
                            std::uint32_t objects = 4,
                            std::uint32_t views = 3) {
  DatasetManifest m;
  m.classes = classes;
  m.objects_per_class = objects;
  m.views_per_object = views;
  m.height = 16;
  m.width = 16;
  m.seed = seed;
  return capsrep::data::generate_dataset(m);
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.n_caps = 2;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.pairs_per_object = 2;
  cfg.encoder.image_size = 16;
  cfg.encoder.stages = {{8, 3, 2, 1}, {8, 3, 2, 1}};
  return cfg;
}

const Tensor& find_block(const CheckpointState& state,
                         const std::string& name) {
  return state.block(name);
}

Tensor initial_value(const TrainConfig& cfg, const std::string& name) {
  const Model fresh(cfg);
  for (const auto& [n, var] : fresh.named_parameters()) {
    if (n == name) return var.value();
  }
  throw std::runtime_error("no parameter named " + name);
}

}  // namespace

TEST_CASE("config parsing applies defaults, demands a seed, rejects typos") {
  const TrainConfig cfg = capsrep::train::parse_train_config("{\"seed\": 7}");
  CHECK(cfg.seed == 7);
  CHECK(cfg.n_caps == 16);
  CHECK(cfg.epochs == 100);
  CHECK(cfg.batch == 128);
  CHECK(cfg.adam.lr == doctest::Approx(1e-3));
  CHECK(cfg.weights.lambda_inv == doctest::Approx(0.1));
  CHECK(cfg.weights.lambda_equi == doctest::Approx(5.0));
  CHECK(cfg.weights.lambda_v == doctest::Approx(10.0));
  CHECK(cfg.weights.lambda_c == doctest::Approx(1.0));
  CHECK(cfg.projector == ProjectorKind::kCapsule);

  CHECK_THROWS_AS(capsrep::train::parse_train_config("{}"),
                  capsrep::ConfigError);
  CHECK_THROWS_AS(
      capsrep::train::parse_train_config("{\"seed\": 1, \"epochz\": 3}"),
      capsrep::ConfigError);
  CHECK_THROWS_AS(
      capsrep::train::parse_train_config("{\"seed\": 1, \"batch\": 1}"),
      capsrep::ConfigError);
  CHECK_THROWS_AS(capsrep::train::parse_train_config(
                      "{\"seed\": 1, \"projector\": \"transformer\"}"),
                  capsrep::ConfigError);
  CHECK_THROWS_AS(capsrep::train::parse_train_config("seed: 1"),
                  capsrep::ConfigError);
}

TEST_CASE("config serialization round-trips and hashes are value-sensitive") {
  TrainConfig cfg = tiny_config(11);
  cfg.projector = ProjectorKind::kSplitMlp;
  cfg.weights.symmetrize = false;
  const std::string text = capsrep::train::train_config_json(cfg);
  const TrainConfig back = capsrep::train::parse_train_config(text);
  CHECK(capsrep::train::train_config_json(back) == text);
  CHECK(capsrep::train::train_config_hash(back) ==
        capsrep::train::train_config_hash(cfg));

  TrainConfig other = cfg;
  other.epochs += 1;
  CHECK(capsrep::train::train_config_hash(other) !=
        capsrep::train::train_config_hash(cfg));
}

TEST_CASE("view splits hold out the last quarter of each object's views") {
  const DatasetArchive a8 = tiny_archive(50, 1, 2, 8);
  const auto s8 = capsrep::train::split_archive_rows(a8);
  CHECK(s8.train_rows.size() == 12);
  CHECK(s8.val_rows.size() == 4);
  CHECK(s8.val_rows == std::vector<std::int64_t>{6, 7, 14, 15});

  const DatasetArchive a2 = tiny_archive(51, 1, 2, 2);
  const auto s2 = capsrep::train::split_archive_rows(a2);
  CHECK(s2.train_rows == std::vector<std::int64_t>{0, 2});
  CHECK(s2.val_rows == std::vector<std::int64_t>{1, 3});

  const DatasetArchive a3 = tiny_archive(52, 1, 1, 3);
  const auto s3 = capsrep::train::split_archive_rows(a3);
  CHECK(s3.train_rows == std::vector<std::int64_t>{0, 1});
  CHECK(s3.val_rows == std::vector<std::int64_t>{2});
}

TEST_CASE("a two-epoch smoke run completes and its checkpoint round-trips") {
  const DatasetArchive archive = tiny_archive(60);
  TrainConfig cfg = tiny_config(21);
  cfg.checkpoint_every = 1;

  std::vector<CheckpointState> snapshots;
  const TrainResult result = capsrep::train::pretrain(
      cfg, archive,
      [&snapshots](const CheckpointState& s) { snapshots.push_back(s); });

  // 4 objects x 2 pairs / batch 4 = 2 steps per epoch.
  CHECK(result.log_lines.size() == 4);
  CHECK(result.state.epoch == 2);
  CHECK(result.state.step == 4);
  CHECK(result.state.adam_t == 4);
  REQUIRE(snapshots.size() == 1);  // epoch 1 only; the final epoch is returned
  CHECK(snapshots[0].epoch == 1);
  CHECK(snapshots[0].step == 2);

  for (const std::string& line : result.log_lines) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("type") == "step");
    CHECK(j.contains("total"));
    CHECK(j.contains("invariant_ce"));
    CHECK(j.contains("equivariant_mse"));
    CHECK(j.contains("predictor_var_reg"));
    CHECK(std::isfinite(j.at("total").get<double>()));
  }

  const std::string path = "/tmp/capsrep_smoke.ckpt";
  capsrep::train::save_checkpoint(result.state, path);
  const CheckpointState loaded = capsrep::train::load_checkpoint(path);
  std::remove(path.c_str());
  CHECK(loaded.epoch == result.state.epoch);
  CHECK(loaded.step == result.state.step);
  CHECK(loaded.adam_t == result.state.adam_t);
  CHECK(loaded.rng_state == result.state.rng_state);
  CHECK(loaded.config_hash == result.state.config_hash);
  CHECK(loaded.config_json == result.state.config_json);
  REQUIRE(loaded.blocks.size() == result.state.blocks.size());
  for (std::size_t i = 0; i < loaded.blocks.size(); ++i) {
    CHECK(loaded.blocks[i].first == result.state.blocks[i].first);
    CHECK(bitwise_equal(loaded.blocks[i].second,
                        result.state.blocks[i].second));
  }

  // The checkpoint rebuilds a usable model.
  const Model model = capsrep::train::model_from_checkpoint(loaded);
  CHECK(model.act_dim() == 2);
  CHECK(model.pose_dim() == 32);
}

TEST_CASE("identical configs produce byte-identical logs and parameters") {
  const DatasetArchive archive = tiny_archive(61);
  const TrainConfig cfg = tiny_config(22);
  const TrainResult a = capsrep::train::pretrain(cfg, archive);
  const TrainResult b = capsrep::train::pretrain(cfg, archive);
  CHECK(a.log_lines == b.log_lines);
  REQUIRE(a.state.blocks.size() == b.state.blocks.size());
  for (std::size_t i = 0; i < a.state.blocks.size(); ++i) {
    CHECK(bitwise_equal(a.state.blocks[i].second, b.state.blocks[i].second));
  }

  TrainConfig other = cfg;
  other.seed = 23;
  const TrainResult c = capsrep::train::pretrain(other, archive);
  CHECK(a.log_lines != c.log_lines);
}

TEST_CASE("resuming from a checkpoint reproduces the rest of the run exactly") {
  const DatasetArchive archive = tiny_archive(62);
  TrainConfig cfg = tiny_config(24);
  cfg.epochs = 4;
  cfg.checkpoint_every = 2;

  const TrainResult full = capsrep::train::pretrain(cfg, archive);

  std::vector<CheckpointState> snapshots;
  capsrep::train::pretrain(cfg, archive, [&snapshots](const CheckpointState& s) {
    snapshots.push_back(s);
  });
  REQUIRE(snapshots.size() == 1);
  REQUIRE(snapshots[0].epoch == 2);

  // Round-trip the snapshot through bytes before resuming.
  const auto bytes = capsrep::train::serialize_checkpoint(snapshots[0]);
  const CheckpointState mid = capsrep::train::deserialize_checkpoint(bytes);

  const TrainResult resumed = capsrep::train::resume_pretrain(mid, archive);
  CHECK(resumed.state.epoch == 4);
  CHECK(resumed.state.step == full.state.step);

  // The resumed log must equal the tail of the uninterrupted log.
  REQUIRE(full.log_lines.size() == 8);
  REQUIRE(resumed.log_lines.size() == 4);
  for (std::size_t i = 0; i < resumed.log_lines.size(); ++i) {
    CHECK(resumed.log_lines[i] == full.log_lines[4 + i]);
  }

  REQUIRE(resumed.state.blocks.size() == full.state.blocks.size());
  for (std::size_t i = 0; i < resumed.state.blocks.size(); ++i) {
    CHECK(resumed.state.blocks[i].first == full.state.blocks[i].first);
    CHECK(bitwise_equal(resumed.state.blocks[i].second,
                        full.state.blocks[i].second));
  }
}

TEST_CASE("corrupted or mismatched checkpoints are rejected") {
  const DatasetArchive archive = tiny_archive(63);
  const TrainConfig cfg = tiny_config(25);
  const TrainResult result = capsrep::train::pretrain(cfg, archive);

  auto bytes = capsrep::train::serialize_checkpoint(result.state);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 8);
  CHECK_THROWS_AS(capsrep::train::deserialize_checkpoint(truncated),
                  capsrep::IoError);

  CheckpointState tampered = result.state;
  tampered.config_hash ^= 1;
  CHECK_THROWS_AS(capsrep::train::model_from_checkpoint(tampered),
                  capsrep::ConfigError);

  CheckpointState missing = result.state;
  missing.blocks.erase(missing.blocks.begin());  // drops encoder.w0
  missing.config_hash = result.state.config_hash;
  CHECK_THROWS_AS(
      [&] {
        Model model(cfg);
        capsrep::train::restore_model(model, missing);
      }(),
      capsrep::IoError);
}

TEST_CASE("zeroed pose-side weights freeze the pose-only parameters") {
  const DatasetArchive archive = tiny_archive(64);
  TrainConfig cfg = tiny_config(26);
  cfg.epochs = 1;
  cfg.weights.lambda_equi = 0.0f;
  cfg.weights.lambda_v = 0.0f;

  SUBCASE("equivariant and variance terms off: the predictor never moves") {
    const TrainResult r = capsrep::train::pretrain(cfg, archive);
    CHECK(bitwise_equal(find_block(r.state, "predictor.gen_w"),
                        initial_value(cfg, "predictor.gen_w")));
    CHECK(bitwise_equal(find_block(r.state, "predictor.gen_b"),
                        initial_value(cfg, "predictor.gen_b")));
    // The pose covariance term is still live, so pose routing still trains.
    CHECK_FALSE(bitwise_equal(find_block(r.state, "routing.w_pose"),
                              initial_value(cfg, "routing.w_pose")));
    CHECK_FALSE(bitwise_equal(find_block(r.state, "encoder.w0"),
                              initial_value(cfg, "encoder.w0")));
  }

  SUBCASE("covariance off as well: pose routing freezes too") {
    cfg.weights.lambda_c = 0.0f;
    const TrainResult r = capsrep::train::pretrain(cfg, archive);
    CHECK(bitwise_equal(find_block(r.state, "routing.w_pose"),
                        initial_value(cfg, "routing.w_pose")));
    CHECK(bitwise_equal(find_block(r.state, "predictor.gen_w"),
                        initial_value(cfg, "predictor.gen_w")));
    // The activation path still learns.
    CHECK_FALSE(bitwise_equal(find_block(r.state, "routing.w_route"),
                              initial_value(cfg, "routing.w_route")));
  }
}

TEST_CASE("diverging runs abort with the offending batch in the message") {
  const DatasetArchive archive = tiny_archive(65);
  TrainConfig cfg = tiny_config(27);
  cfg.epochs = 1;
  cfg.pairs_per_object = 4;  // several steps so the blow-up can land
  cfg.adam.lr = 1e20f;
  CHECK_THROWS_WITH_AS(capsrep::train::pretrain(cfg, archive),
                       doctest::Contains("epoch"), capsrep::NumericError);
}

TEST_CASE("online evaluation emits floor(epochs/cadence) points") {
  const DatasetArchive archive = tiny_archive(66, 2, 2, 4);
  TrainConfig cfg = tiny_config(28);
  cfg.epochs = 6;
  cfg.eval_cadence = 2;

  const TrainResult r = capsrep::train::pretrain(cfg, archive);
  REQUIRE(r.eval_series.size() == 3);
  CHECK(r.eval_series[0].epoch == 1);
  CHECK(r.eval_series[1].epoch == 3);
  CHECK(r.eval_series[2].epoch == 5);
  for (const auto& p : r.eval_series) {
    CHECK(p.classification_top1 >= 0.0);
    CHECK(p.classification_top1 <= 1.0);
    CHECK(p.has_rotation);
    CHECK(std::isfinite(p.rotation_r2));
  }

  std::int64_t eval_lines = 0;
  for (const std::string& line : r.log_lines) {
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.at("type") == "eval") {
      ++eval_lines;
      CHECK(j.contains("classification_top1"));
      CHECK(j.contains("rotation_r2"));
    }
  }
  CHECK(eval_lines == 3);

  TrainConfig odd = cfg;
  odd.epochs = 5;
  const TrainResult r5 = capsrep::train::pretrain(odd, archive);
  CHECK(r5.eval_series.size() == 2);
}

TEST_CASE("online probes never touch the model being evaluated") {
  const DatasetArchive archive = tiny_archive(67, 2, 2, 4);
  const TrainConfig cfg = tiny_config(29);
  const Model model(cfg);
  const std::uint64_t before = model.parameter_checksum();
  const auto point = capsrep::train::online_eval_point(model, archive, 0, 99);
  CHECK(model.parameter_checksum() == before);
  CHECK(point.classification_top1 >= 0.0);
}

TEST_CASE("activation usage stays spread after a short real run") {
  const DatasetArchive archive = tiny_archive(68, 2, 3, 4);
  TrainConfig cfg = tiny_config(30);
  cfg.n_caps = 4;
  cfg.epochs = 8;
  cfg.batch = 6;

  const TrainResult r = capsrep::train::pretrain(cfg, archive);
  const Model model = capsrep::train::model_from_checkpoint(r.state);
  const auto table = model.embed(archive);

  const std::int64_t n = table.act.shape()[0];
  const std::int64_t k = table.act.shape()[1];
  double entropy = 0.0;
  for (std::int64_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += table.act.at({i, j});
    mean /= static_cast<double>(n);
    if (mean > 0.0) entropy -= mean * std::log(mean);
  }
  CHECK(entropy >= 0.5 * std::log(static_cast<double>(k)));
}

TEST_CASE("the split-MLP baseline trains under the identical harness") {
  const DatasetArchive archive = tiny_archive(69, 2, 2, 3);
  TrainConfig cfg = tiny_config(31);
  cfg.projector = ProjectorKind::kSplitMlp;
  cfg.split_hidden = 16;

  const TrainResult r = capsrep::train::pretrain(cfg, archive);
  CHECK(r.log_lines.size() == 4);
  const nlohmann::json j = nlohmann::json::parse(r.log_lines[0]);
  CHECK(j.contains("invariant_ce"));
  CHECK(j.contains("equivariant_mse"));

  const Model model = capsrep::train::model_from_checkpoint(r.state);
  CHECK(model.kind() == ProjectorKind::kSplitMlp);
  CHECK(model.capsule_net() == nullptr);
  CHECK(model.act_dim() == 32);
  CHECK(model.pose_dim() == 32);

  // The baseline's invariant embedding is softmaxed onto the simplex, so it
  // feeds the same objective and probes.
  const auto table = model.embed(archive);
  for (std::int64_t i = 0; i < table.act.shape()[0]; ++i) {
    double sum = 0.0;
    for (std::int64_t jj = 0; jj < table.act.shape()[1]; ++jj) {
      sum += table.act.at({i, jj});
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }

  const auto point = capsrep::train::online_eval_point(model, archive, 0, 7);
  CHECK(point.classification_top1 >= 0.0);
}

TEST_CASE("the capsule sweep reports one complete row per capsule count") {
  const DatasetArchive archive = tiny_archive(70, 2, 2, 3);
  TrainConfig cfg = tiny_config(32);
  const auto rows =
      capsrep::train::capsule_sweep(cfg, {2, 4}, archive);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n_caps == 2);
  CHECK(rows[0].pose_dim == 32);
  CHECK(rows[1].n_caps == 4);
  CHECK(rows[1].pose_dim == 64);
  CHECK(rows[0].dataset_checksum == rows[1].dataset_checksum);
  CHECK(rows[0].dataset_checksum ==
        capsrep::data::archive_checksum(archive));
  for (const auto& row : rows) {
    CHECK(row.classification_top1 >= 0.0);
    CHECK(row.classification_top1 <= 1.0);
    CHECK(row.has_rotation);
  }
}
