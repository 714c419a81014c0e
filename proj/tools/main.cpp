#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capsrep/charts.hpp"
#include "capsrep/checkpoint.hpp"
#include "capsrep/dataset.hpp"
#include "capsrep/embeddings.hpp"
#include "capsrep/errors.hpp"
#include "capsrep/metrics.hpp"
#include "capsrep/predictor.hpp"
#include "capsrep/probes.hpp"
#include "capsrep/reports.hpp"
#include "capsrep/train.hpp"
#include "capsrep/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw capsrep::IoError("cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out) throw capsrep::IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto bytes = capsrep::util::read_file(path.string());
  return std::string(bytes.begin(), bytes.end());
}

void ensure_run_layout(const fs::path& run) {
  fs::create_directories(run / "checkpoints");
  fs::create_directories(run / "reports");
  fs::create_directories(run / "charts");
}

void write_manifest(const fs::path& run, const std::string& command,
                    const json& config, const json& inputs,
                    const json& outputs) {
  const json manifest{{"command", command},
                      {"config", config},
                      {"inputs", inputs},
                      {"outputs", outputs}};
  write_text(run / "manifest.json", manifest.dump(2) + "\n");
}

// Columns shared by training and sweep configs; flags override file values.
struct ConfigFlags {
  std::string config_path, data;
  std::uint64_t seed = 0;
  std::int64_t epochs = 0, batch = 0, n_caps = 0, pairs = 0;
  std::int64_t eval_cadence = 0, checkpoint_every = 0, split_hidden = 0;
  double lr = 0.0;
  std::string projector;

  CLI::Option *seed_opt = nullptr, *epochs_opt = nullptr, *batch_opt = nullptr,
              *caps_opt = nullptr, *pairs_opt = nullptr, *cadence_opt = nullptr,
              *ckpt_every_opt = nullptr, *hidden_opt = nullptr,
              *lr_opt = nullptr, *projector_opt = nullptr;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool with_caps) {
  cmd->add_option("--config", f.config_path, "JSON training config file");
  cmd->add_option("--data", f.data, "dataset archive (overrides the config)");
  f.seed_opt = cmd->add_option("--seed", f.seed, "training seed");
  f.epochs_opt = cmd->add_option("--epochs", f.epochs, "training epochs");
  f.batch_opt = cmd->add_option("--batch", f.batch, "batch size");
  if (with_caps) {
    f.caps_opt = cmd->add_option("--n-caps", f.n_caps, "capsule count");
  }
  f.pairs_opt = cmd->add_option("--pairs-per-object", f.pairs,
                                "view pairs sampled per object per epoch");
  f.cadence_opt = cmd->add_option("--eval-cadence", f.eval_cadence,
                                  "epochs between online probe points");
  f.ckpt_every_opt = cmd->add_option("--checkpoint-every", f.checkpoint_every,
                                     "epochs between saved checkpoints");
  f.hidden_opt = cmd->add_option("--split-hidden", f.split_hidden,
                                 "hidden width of the split-MLP baseline");
  f.lr_opt = cmd->add_option("--lr", f.lr, "Adam learning rate");
  f.projector_opt = cmd->add_option(
      "--projector", f.projector, "projector kind: capsule|split-mlp-baseline");
}

capsrep::train::TrainConfig resolve_train_config(const ConfigFlags& f) {
  json overlay = json::object();
  if (!f.config_path.empty()) {
    overlay = json::parse(read_text(f.config_path), nullptr, false);
    if (overlay.is_discarded() || !overlay.is_object()) {
      throw capsrep::ConfigError(f.config_path +
                                 " is not a JSON object config");
    }
  }
  if (!f.data.empty()) overlay["dataset_path"] = f.data;
  if (f.seed_opt && f.seed_opt->count()) overlay["seed"] = f.seed;
  if (f.epochs_opt && f.epochs_opt->count()) overlay["epochs"] = f.epochs;
  if (f.batch_opt && f.batch_opt->count()) overlay["batch"] = f.batch;
  if (f.caps_opt && f.caps_opt->count()) overlay["n_caps"] = f.n_caps;
  if (f.pairs_opt && f.pairs_opt->count()) {
    overlay["pairs_per_object"] = f.pairs;
  }
  if (f.cadence_opt && f.cadence_opt->count()) {
    overlay["eval_cadence"] = f.eval_cadence;
  }
  if (f.ckpt_every_opt && f.ckpt_every_opt->count()) {
    overlay["checkpoint_every"] = f.checkpoint_every;
  }
  if (f.hidden_opt && f.hidden_opt->count()) {
    overlay["split_hidden"] = f.split_hidden;
  }
  if (f.lr_opt && f.lr_opt->count()) {
    if (!overlay.contains("adam")) overlay["adam"] = json::object();
    overlay["adam"]["lr"] = f.lr;
  }
  if (f.projector_opt && f.projector_opt->count()) {
    overlay["projector"] = f.projector;
  }
  return capsrep::train::parse_train_config(overlay.dump());
}

capsrep::data::DatasetArchive load_training_data(
    const capsrep::train::TrainConfig& cfg) {
  if (cfg.dataset_path.empty()) {
    throw capsrep::ConfigError(
        "no dataset: set dataset_path in the config or pass --data");
  }
  return capsrep::data::load_archive(cfg.dataset_path);
}

std::string zero_pad(std::int64_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

// ---- shared eval plumbing ----

struct EvalContext {
  capsrep::train::CheckpointState state;
  capsrep::train::Model model;
  capsrep::data::DatasetArchive archive;
  capsrep::eval::EmbeddingTable table;
  capsrep::train::ViewSplit split;
  std::vector<std::int64_t> eval_rows;  // val split, or train when val is empty
  std::string data_path;
  std::uint64_t data_checksum = 0;

  json inputs_json(const std::string& ckpt_path) const {
    return json{{"checkpoint",
                 {{"path", ckpt_path}, {"config_hash", state.config_hash}}},
                {"dataset",
                 {{"path", data_path}, {"checksum", data_checksum}}}};
  }
};

EvalContext make_eval_context(const std::string& ckpt_path,
                              const std::string& data_flag) {
  auto state = capsrep::train::load_checkpoint(ckpt_path);
  const auto cfg = capsrep::train::parse_train_config(state.config_json);
  std::string data_path = data_flag.empty() ? cfg.dataset_path : data_flag;
  if (data_path.empty()) {
    throw capsrep::ConfigError(
        "checkpoint config has no dataset_path; pass --data");
  }
  auto archive = capsrep::data::load_archive(data_path);
  auto model = capsrep::train::model_from_checkpoint(state);
  auto table = model.embed(archive);
  auto split = capsrep::train::split_archive_rows(archive);
  std::vector<std::int64_t> eval_rows =
      split.val_rows.empty() ? split.train_rows : split.val_rows;
  const std::uint64_t checksum = capsrep::data::archive_checksum(archive);
  return EvalContext{std::move(state),     std::move(model),
                     std::move(archive),   std::move(table),
                     std::move(split),     std::move(eval_rows),
                     std::move(data_path), checksum};
}

std::vector<std::int64_t> labels_at(const capsrep::eval::EmbeddingTable& table,
                                    const std::vector<std::int64_t>& rows) {
  std::vector<std::int64_t> labels;
  labels.reserve(rows.size());
  for (const std::int64_t r : rows) {
    labels.push_back(table.class_ids[static_cast<std::size_t>(r)]);
  }
  return labels;
}

const capsrep::nd::Tensor& embedding_matrix(
    const capsrep::eval::EmbeddingTable& table, const std::string& name) {
  if (name == "pose") return table.pose;
  if (name == "act") return table.act;
  throw capsrep::ConfigError("unknown embedding \"" + name +
                             "\" (use pose or act)");
}

// Writes the per-command JSON report and manifest when a run dir was given,
// and always prints the report to stdout.
void finish_eval(const std::string& run, const std::string& command,
                 const std::string& report_name, const json& report,
                 const json& config, const json& inputs) {
  std::cout << report.dump() << "\n";
  if (run.empty()) return;
  const fs::path dir(run);
  ensure_run_layout(dir);
  const std::string rel = "reports/" + report_name;
  write_text(dir / rel, report.dump(2) + "\n");
  write_manifest(dir, command, config, inputs, json{{"report", rel}});
}

// ---- subcommand bodies ----

int run_gen_data(std::uint64_t seed, std::int64_t classes, std::int64_t objects,
                 std::int64_t views, std::int64_t size,
                 const std::string& out) {
  capsrep::data::DatasetManifest m;
  m.seed = seed;
  m.classes = static_cast<std::uint32_t>(classes);
  m.objects_per_class = static_cast<std::uint32_t>(objects);
  m.views_per_object = static_cast<std::uint32_t>(views);
  m.height = static_cast<std::uint32_t>(size);
  m.width = static_cast<std::uint32_t>(size);
  const auto archive = capsrep::data::generate_dataset(m);
  capsrep::data::save_archive(archive, out);
  const std::uint64_t checksum = capsrep::data::archive_checksum(archive);

  const json config{{"seed", seed},     {"classes", classes},
                    {"objects", objects}, {"views", views},
                    {"size", size}};
  const json manifest{{"command", "gen-data"},
                      {"config", config},
                      {"inputs", json::object()},
                      {"outputs", {{"archive", out}, {"checksum", checksum}}}};
  write_text(out + ".manifest.json", manifest.dump(2) + "\n");

  const json summary{{"path", out},
                     {"checksum", checksum},
                     {"records", archive.records.size()}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int run_pretrain(const ConfigFlags& flags, const std::string& run) {
  const auto cfg = resolve_train_config(flags);
  const auto archive = load_training_data(cfg);
  const fs::path dir(run);
  ensure_run_layout(dir);

  std::vector<std::string> checkpoint_files;
  const auto sink = [&](const capsrep::train::CheckpointState& s) {
    const std::string rel =
        "checkpoints/epoch_" + zero_pad(s.epoch, 4) + ".ckpt";
    capsrep::train::save_checkpoint(s, (dir / rel).string());
    checkpoint_files.push_back(rel);
  };
  const auto result = capsrep::train::pretrain(cfg, archive, sink);

  const std::string final_rel = "checkpoints/final.ckpt";
  capsrep::train::save_checkpoint(result.state, (dir / final_rel).string());

  std::string log_text;
  for (const std::string& line : result.log_lines) {
    log_text += line;
    log_text += '\n';
  }
  write_text(dir / "log.jsonl", log_text);

  std::vector<std::string> chart_files;
  if (!result.eval_series.empty()) {
    for (const auto& [stem, svg] : capsrep::report::emit_curves(log_text)) {
      const std::string rel = "charts/" + stem + ".svg";
      write_text(dir / rel, svg);
      chart_files.push_back(rel);
    }
  }

  const json config = json::parse(capsrep::train::train_config_json(cfg));
  const json inputs{{"dataset",
                     {{"path", cfg.dataset_path},
                      {"checksum", capsrep::data::archive_checksum(archive)}}}};
  const json outputs{{"log", "log.jsonl"},
                     {"final_checkpoint", final_rel},
                     {"checkpoints", checkpoint_files},
                     {"charts", chart_files}};
  write_manifest(dir, "pretrain", config, inputs, outputs);

  const json summary{{"run", run},
                     {"epochs", result.state.epoch},
                     {"steps", result.state.step},
                     {"final_checkpoint", (dir / final_rel).string()}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int run_eval_classify(const std::string& ckpt, const std::string& data,
                      const std::string& run) {
  const EvalContext ctx = make_eval_context(ckpt, data);
  const std::int64_t k = ctx.archive.manifest.classes;

  const auto inputs =
      capsrep::eval::gather_rows(ctx.table.act, ctx.split.train_rows);
  const auto labels = labels_at(ctx.table, ctx.split.train_rows);
  const auto probe = capsrep::eval::train_probe(
      inputs, capsrep::eval::one_hot(labels, k),
      capsrep::eval::ProbeKind::kClassification,
      capsrep::eval::desk_classification_probe(ctx.model.act_dim(), k));

  const double top1 = capsrep::eval::classification_accuracy(
      probe, capsrep::eval::gather_rows(ctx.table.act, ctx.eval_rows),
      labels_at(ctx.table, ctx.eval_rows));

  const json report{
      {"classification_top1", top1},
      {"split", ctx.split.val_rows.empty() ? "train" : "val"},
      {"n_train", ctx.split.train_rows.size()},
      {"n_eval", ctx.eval_rows.size()}};
  finish_eval(run, "eval-classify", "classification.json", report,
              json::parse(ctx.state.config_json), ctx.inputs_json(ckpt));
  return 0;
}

int run_eval_rotation(const std::string& ckpt, const std::string& data,
                      const std::string& run, const std::string& embedding) {
  const EvalContext ctx = make_eval_context(ckpt, data);
  const auto& emb = embedding_matrix(ctx.table, embedding);

  const auto train_pairs = capsrep::eval::build_rotation_pairs(
      ctx.table, emb, ctx.split.train_rows);
  capsrep::eval::PairRegressionData eval_pairs;
  std::string split_name = "val";
  try {
    eval_pairs =
        capsrep::eval::build_rotation_pairs(ctx.table, emb, ctx.eval_rows);
  } catch (const capsrep::ContractError&) {
    eval_pairs = train_pairs;  // too few held-out views to form pairs
    split_name = "train";
  }

  const auto probe = capsrep::eval::train_probe(
      train_pairs.inputs, train_pairs.targets,
      capsrep::eval::ProbeKind::kRegression,
      capsrep::eval::desk_rotation_probe(train_pairs.inputs.shape()[1]));
  const double r2 = capsrep::eval::quaternion_r2(probe, eval_pairs.inputs,
                                                 eval_pairs.targets);

  const json report{{"rotation_r2", r2},
                    {"embedding", embedding},
                    {"split", split_name},
                    {"n_train_pairs", train_pairs.inputs.shape()[0]},
                    {"n_eval_pairs", eval_pairs.inputs.shape()[0]}};
  finish_eval(run, "eval-rotation", "rotation.json", report,
              json::parse(ctx.state.config_json), ctx.inputs_json(ckpt));
  return 0;
}

int run_eval_colour(const std::string& ckpt, const std::string& data,
                    const std::string& run, const std::string& embedding) {
  const EvalContext ctx = make_eval_context(ckpt, data);
  const auto& emb = embedding_matrix(ctx.table, embedding);
  const auto targets = capsrep::eval::colour_targets(ctx.table);

  const auto probe = capsrep::eval::train_probe(
      capsrep::eval::gather_rows(emb, ctx.split.train_rows),
      capsrep::eval::gather_rows(targets, ctx.split.train_rows),
      capsrep::eval::ProbeKind::kRegression,
      capsrep::eval::desk_colour_probe(emb.shape()[1]));
  const double r2 = capsrep::eval::regression_r2(
      probe, capsrep::eval::gather_rows(emb, ctx.eval_rows),
      capsrep::eval::gather_rows(targets, ctx.eval_rows));

  const json report{{"colour_r2", r2},
                    {"embedding", embedding},
                    {"split", ctx.split.val_rows.empty() ? "train" : "val"}};
  finish_eval(run, "eval-colour", "colour.json", report,
              json::parse(ctx.state.config_json), ctx.inputs_json(ckpt));
  return 0;
}

int run_eval_retrieval(const std::string& ckpt, const std::string& data,
                       const std::string& run, const std::string& split,
                       const std::string& predictor) {
  const EvalContext ctx = make_eval_context(ckpt, data);

  std::vector<std::int64_t> all_rows(ctx.table.size());
  for (std::int64_t i = 0; i < ctx.table.size(); ++i) all_rows[i] = i;

  std::vector<std::int64_t> sources, gallery;
  std::string src_name, gal_name;
  if (split == "all") {
    sources = gallery = all_rows;
    src_name = gal_name = "all";
  } else if (split == "train") {
    sources = gallery = ctx.split.train_rows;
    src_name = gal_name = "train";
  } else if (split == "val") {
    sources = gallery = ctx.split.val_rows;
    src_name = gal_name = "val";
  } else if (split == "val-all") {
    sources = ctx.split.val_rows;
    gallery = all_rows;
    src_name = "val";
    gal_name = "all";
  } else {
    throw capsrep::ConfigError("unknown split \"" + split +
                               "\" (use all, train, val, or val-all)");
  }

  capsrep::eval::PredictFn fn;
  if (predictor == "trained") {
    const auto& pred = ctx.model.predictor();
    fn = [&pred](const capsrep::nd::Tensor& poses,
                 const capsrep::nd::Tensor& g) {
      return pred.predict(capsrep::nd::constant(poses),
                          capsrep::nd::constant(g))
          .value();
    };
  } else if (predictor == "identity") {
    fn = [](const capsrep::nd::Tensor& poses, const capsrep::nd::Tensor&) {
      return poses;
    };
  } else {
    throw capsrep::ConfigError("unknown predictor \"" + predictor +
                               "\" (use trained or identity)");
  }

  const auto r = capsrep::eval::retrieval_metrics(ctx.table, fn, sources,
                                                  gallery, src_name, gal_name);
  const json report{{"mrr", r.mrr},
                    {"h_at_1", r.h_at_1},
                    {"h_at_5", r.h_at_5},
                    {"pre", r.pre},
                    {"n_pairs", r.n_pairs},
                    {"skipped_objects", r.skipped_objects},
                    {"source_split", r.source_split},
                    {"retrieval_split", r.retrieval_split},
                    {"predictor", predictor}};
  finish_eval(run, "eval-retrieval", "retrieval.json", report,
              json::parse(ctx.state.config_json), ctx.inputs_json(ckpt));
  return 0;
}

int run_sweep(const ConfigFlags& flags, const std::vector<std::int64_t>& caps,
              const std::string& run) {
  const auto base = resolve_train_config(flags);
  const auto archive = load_training_data(base);
  const fs::path dir(run);
  ensure_run_layout(dir);

  const auto rows = capsrep::train::capsule_sweep(base, caps, archive);

  json rows_json = json::array();
  std::string csv =
      "n_caps,pose_dim,dataset_checksum,classification_top1,rotation_r2\n";
  capsrep::chart::Series top1_series;
  top1_series.label = "classification_top1";
  for (const auto& row : rows) {
    json r{{"n_caps", row.n_caps},
           {"pose_dim", row.pose_dim},
           {"dataset_checksum", row.dataset_checksum},
           {"classification_top1", row.classification_top1}};
    char value[64];
    std::snprintf(value, sizeof(value), "%.6g", row.classification_top1);
    csv += std::to_string(row.n_caps) + "," + std::to_string(row.pose_dim) +
           "," + std::to_string(row.dataset_checksum) + "," + value;
    if (row.has_rotation) {
      r["rotation_r2"] = row.rotation_r2;
      std::snprintf(value, sizeof(value), "%.6g", row.rotation_r2);
      csv += std::string(",") + value + "\n";
    } else {
      r["rotation_r2"] = nullptr;
      csv += ",\n";
    }
    rows_json.push_back(r);
    top1_series.x.push_back(static_cast<double>(row.n_caps));
    top1_series.y.push_back(row.classification_top1);
  }

  write_text(dir / "reports/sweep.csv", csv);
  write_text(dir / "reports/sweep.json", rows_json.dump(2) + "\n");

  capsrep::chart::ChartSpec spec;
  spec.title = "classification top-1 vs capsule count";
  spec.x_label = "n_caps";
  spec.y_label = "classification_top1";
  spec.series = {top1_series};
  write_text(dir / "charts/sweep_top1.svg", capsrep::chart::line_chart_svg(spec));

  json config = json::parse(capsrep::train::train_config_json(base));
  config["sweep_caps"] = caps;
  const json inputs{{"dataset",
                     {{"path", base.dataset_path},
                      {"checksum", capsrep::data::archive_checksum(archive)}}}};
  const json outputs{{"csv", "reports/sweep.csv"},
                     {"json", "reports/sweep.json"},
                     {"chart", "charts/sweep_top1.svg"}};
  write_manifest(dir, "sweep", config, inputs, outputs);

  std::cout << rows_json.dump() << "\n";
  return 0;
}

int run_report(const std::vector<std::string>& runs, const std::string& out) {
  std::vector<capsrep::report::RunMetrics> rows;
  rows.reserve(runs.size());
  for (const std::string& run : runs) {
    rows.push_back(capsrep::report::collect_run_metrics(run));
  }
  const std::string csv = capsrep::report::metrics_csv(rows);
  std::cout << csv;
  if (!out.empty()) {
    write_text(out, csv);
    const json manifest{{"command", "report"},
                        {"config", json::object()},
                        {"inputs", {{"runs", runs}}},
                        {"outputs", {{"csv", out}}}};
    write_text(out + ".manifest.json", manifest.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "capsule representation workbench: dataset generation, pretraining, "
      "probes, retrieval, and reports"};
  app.require_subcommand(1);
  std::function<int()> action;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render a procedural dataset");
  struct {
    std::uint64_t seed = 1;
    std::int64_t classes = 8, objects = 20, views = 8, size = 32;
    std::string out = "archive.caps";
  } gd;
  gen->add_option("--seed", gd.seed, "generator seed")->required();
  gen->add_option("--classes", gd.classes, "shape classes")
      ->check(CLI::PositiveNumber);
  gen->add_option("--objects", gd.objects, "objects per class")
      ->check(CLI::PositiveNumber);
  gen->add_option("--views", gd.views, "views per object")
      ->check(CLI::PositiveNumber);
  gen->add_option("--size", gd.size, "image height and width")
      ->check(CLI::PositiveNumber);
  gen->add_option("--out", gd.out, "output archive path");
  gen->callback([&] {
    action = [&] {
      return run_gen_data(gd.seed, gd.classes, gd.objects, gd.views, gd.size,
                          gd.out);
    };
  });

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train a projector");
  ConfigFlags pre_flags;
  std::string pre_run;
  add_config_flags(pre, pre_flags, true);
  pre->add_option("--run", pre_run, "run directory for all outputs")
      ->required();
  pre->callback([&] {
    action = [&] { return run_pretrain(pre_flags, pre_run); };
  });

  // eval-*
  struct {
    std::string ckpt, data, run, embedding = "pose", split = "all",
                predictor = "trained";
  } ev;
  auto add_eval_common = [&](CLI::App* cmd) {
    cmd->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
    cmd->add_option("--data", ev.data,
                    "dataset archive (defaults to the checkpoint's)");
    cmd->add_option("--run", ev.run, "run directory for report + manifest");
  };

  auto* ecl = app.add_subcommand("eval-classify",
                                 "class probe on routed activations");
  add_eval_common(ecl);
  ecl->callback([&] {
    action = [&] { return run_eval_classify(ev.ckpt, ev.data, ev.run); };
  });

  auto* ero = app.add_subcommand("eval-rotation",
                                 "relative-rotation probe on embeddings");
  add_eval_common(ero);
  ero->add_option("--embedding", ev.embedding, "pose|act");
  ero->callback([&] {
    action = [&] {
      return run_eval_rotation(ev.ckpt, ev.data, ev.run, ev.embedding);
    };
  });

  auto* eco = app.add_subcommand("eval-colour", "hue probe on embeddings");
  add_eval_common(eco);
  eco->add_option("--embedding", ev.embedding, "pose|act");
  eco->callback([&] {
    action = [&] {
      return run_eval_colour(ev.ckpt, ev.data, ev.run, ev.embedding);
    };
  });

  auto* ert = app.add_subcommand("eval-retrieval",
                                 "pose-space nearest-neighbour retrieval");
  add_eval_common(ert);
  ert->add_option("--split", ev.split, "all|train|val|val-all");
  ert->add_option("--predictor", ev.predictor, "trained|identity");
  ert->callback([&] {
    action = [&] {
      return run_eval_retrieval(ev.ckpt, ev.data, ev.run, ev.split,
                                ev.predictor);
    };
  });

  // sweep
  auto* sw = app.add_subcommand("sweep", "pretrain across capsule counts");
  ConfigFlags sw_flags;
  std::string sw_run;
  std::vector<std::int64_t> sw_caps;
  add_config_flags(sw, sw_flags, false);
  sw->add_option("--caps", sw_caps, "capsule counts, e.g. 8,16,32")
      ->required()
      ->delimiter(',');
  sw->add_option("--run", sw_run, "run directory for all outputs")->required();
  sw->callback([&] {
    action = [&] { return run_sweep(sw_flags, sw_caps, sw_run); };
  });

  // report
  auto* rep = app.add_subcommand("report", "merge run metrics into a CSV");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  rep->add_option("--runs", rep_runs, "run directories, e.g. a,b,c")
      ->required()
      ->delimiter(',');
  rep->add_option("--out", rep_out, "also write the CSV to this file");
  rep->callback([&] {
    action = [&] { return run_report(rep_runs, rep_out); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return action();
  } catch (const capsrep::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const capsrep::ParamError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
