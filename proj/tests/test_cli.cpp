#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsrep/charts.hpp"
#include "capsrep/reports.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_binary;   // path to the command line tool under test
fs::path g_work;        // scratch directory, one per process run
int g_cmd_counter = 0;

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Runs the tool with the given arguments from inside the scratch directory.
CmdResult run_cli(const std::string& args) {
  const fs::path out = g_work / ("stdout" + std::to_string(g_cmd_counter));
  const fs::path err = g_work / ("stderr" + std::to_string(g_cmd_counter));
  ++g_cmd_counter;
  const std::string cmd = "cd '" + g_work.string() + "' && '" + g_binary +
                          "' " + args + " > '" + out.string() + "' 2> '" +
                          err.string() + "'";
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

int count_occurrences(const std::string& text, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

// Number of vertices in the first polyline's points attribute.
int polyline_vertices(const std::string& svg) {
  const std::size_t poly = svg.find("<polyline");
  REQUIRE(poly != std::string::npos);
  const std::string marker = "points=\"";
  const std::size_t start = svg.find(marker, poly);
  REQUIRE(start != std::string::npos);
  const std::size_t end = svg.find('"', start + marker.size());
  const std::string points =
      svg.substr(start + marker.size(), end - start - marker.size());
  return count_occurrences(points, ",");
}

std::string tiny_train_config(const std::string& data_path) {
  nlohmann::json j{
      {"seed", 5},
      {"n_caps", 2},
      {"epochs", 2},
      {"batch", 4},
      {"pairs_per_object", 2},
      {"eval_cadence", 1},
      {"dataset_path", data_path},
      {"encoder",
       {{"in_channels", 3},
        {"image_size", 16},
        {"stages", {{8, 3, 2, 1}, {8, 3, 2, 1}}}}}};
  return j.dump();
}

}  // namespace

TEST_CASE("line charts are exact, deterministic, and validated") {
  capsrep::chart::ChartSpec spec;
  spec.title = "a <fancy> & \"quoted\" title";
  spec.x_label = "epoch";
  spec.y_label = "metric";
  spec.series = {{"m", {0.0, 1.0, 2.0, 3.0}, {0.25, 0.5, 0.125, 0.75}}};

  const std::string svg = capsrep::chart::line_chart_svg(spec);
  CHECK(count_occurrences(svg, "<polyline") == 1);
  CHECK(polyline_vertices(svg) == 4);
  // Axis end labels carry the data extrema verbatim.
  CHECK(svg.find(">0<") != std::string::npos);
  CHECK(svg.find(">3<") != std::string::npos);
  CHECK(svg.find(">0.125<") != std::string::npos);
  CHECK(svg.find(">0.75<") != std::string::npos);
  CHECK(svg.find("&lt;fancy&gt; &amp; &quot;quoted&quot;") !=
        std::string::npos);
  CHECK(svg.find("rotate(-90") != std::string::npos);
  CHECK(capsrep::chart::line_chart_svg(spec) == svg);

  // A constant series still renders, with both y labels equal.
  capsrep::chart::ChartSpec flat = spec;
  flat.series = {{"m", {0.0, 1.0}, {0.5, 0.5}}};
  const std::string flat_svg = capsrep::chart::line_chart_svg(flat);
  CHECK(count_occurrences(flat_svg, ">0.5<") == 2);

  // Two series get two polylines and a legend.
  capsrep::chart::ChartSpec two = spec;
  two.series.push_back({"n", {0.0, 1.0, 2.0, 3.0}, {0.0, 0.1, 0.2, 0.3}});
  const std::string two_svg = capsrep::chart::line_chart_svg(two);
  CHECK(count_occurrences(two_svg, "<polyline") == 2);
  CHECK(two_svg.find(">m</text>") != std::string::npos);
  CHECK(two_svg.find(">n</text>") != std::string::npos);

  capsrep::chart::ChartSpec bad;
  CHECK_THROWS_AS(capsrep::chart::line_chart_svg(bad), capsrep::ParamError);
  bad.series = {{"empty", {}, {}}};
  CHECK_THROWS_AS(capsrep::chart::line_chart_svg(bad), capsrep::ParamError);
  bad.series = {{"ragged", {0.0, 1.0}, {0.5}}};
  CHECK_THROWS_AS(capsrep::chart::line_chart_svg(bad), capsrep::ParamError);
  bad.series = {{"nan", {0.0}, {std::nan("")}}};
  CHECK_THROWS_AS(capsrep::chart::line_chart_svg(bad), capsrep::ParamError);
}

TEST_CASE("metric CSV emission is canonical") {
  capsrep::report::RunMetrics a;
  a.run = "run-a";
  a.values = {{"classification_top1", 0.5}, {"rotation_r2", 0.25}};
  capsrep::report::RunMetrics b;
  b.run = "odd,name";
  b.values = {{"pre", 0.125}};

  const std::string csv = capsrep::report::metrics_csv({a, b});
  CHECK(csv ==
        "run,classification_top1,rotation_r2,colour_r2,mrr,h_at_1,h_at_5,pre\n"
        "run-a,0.5,0.25,,,,,\n"
        "\"odd,name\",,,,,,,0.125\n");

  capsrep::report::RunMetrics bad;
  bad.run = "x";
  bad.values = {{"accuracy", 1.0}};
  CHECK_THROWS_AS(capsrep::report::metrics_csv({bad}), capsrep::ParamError);
}

TEST_CASE("training logs turn into per-metric eval series and charts") {
  std::string log;
  log += "{\"type\":\"step\",\"step\":1,\"epoch\":0,\"total\":1.5}\n";
  for (int e = 0; e < 10; ++e) {
    nlohmann::json rec{{"type", "eval"},
                       {"epoch", 2 * e + 1},
                       {"step", 10 * e},
                       {"classification_top1", 0.1 * e}};
    if (e % 2 == 0) {
      rec["rotation_r2"] = 0.05 * e;
    } else {
      rec["rotation_r2"] = nullptr;
    }
    log += rec.dump() + "\n";
  }

  const auto series = capsrep::report::eval_series_from_log(log);
  REQUIRE(series.count("classification_top1") == 1);
  REQUIRE(series.count("rotation_r2") == 1);
  CHECK(series.at("classification_top1").x.size() == 10);
  CHECK(series.at("rotation_r2").x.size() == 5);  // null points are dropped
  CHECK(series.at("classification_top1").x.front() == 1.0);
  CHECK(series.at("classification_top1").x.back() == 19.0);

  const auto charts = capsrep::report::emit_curves(log);
  REQUIRE(charts.count("classification_top1") == 1);
  CHECK(polyline_vertices(charts.at("classification_top1")) == 10);
  CHECK(capsrep::report::emit_curves(log) == charts);

  CHECK_THROWS_AS(capsrep::report::emit_curves(
                      "{\"type\":\"step\",\"step\":1,\"epoch\":0}\n"),
                  capsrep::ParamError);
  CHECK_THROWS_AS(capsrep::report::eval_series_from_log("not json\n"),
                  capsrep::IoError);
}

TEST_CASE("run metrics are collected from report files") {
  const fs::path dir = g_work / "collect";
  fs::create_directories(dir / "reports");
  spill(dir / "reports/classification.json",
        "{\"classification_top1\": 0.75, \"split\": \"val\"}");
  spill(dir / "reports/retrieval.json",
        "{\"mrr\": 0.5, \"pre\": 0.25, \"n_pairs\": 10}");

  const auto row = capsrep::report::collect_run_metrics(dir.string());
  CHECK(row.run == "collect");
  CHECK(row.values.size() == 3);  // non-canonical keys are ignored
  CHECK(row.values.at("classification_top1") == 0.75);
  CHECK(row.values.at("mrr") == 0.5);
  CHECK(row.values.at("pre") == 0.25);

  const fs::path bare = g_work / "bare_run";
  fs::create_directories(bare);
  const auto empty_row = capsrep::report::collect_run_metrics(bare.string());
  CHECK(empty_row.run == "bare_run");
  CHECK(empty_row.values.empty());

  CHECK_THROWS_AS(
      capsrep::report::collect_run_metrics((g_work / "nope").string()),
      capsrep::IoError);
}

TEST_CASE("gen-data is reproducible and archives are byte-identical") {
  const auto a = run_cli(
      "gen-data --seed 7 --classes 2 --objects 2 --views 4 --size 16 "
      "--out a.caps");
  const auto b = run_cli(
      "gen-data --seed 7 --classes 2 --objects 2 --views 4 --size 16 "
      "--out b.caps");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);

  const auto ja = nlohmann::json::parse(a.out);
  const auto jb = nlohmann::json::parse(b.out);
  CHECK(ja.at("checksum") == jb.at("checksum"));
  CHECK(ja.at("records") == 16);
  CHECK(slurp(g_work / "a.caps") == slurp(g_work / "b.caps"));
  CHECK(fs::exists(g_work / "a.caps.manifest.json"));

  const auto c = run_cli("gen-data --seed 8 --classes 2 --objects 2 "
                         "--views 4 --size 16 --out c.caps");
  REQUIRE(c.code == 0);
  CHECK(nlohmann::json::parse(c.out).at("checksum") != ja.at("checksum"));
}

TEST_CASE("the pretrain-eval-report pipeline works end to end") {
  REQUIRE(run_cli("gen-data --seed 9 --classes 2 --objects 2 --views 4 "
                  "--size 16 --out pipe.caps")
              .code == 0);
  spill(g_work / "pipe.json", tiny_train_config("pipe.caps"));

  const auto train = run_cli("pretrain --config pipe.json --run pipe_run");
  REQUIRE(train.code == 0);
  const auto summary = nlohmann::json::parse(train.out);
  CHECK(summary.at("epochs") == 2);
  CHECK(summary.at("steps") == 4);  // 4 objects x 2 pairs / batch 4, x2 epochs

  const fs::path run = g_work / "pipe_run";
  CHECK(fs::exists(run / "manifest.json"));
  CHECK(fs::exists(run / "log.jsonl"));
  CHECK(fs::exists(run / "checkpoints/final.ckpt"));
  CHECK(fs::exists(run / "charts/classification_top1.svg"));

  const auto manifest = nlohmann::json::parse(slurp(run / "manifest.json"));
  CHECK(manifest.at("command") == "pretrain");
  CHECK(manifest.at("config").at("seed") == 5);
  CHECK(manifest.at("config").at("dataset_path") == "pipe.caps");
  CHECK(manifest.at("inputs").at("dataset").contains("checksum"));

  // Flag overrides beat config file values and land in the manifest.
  const auto train2 = run_cli(
      "pretrain --config pipe.json --epochs 1 --eval-cadence 0 "
      "--run pipe_run2");
  REQUIRE(train2.code == 0);
  const auto manifest2 =
      nlohmann::json::parse(slurp(g_work / "pipe_run2/manifest.json"));
  CHECK(manifest2.at("config").at("epochs") == 1);
  CHECK_FALSE(fs::exists(g_work / "pipe_run2/charts/classification_top1.svg"));

  const auto rot = run_cli(
      "eval-rotation --ckpt pipe_run/checkpoints/final.ckpt --run pipe_run");
  REQUIRE(rot.code == 0);
  CHECK(nlohmann::json::parse(rot.out).contains("rotation_r2"));

  REQUIRE(run_cli("eval-classify --ckpt pipe_run/checkpoints/final.ckpt "
                  "--run pipe_run")
              .code == 0);
  REQUIRE(run_cli("eval-colour --ckpt pipe_run/checkpoints/final.ckpt "
                  "--run pipe_run")
              .code == 0);
  const auto ret = run_cli(
      "eval-retrieval --ckpt pipe_run/checkpoints/final.ckpt --run pipe_run");
  REQUIRE(ret.code == 0);
  const auto rj = nlohmann::json::parse(ret.out);
  CHECK(rj.contains("mrr"));
  CHECK(rj.contains("h_at_1"));
  CHECK(rj.contains("h_at_5"));
  CHECK(rj.contains("pre"));

  const auto rep = run_cli("report --runs pipe_run --out merged.csv");
  REQUIRE(rep.code == 0);
  const std::string header =
      "run,classification_top1,rotation_r2,colour_r2,mrr,h_at_1,h_at_5,pre";
  CHECK(rep.out.rfind(header, 0) == 0);
  CHECK(count_occurrences(rep.out, "\n") == 2);  // header + one run row
  CHECK(rep.out.find("pipe_run,") != std::string::npos);
  CHECK(slurp(g_work / "merged.csv") == rep.out);

  // A second isolated eval writes the same metric values it printed.
  const auto report_json =
      nlohmann::json::parse(slurp(run / "reports/retrieval.json"));
  CHECK(report_json.at("mrr") == rj.at("mrr"));
}

TEST_CASE("identical pretrain invocations leave byte-identical artifacts") {
  REQUIRE(run_cli("gen-data --seed 10 --classes 1 --objects 4 --views 3 "
                  "--size 16 --out det.caps")
              .code == 0);
  spill(g_work / "det.json", tiny_train_config("det.caps"));

  REQUIRE(run_cli("pretrain --config det.json --run det_a").code == 0);
  REQUIRE(run_cli("pretrain --config det.json --run det_b").code == 0);

  CHECK(slurp(g_work / "det_a/log.jsonl") == slurp(g_work / "det_b/log.jsonl"));
  CHECK(slurp(g_work / "det_a/log.jsonl").size() > 0);
  CHECK(slurp(g_work / "det_a/charts/classification_top1.svg") ==
        slurp(g_work / "det_b/charts/classification_top1.svg"));
  CHECK(slurp(g_work / "det_a/checkpoints/final.ckpt") ==
        slurp(g_work / "det_b/checkpoints/final.ckpt"));
  CHECK(slurp(g_work / "det_a/manifest.json") ==
        slurp(g_work / "det_b/manifest.json"));
}

TEST_CASE("usage errors exit 1, runtime failures exit 2, help exits 0") {
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("pretrain --help").code == 0);
  CHECK(run_cli("").code == 1);                         // missing subcommand
  CHECK(run_cli("transmogrify").code == 1);             // unknown subcommand
  CHECK(run_cli("gen-data --seed 1 --bogus 2").code == 1);
  CHECK(run_cli("gen-data").code == 1);                 // missing required

  const auto help = run_cli("transmogrify");
  CHECK(help.err.find("--help") != std::string::npos);

  // Config value errors are usage errors.
  REQUIRE(run_cli("gen-data --seed 11 --classes 1 --objects 2 --views 2 "
                  "--size 16 --out e.caps")
              .code == 0);
  spill(g_work / "bad_batch.json", tiny_train_config("e.caps"));
  CHECK(run_cli("pretrain --config bad_batch.json --batch 1 --run x1").code ==
        1);
  CHECK(run_cli("pretrain --config bad_batch.json --projector transformer "
                "--run x2")
            .code == 1);
  spill(g_work / "noseed.json", "{\"dataset_path\": \"e.caps\"}");
  CHECK(run_cli("pretrain --config noseed.json --run x3").code == 1);

  // Missing input files surface as runtime failures.
  CHECK(run_cli("eval-classify --ckpt does_not_exist.ckpt").code == 2);
  CHECK(run_cli("pretrain --config bad_batch.json --data gone.caps "
                "--run x4")
            .code == 2);
  CHECK(run_cli("report --runs no_such_run").code == 2);
}

int main(int argc, char** argv) {
  doctest::Context context;
  std::vector<char*> doctest_args;
  doctest_args.push_back(argv[0]);
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("-", 0) == 0) {
      doctest_args.push_back(argv[i]);
    } else {
      g_binary = fs::absolute(arg).string();
    }
  }
  if (g_binary.empty()) {
    std::fprintf(stderr, "usage: test_cli <path-to-capsrep-binary>\n");
    return 1;
  }
  g_work = fs::temp_directory_path() / "capsrep_cli_tests";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  context.applyCommandLine(static_cast<int>(doctest_args.size()),
                           doctest_args.data());
  const int rc = context.run();
  fs::remove_all(g_work);
  return rc;
}
