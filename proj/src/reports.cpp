#include "capsrep/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "capsrep/util.hpp"

namespace capsrep::report {

namespace fs = std::filesystem;

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> columns = {
      "classification_top1", "rotation_r2", "colour_r2", "mrr",
      "h_at_1",              "h_at_5",      "pre"};
  return columns;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

std::string csv_cell(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

bool is_canonical(const std::string& name) {
  const auto& cols = metric_columns();
  return std::find(cols.begin(), cols.end(), name) != cols.end();
}

}  // namespace

std::string metrics_csv(const std::vector<RunMetrics>& rows) {
  std::ostringstream out;
  out << "run";
  for (const std::string& col : metric_columns()) out << "," << col;
  out << "\n";
  for (const RunMetrics& row : rows) {
    for (const auto& [name, value] : row.values) {
      (void)value;
      if (!is_canonical(name)) {
        throw ParamError("unknown metric \"" + name + "\" in run \"" +
                         row.run + "\"");
      }
    }
    out << csv_cell(row.run);
    for (const std::string& col : metric_columns()) {
      out << ",";
      const auto it = row.values.find(col);
      if (it != row.values.end()) out << fmt(it->second);
    }
    out << "\n";
  }
  return out.str();
}

RunMetrics collect_run_metrics(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) {
    throw IoError("run directory not found: " + run_dir);
  }
  RunMetrics row;
  fs::path trimmed = dir;
  if (trimmed.filename().empty()) trimmed = trimmed.parent_path();
  row.run = trimmed.filename().string();

  const fs::path reports = dir / "reports";
  if (!fs::is_directory(reports)) return row;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(reports)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  for (const fs::path& file : files) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(util::read_file(file.string()));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("cannot parse " + file.string() + ": " + e.what());
    }
    if (!doc.is_object()) continue;
    for (const auto& [key, value] : doc.items()) {
      if (is_canonical(key) && value.is_number()) {
        row.values[key] = value.get<double>();
      }
    }
  }
  return row;
}

std::map<std::string, chart::Series> eval_series_from_log(
    const std::string& log_text) {
  std::map<std::string, chart::Series> series;
  std::istringstream lines(log_text);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("log line " + std::to_string(line_no) +
                    " is not valid JSON: " + e.what());
    }
    if (!record.is_object() || record.value("type", "") != "eval") continue;
    if (!record.contains("epoch") || !record.at("epoch").is_number()) {
      throw IoError("log line " + std::to_string(line_no) +
                    " is an eval record without an epoch");
    }
    const double epoch = record.at("epoch").get<double>();
    for (const auto& [key, value] : record.items()) {
      if (key == "type" || key == "epoch" || key == "step") continue;
      if (!value.is_number()) continue;  // null metrics are simply absent
      chart::Series& s = series[key];
      s.label = key;
      s.x.push_back(epoch);
      s.y.push_back(value.get<double>());
    }
  }
  return series;
}

std::map<std::string, std::string> emit_curves(const std::string& log_text) {
  const auto series = eval_series_from_log(log_text);
  if (series.empty()) {
    throw ParamError("log contains no eval records to chart");
  }
  std::map<std::string, std::string> charts;
  for (const auto& [name, s] : series) {
    chart::ChartSpec spec;
    spec.title = name;
    spec.x_label = "epoch";
    spec.y_label = name;
    spec.series = {s};
    charts[name] = chart::line_chart_svg(spec);
  }
  return charts;
}

}  // namespace capsrep::report
