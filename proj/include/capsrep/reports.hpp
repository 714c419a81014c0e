#pragma once

#include <map>
#include <string>
#include <vector>

#include "capsrep/charts.hpp"
#include "capsrep/errors.hpp"

namespace capsrep::report {

// Canonical metric column order used by every merged report.
const std::vector<std::string>& metric_columns();

struct RunMetrics {
  std::string run;
  std::map<std::string, double> values;  // keyed by canonical metric name
};

// CSV with header "run,<metric_columns...>"; one row per entry, in the given
// order, cells printed with %.6g and absent metrics left empty. Keys outside
// the canonical set throw ParamError.
std::string metrics_csv(const std::vector<RunMetrics>& rows);

// Reads every reports/*.json below the run directory (sorted by filename,
// later files win) and keeps the canonical metrics found at the top level.
// Throws IoError when the run directory itself does not exist.
RunMetrics collect_run_metrics(const std::string& run_dir);

// Per-metric series from a JSON-lines training log: one point per eval
// record, x = epoch, keyed by the record's numeric fields. Lines that are
// not valid JSON throw IoError.
std::map<std::string, chart::Series> eval_series_from_log(
    const std::string& log_text);

// One chart per metric series in the log, keyed by file stem. Throws
// ParamError when the log holds no eval records.
std::map<std::string, std::string> emit_curves(const std::string& log_text);

}  // namespace capsrep::report
