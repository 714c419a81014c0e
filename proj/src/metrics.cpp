#include "capsrep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace capsrep::eval {

double r_squared(const nd::Tensor& y, const nd::Tensor& y_hat) {
  const auto& s = y.shape();
  if (s.size() != 2 || y_hat.shape() != s) {
    throw DimError("r_squared expects matching (N, d) matrices, got " +
                   shape_str(s) + " vs " + shape_str(y_hat.shape()));
  }
  const std::int64_t n = s[0], d = s[1];
  if (n < 2) {
    throw DegenerateBatchError("r_squared needs at least two rows, got " +
                               std::to_string(n));
  }
  std::vector<double> col_mean(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < d; ++j) {
      col_mean[static_cast<std::size_t>(j)] += y.at({i, j});
    }
  }
  for (auto& m : col_mean) m /= static_cast<double>(n);

  double ss_res = 0.0, ss_tot = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < d; ++j) {
      const double yi = y.at({i, j});
      const double res = yi - y_hat.at({i, j});
      const double dev = yi - col_mean[static_cast<std::size_t>(j)];
      ss_res += res * res;
      ss_tot += dev * dev;
    }
  }
  if (ss_tot == 0.0) {
    throw DegenerateTargetError(
        "r_squared target has zero variance in every column");
  }
  return 1.0 - ss_res / ss_tot;
}

namespace {

void check_rows(const EmbeddingTable& table,
                const std::vector<std::int64_t>& rows, const char* who) {
  for (const std::int64_t r : rows) {
    if (r < 0 || r >= table.size()) {
      throw ParamError(std::string(who) + " row " + std::to_string(r) +
                       " out of range for table of size " +
                       std::to_string(table.size()));
    }
  }
}

}  // namespace

RetrievalReport retrieval_metrics(const EmbeddingTable& table,
                                  const PredictFn& predict,
                                  const std::vector<std::int64_t>& source_rows,
                                  const std::vector<std::int64_t>& gallery_rows,
                                  std::string source_split,
                                  std::string retrieval_split) {
  check_rows(table, source_rows, "retrieval source");
  check_rows(table, gallery_rows, "retrieval gallery");
  if (table.pose.shape().size() != 2 ||
      table.pose.shape()[0] != table.size()) {
    throw DimError("retrieval table poses must be (N, D), got " +
                   shape_str(table.pose.shape()));
  }
  const std::int64_t d = table.pose.shape()[1];

  // Gallery views per object, ordered by view index for stable tie-breaks.
  std::map<std::int64_t, std::vector<std::int64_t>> gallery;
  for (const std::int64_t r : gallery_rows) {
    gallery[table.object_ids[static_cast<std::size_t>(r)]].push_back(r);
  }
  for (auto& [obj, rows] : gallery) {
    std::sort(rows.begin(), rows.end(),
              [&](std::int64_t a, std::int64_t b) {
                return table.view_ids[static_cast<std::size_t>(a)] <
                       table.view_ids[static_cast<std::size_t>(b)];
              });
  }

  // Enumerate (source, target) pairs.
  struct Pair {
    std::int64_t source, target;
  };
  std::vector<Pair> pairs;
  std::set<std::int64_t> paired_objects, seen_objects;
  for (const std::int64_t s : source_rows) {
    const std::int64_t obj = table.object_ids[static_cast<std::size_t>(s)];
    seen_objects.insert(obj);
    const auto it = gallery.find(obj);
    if (it == gallery.end()) continue;
    for (const std::int64_t t : it->second) {
      if (t == s) continue;
      pairs.push_back({s, t});
      paired_objects.insert(obj);
    }
  }

  RetrievalReport report;
  report.source_split = std::move(source_split);
  report.retrieval_split = std::move(retrieval_split);
  report.skipped_objects = static_cast<std::int64_t>(seen_objects.size()) -
                           static_cast<std::int64_t>(paired_objects.size());
  report.n_pairs = static_cast<std::int64_t>(pairs.size());
  if (pairs.empty()) {
    throw ContractError("retrieval_metrics found no (source, target) pair; "
                        "every object needs at least two gallery views");
  }

  const std::int64_t m = report.n_pairs;
  nd::Tensor sources({m, d});
  nd::Tensor g_rel({m, 4});
  {
    float* ps = sources.mutable_data();
    float* pg = g_rel.mutable_data();
    const float* pose = table.pose.data();
    for (std::int64_t i = 0; i < m; ++i) {
      const auto s = static_cast<std::size_t>(pairs[static_cast<std::size_t>(i)].source);
      const auto t = static_cast<std::size_t>(pairs[static_cast<std::size_t>(i)].target);
      std::copy(pose + static_cast<std::int64_t>(s) * d,
                pose + static_cast<std::int64_t>(s + 1) * d, ps + i * d);
      const rot::Quat q =
          rot::relative_rotation(table.rotations[s], table.rotations[t]);
      pg[i * 4 + 0] = q.w;
      pg[i * 4 + 1] = q.x;
      pg[i * 4 + 2] = q.y;
      pg[i * 4 + 3] = q.z;
    }
  }
  const nd::Tensor predicted = predict(sources, g_rel);
  if (predicted.shape() != nd::Shape{m, d}) {
    throw DimError("retrieval predictor returned " +
                   shape_str(predicted.shape()) + ", expected " +
                   shape_str({m, d}));
  }

  double mrr = 0.0, h1 = 0.0, h5 = 0.0, pre = 0.0;
  const float* pose = table.pose.data();
  const float* pred = predicted.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const Pair& pair = pairs[static_cast<std::size_t>(i)];
    const auto& cand =
        gallery[table.object_ids[static_cast<std::size_t>(pair.source)]];

    double target_dist = 0.0;
    std::int64_t target_view = 0;
    std::vector<double> dist(cand.size(), 0.0);
    for (std::size_t c = 0; c < cand.size(); ++c) {
      const float* row = pose + cand[c] * d;
      double acc = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(pred[i * d + j]) - row[j];
        acc += diff * diff;
      }
      dist[c] = acc;
      if (cand[c] == pair.target) {
        target_dist = acc;
        target_view = table.view_ids[static_cast<std::size_t>(cand[c])];
      }
    }

    std::int64_t rank = 1;
    std::size_t nearest = 0;
    for (std::size_t c = 0; c < cand.size(); ++c) {
      if (cand[c] != pair.target) {
        const std::int64_t view =
            table.view_ids[static_cast<std::size_t>(cand[c])];
        if (dist[c] < target_dist ||
            (dist[c] == target_dist && view < target_view)) {
          ++rank;
        }
      }
      if (dist[c] < dist[nearest]) nearest = c;
    }
    mrr += 1.0 / static_cast<double>(rank);
    h1 += rank <= 1 ? 1.0 : 0.0;
    h5 += rank <= 5 ? 1.0 : 0.0;
    pre += rot::rotation_distance(
        table.rotations[static_cast<std::size_t>(cand[nearest])],
        table.rotations[static_cast<std::size_t>(pair.target)]);
  }
  report.mrr = mrr / static_cast<double>(m);
  report.h_at_1 = h1 / static_cast<double>(m);
  report.h_at_5 = h5 / static_cast<double>(m);
  report.pre = pre / static_cast<double>(m);
  return report;
}

}  // namespace capsrep::eval
