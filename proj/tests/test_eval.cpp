#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include "capsrep/dataset.hpp"
#include "capsrep/embeddings.hpp"
#include "capsrep/metrics.hpp"
#include "capsrep/network.hpp"
#include "capsrep/probes.hpp"
#include "capsrep/rng.hpp"
#include "capsrep/util.hpp"

using capsrep::eval::EmbeddingTable;
using capsrep::eval::Probe;
using capsrep::eval::ProbeConfig;
using capsrep::eval::ProbeKind;
using capsrep::eval::RetrievalReport;
using capsrep::nd::Tensor;
using capsrep::rot::Quat;

namespace {

Tensor make(capsrep::nd::Shape shape, const std::vector<float>& v) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t.mutable_data()[i] = v[static_cast<std::size_t>(i)];
  }
  return t;
}

Tensor random_tensor(capsrep::nd::Shape shape, capsrep::nd::Rng& rng,
                     double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  float* d = t.mutable_data();
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    d[i] = static_cast<float>(rng.uniform(lo, hi));
  }
  return t;
}

Quat random_unit_quat(capsrep::nd::Rng& rng) {
  Quat q{static_cast<float>(rng.normal()), static_cast<float>(rng.normal()),
         static_cast<float>(rng.normal()), static_cast<float>(rng.normal())};
  return q.normalized().canonical();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(float) * static_cast<std::size_t>(a.numel())) == 0;
}

// Synthetic table: `views_per_object` rows per object, pose width d.
EmbeddingTable toy_table(std::int64_t objects, std::int64_t views,
                         std::int64_t d, capsrep::nd::Rng& rng) {
  EmbeddingTable table;
  const std::int64_t n = objects * views;
  table.pose = random_tensor({n, d}, rng);
  table.act = random_tensor({n, 4}, rng, 0.0, 1.0);
  for (std::int64_t o = 0; o < objects; ++o) {
    for (std::int64_t v = 0; v < views; ++v) {
      table.object_ids.push_back(o);
      table.view_ids.push_back(v);
      table.class_ids.push_back(o % 2);
      table.rotations.push_back(random_unit_quat(rng));
      table.floor_hues.push_back(static_cast<float>(rng.uniform()));
      table.light_hues.push_back(static_cast<float>(rng.uniform()));
    }
  }
  return table;
}

std::vector<std::int64_t> all_rows(const EmbeddingTable& t) {
  std::vector<std::int64_t> rows(static_cast<std::size_t>(t.size()));
  for (std::int64_t i = 0; i < t.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

std::uint64_t param_checksum(const capsrep::caps::CapsuleNetwork& net) {
  std::vector<std::uint8_t> bytes;
  for (const auto& [name, var] : net.named_parameters()) {
    const float* d = var.value().data();
    const auto* raw = reinterpret_cast<const std::uint8_t*>(d);
    bytes.insert(bytes.end(), raw,
                 raw + sizeof(float) * static_cast<std::size_t>(var.numel()));
  }
  return capsrep::util::fnv1a64(bytes.data(), bytes.size());
}

}  // namespace

TEST_CASE("r_squared matches its closed-form anchors") {
  capsrep::nd::Rng rng(91);
  const Tensor y = random_tensor({6, 3}, rng);
  CHECK(capsrep::eval::r_squared(y, y) == doctest::Approx(1.0).epsilon(1e-12));

  // Predicting the column mean for every row scores exactly zero.
  Tensor mean_pred({6, 3});
  for (std::int64_t j = 0; j < 3; ++j) {
    double m = 0.0;
    for (std::int64_t i = 0; i < 6; ++i) m += y.at({i, j});
    m /= 6.0;
    for (std::int64_t i = 0; i < 6; ++i) {
      mean_pred.mutable_data()[i * 3 + j] = static_cast<float>(m);
    }
  }
  CHECK(capsrep::eval::r_squared(y, mean_pred) ==
        doctest::Approx(0.0).epsilon(1e-5));

  const Tensor small_y = make({2, 1}, {0.0f, 1.0f});
  const Tensor swapped = make({2, 1}, {1.0f, 0.0f});
  CHECK(capsrep::eval::r_squared(small_y, swapped) ==
        doctest::Approx(-3.0).epsilon(1e-12));
}

TEST_CASE("r_squared is permutation invariant and rejects degenerate input") {
  capsrep::nd::Rng rng(92);
  const Tensor y = random_tensor({5, 2}, rng);
  const Tensor p = random_tensor({5, 2}, rng);
  const std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
  Tensor y2({5, 2}), p2({5, 2});
  for (std::int64_t i = 0; i < 5; ++i) {
    for (std::int64_t j = 0; j < 2; ++j) {
      y2.mutable_data()[i * 2 + j] = y.at({perm[static_cast<std::size_t>(i)], j});
      p2.mutable_data()[i * 2 + j] = p.at({perm[static_cast<std::size_t>(i)], j});
    }
  }
  CHECK(capsrep::eval::r_squared(y, p) ==
        doctest::Approx(capsrep::eval::r_squared(y2, p2)).epsilon(1e-12));

  CHECK_THROWS_AS(capsrep::eval::r_squared(Tensor::full({4, 2}, 3.0f),
                                           random_tensor({4, 2}, rng)),
                  capsrep::DegenerateTargetError);
  CHECK_THROWS_AS(capsrep::eval::r_squared(Tensor({1, 2}), Tensor({1, 2})),
                  capsrep::DegenerateBatchError);
  CHECK_THROWS_AS(capsrep::eval::r_squared(Tensor({4, 2}), Tensor({4, 3})),
                  capsrep::DimError);
}

TEST_CASE("an oracle predictor drives retrieval metrics to their optimum") {
  capsrep::nd::Rng rng(93);
  const std::int64_t objects = 2, views = 4;
  EmbeddingTable table = toy_table(objects, views, 4, rng);
  // Embed each view as its own canonical quaternion.
  for (std::int64_t i = 0; i < table.size(); ++i) {
    const Quat& q = table.rotations[static_cast<std::size_t>(i)];
    float* row = table.pose.mutable_data() + i * 4;
    row[0] = q.w;
    row[1] = q.x;
    row[2] = q.y;
    row[3] = q.z;
  }

  const capsrep::eval::PredictFn oracle = [](const Tensor& src,
                                             const Tensor& g) {
    const std::int64_t m = src.shape()[0];
    Tensor out({m, 4});
    for (std::int64_t i = 0; i < m; ++i) {
      const Quat q{src.at({i, 0}), src.at({i, 1}), src.at({i, 2}),
                   src.at({i, 3})};
      const Quat rel{g.at({i, 0}), g.at({i, 1}), g.at({i, 2}), g.at({i, 3})};
      const Quat target = (rel * q).canonical();
      float* row = out.mutable_data() + i * 4;
      row[0] = target.w;
      row[1] = target.x;
      row[2] = target.y;
      row[3] = target.z;
    }
    return out;
  };

  const auto rows = all_rows(table);
  const RetrievalReport r = capsrep::eval::retrieval_metrics(
      table, oracle, rows, rows, "all", "all");
  CHECK(r.n_pairs == objects * views * (views - 1));
  CHECK(r.mrr == 1.0);
  CHECK(r.h_at_1 == 1.0);
  CHECK(r.h_at_5 == 1.0);
  CHECK(r.pre < 1e-6);
  CHECK(r.skipped_objects == 0);
}

TEST_CASE("an identity predictor over two-view objects ranks targets second") {
  capsrep::nd::Rng rng(94);
  EmbeddingTable table = toy_table(3, 2, 5, rng);
  const capsrep::eval::PredictFn identity = [](const Tensor& src,
                                               const Tensor&) { return src; };
  const auto rows = all_rows(table);
  const RetrievalReport r = capsrep::eval::retrieval_metrics(
      table, identity, rows, rows, "all", "all");
  CHECK(r.n_pairs == 6);
  CHECK(r.mrr == 0.5);
  CHECK(r.h_at_1 == 0.0);
  CHECK(r.h_at_5 == 1.0);

  // The nearest neighbour is always the source itself, so the rotation
  // error is the mean source-to-target distance.
  double want = 0.0;
  for (std::int64_t o = 0; o < 3; ++o) {
    const auto& qa = table.rotations[static_cast<std::size_t>(2 * o)];
    const auto& qb = table.rotations[static_cast<std::size_t>(2 * o + 1)];
    want += 2.0 * capsrep::rot::rotation_distance(qa, qb);
  }
  want /= 6.0;
  CHECK(r.pre == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("random retrieval over fifty views per object hits two percent") {
  capsrep::nd::Rng rng(95);
  EmbeddingTable table = toy_table(2, 50, 8, rng);
  capsrep::nd::Rng noise(96);
  const capsrep::eval::PredictFn random_fn = [&noise](const Tensor& src,
                                                      const Tensor&) {
    return random_tensor({src.shape()[0], src.shape()[1]}, noise);
  };
  const auto rows = all_rows(table);
  const RetrievalReport r = capsrep::eval::retrieval_metrics(
      table, random_fn, rows, rows, "all", "all");
  CHECK(r.n_pairs == 2 * 50 * 49);
  CHECK(std::abs(r.h_at_1 - 0.02) < 0.01);
  CHECK(r.h_at_1 <= r.mrr);
  CHECK(r.h_at_1 <= r.h_at_5);
  CHECK(r.h_at_5 <= 1.0);
  CHECK(r.mrr <= 1.0);
  CHECK(r.pre >= 0.0);
  CHECK(r.pre <= 1.0);
}

TEST_CASE("retrieval metrics match a brute-force enumeration") {
  capsrep::nd::Rng rng(97);
  const std::int64_t d = 6;
  EmbeddingTable table = toy_table(3, 5, d, rng);

  // Deterministic nontrivial predictor shared by both computations.
  const auto predict_row = [d](const float* src, const float* g,
                               float* out) {
    for (std::int64_t j = 0; j < d; ++j) {
      out[j] = 0.5f * src[j] + 0.25f * g[j % 4] +
               0.1f * static_cast<float>(j);
    }
  };
  const capsrep::eval::PredictFn fn = [&predict_row, d](const Tensor& src,
                                                        const Tensor& g) {
    Tensor out({src.shape()[0], d});
    for (std::int64_t i = 0; i < src.shape()[0]; ++i) {
      predict_row(src.data() + i * d, g.data() + i * 4,
                  out.mutable_data() + i * d);
    }
    return out;
  };

  const auto rows = all_rows(table);
  const RetrievalReport got = capsrep::eval::retrieval_metrics(
      table, fn, rows, rows, "all", "all");

  double mrr = 0.0, h1 = 0.0, h5 = 0.0, pre = 0.0;
  std::int64_t pairs = 0;
  for (std::int64_t s = 0; s < table.size(); ++s) {
    for (std::int64_t t = 0; t < table.size(); ++t) {
      if (t == s || table.object_ids[static_cast<std::size_t>(s)] !=
                        table.object_ids[static_cast<std::size_t>(t)]) {
        continue;
      }
      ++pairs;
      const Quat grel = capsrep::rot::relative_rotation(
          table.rotations[static_cast<std::size_t>(s)],
          table.rotations[static_cast<std::size_t>(t)]);
      const float g[4] = {grel.w, grel.x, grel.y, grel.z};
      std::vector<float> pred(static_cast<std::size_t>(d));
      predict_row(table.pose.data() + s * d, g, pred.data());

      std::int64_t rank = 1, nearest = -1;
      double target_dist = 0.0, best = 0.0;
      const auto dist_to = [&](std::int64_t c) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          const double diff = static_cast<double>(pred[static_cast<std::size_t>(j)]) -
                              table.pose.at({c, j});
          acc += diff * diff;
        }
        return acc;
      };
      target_dist = dist_to(t);
      for (std::int64_t c = 0; c < table.size(); ++c) {
        if (table.object_ids[static_cast<std::size_t>(c)] !=
            table.object_ids[static_cast<std::size_t>(s)]) {
          continue;
        }
        const double dc = dist_to(c);
        if (c != t && (dc < target_dist ||
                       (dc == target_dist &&
                        table.view_ids[static_cast<std::size_t>(c)] <
                            table.view_ids[static_cast<std::size_t>(t)]))) {
          ++rank;
        }
        if (nearest < 0 || dc < best) {
          nearest = c;
          best = dc;
        }
      }
      mrr += 1.0 / static_cast<double>(rank);
      h1 += rank <= 1;
      h5 += rank <= 5;
      pre += capsrep::rot::rotation_distance(
          table.rotations[static_cast<std::size_t>(nearest)],
          table.rotations[static_cast<std::size_t>(t)]);
    }
  }
  CHECK(got.n_pairs == pairs);
  CHECK(got.mrr == doctest::Approx(mrr / pairs).epsilon(1e-12));
  CHECK(got.h_at_1 == doctest::Approx(h1 / pairs).epsilon(1e-12));
  CHECK(got.h_at_5 == doctest::Approx(h5 / pairs).epsilon(1e-12));
  CHECK(got.pre == doctest::Approx(pre / pairs).epsilon(1e-12));
}

TEST_CASE("single-view objects are skipped and empty retrieval throws") {
  capsrep::nd::Rng rng(98);
  EmbeddingTable table = toy_table(2, 2, 3, rng);
  // Drop object 1's second view from the gallery: it can yield no pair.
  const std::vector<std::int64_t> sources{0, 1, 2};
  const std::vector<std::int64_t> gallery{0, 1, 2};
  const capsrep::eval::PredictFn identity = [](const Tensor& src,
                                               const Tensor&) { return src; };
  const RetrievalReport r = capsrep::eval::retrieval_metrics(
      table, identity, sources, gallery, "train", "train");
  CHECK(r.n_pairs == 2);
  CHECK(r.skipped_objects == 1);
  CHECK(r.source_split == "train");
  CHECK(r.retrieval_split == "train");

  CHECK_THROWS_AS(capsrep::eval::retrieval_metrics(table, identity, {0}, {0},
                                                   "a", "b"),
                  capsrep::ContractError);
  CHECK_THROWS_AS(capsrep::eval::retrieval_metrics(table, identity, {99}, {0},
                                                   "a", "b"),
                  capsrep::ParamError);
}

TEST_CASE("a linear probe separates well-separated classes perfectly") {
  capsrep::nd::Rng rng(99);
  const std::int64_t n = 60, k = 3, in = 4;
  Tensor x({n, in});
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t c = i % k;
    labels.push_back(c);
    for (std::int64_t j = 0; j < in; ++j) {
      x.mutable_data()[i * in + j] = static_cast<float>(
          (j == c ? 1.0 : 0.0) + 0.1 * rng.uniform(-1.0, 1.0));
    }
  }
  ProbeConfig cfg;
  cfg.in_dim = in;
  cfg.out_dim = k;
  cfg.epochs = 200;
  cfg.batch = 16;
  cfg.seed = 5;
  const Probe probe = capsrep::eval::train_probe(
      x, capsrep::eval::one_hot(labels, k), ProbeKind::kClassification, cfg);
  CHECK(capsrep::eval::classification_accuracy(probe, x, labels) == 1.0);
}

TEST_CASE("a probe on shuffled labels scores at chance on held-out rows") {
  capsrep::nd::Rng rng(100);
  const std::int64_t n = 240, k = 4, in = 6;
  const Tensor x = random_tensor({n, in}, rng);
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < n; ++i) {
    labels.push_back(static_cast<std::int64_t>(rng.uniform_int(k)));
  }
  const std::vector<std::int64_t> train_labels(labels.begin(),
                                               labels.begin() + 120);
  Tensor x_train({120, in}), x_test({120, in});
  std::copy(x.data(), x.data() + 120 * in, x_train.mutable_data());
  std::copy(x.data() + 120 * in, x.data() + 240 * in, x_test.mutable_data());
  const std::vector<std::int64_t> test_labels(labels.begin() + 120,
                                              labels.end());

  ProbeConfig cfg;
  cfg.in_dim = in;
  cfg.out_dim = k;
  cfg.epochs = 60;
  cfg.batch = 32;
  cfg.seed = 6;
  const Probe probe = capsrep::eval::train_probe(
      x_train, capsrep::eval::one_hot(train_labels, k),
      ProbeKind::kClassification, cfg);
  const double acc =
      capsrep::eval::classification_accuracy(probe, x_test, test_labels);
  const double sigma = std::sqrt(0.25 * 0.75 / 120.0);
  CHECK(std::abs(acc - 0.25) <= 3.0 * sigma);
}

TEST_CASE("regression probes recover a quaternion embedded in the input") {
  capsrep::nd::Rng rng(101);
  const std::int64_t n = 100, in = 8;
  Tensor x = random_tensor({n, in}, rng);
  Tensor y({n, 4});
  for (std::int64_t i = 0; i < n; ++i) {
    const Quat q = random_unit_quat(rng);
    const float vals[4] = {q.w, q.x, q.y, q.z};
    for (int j = 0; j < 4; ++j) {
      y.mutable_data()[i * 4 + j] = vals[j];
      x.mutable_data()[i * in + 2 + j] = vals[j];
    }
  }
  ProbeConfig cfg;
  cfg.in_dim = in;
  cfg.out_dim = 4;
  cfg.epochs = 300;
  cfg.batch = 25;
  cfg.adam.lr = 5e-3f;
  cfg.seed = 7;
  const Probe probe =
      capsrep::eval::train_probe(x, y, ProbeKind::kRegression, cfg);
  CHECK(capsrep::eval::quaternion_r2(probe, x, y) > 0.99);
  CHECK(capsrep::eval::regression_r2(probe, x, y) > 0.99);
}

TEST_CASE("quaternion scoring folds the double cover before comparing") {
  capsrep::nd::Rng rng(102);
  const std::int64_t n = 80, in = 6;
  Tensor x = random_tensor({n, in}, rng);
  Tensor y({n, 4});
  Tensor y_neg({n, 4});
  for (std::int64_t i = 0; i < n; ++i) {
    const Quat q = random_unit_quat(rng);
    const float vals[4] = {q.w, q.x, q.y, q.z};
    for (int j = 0; j < 4; ++j) {
      y.mutable_data()[i * 4 + j] = vals[j];
      y_neg.mutable_data()[i * 4 + j] = -vals[j];
      x.mutable_data()[i * in + 1 + j] = vals[j];
    }
  }
  ProbeConfig cfg;
  cfg.in_dim = in;
  cfg.out_dim = 4;
  cfg.epochs = 300;
  cfg.batch = 20;
  cfg.adam.lr = 5e-3f;
  cfg.seed = 8;
  // Trained to emit the sign-flipped quaternion: raw R^2 collapses, the
  // canonicalized score does not.
  const Probe probe =
      capsrep::eval::train_probe(x, y_neg, ProbeKind::kRegression, cfg);
  CHECK(capsrep::eval::quaternion_r2(probe, x, y) > 0.9);
  CHECK(capsrep::eval::regression_r2(probe, x, y) < 0.0);
}

TEST_CASE("probe training is deterministic per seed") {
  capsrep::nd::Rng rng(103);
  const Tensor x = random_tensor({40, 5}, rng);
  const Tensor y = random_tensor({40, 2}, rng);
  ProbeConfig cfg;
  cfg.in_dim = 5;
  cfg.out_dim = 2;
  cfg.hidden = 8;
  cfg.epochs = 10;
  cfg.batch = 8;
  cfg.seed = 9;
  const Probe a = capsrep::eval::train_probe(x, y, ProbeKind::kRegression, cfg);
  const Probe b = capsrep::eval::train_probe(x, y, ProbeKind::kRegression, cfg);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(bitwise_equal(a.parameters()[i].value(), b.parameters()[i].value()));
  }
  cfg.seed = 10;
  const Probe c = capsrep::eval::train_probe(x, y, ProbeKind::kRegression, cfg);
  CHECK_FALSE(bitwise_equal(a.parameters()[0].value(),
                            c.parameters()[0].value()));
}

TEST_CASE("probe configuration errors are rejected") {
  capsrep::nd::Rng rng(104);
  const Tensor x = random_tensor({10, 5}, rng);
  const Tensor y = random_tensor({10, 2}, rng);
  ProbeConfig cfg;
  cfg.in_dim = 4;  // mismatched with x
  cfg.out_dim = 2;
  CHECK_THROWS_AS(capsrep::eval::train_probe(x, y, ProbeKind::kRegression, cfg),
                  capsrep::ConfigError);
  cfg.in_dim = 5;
  cfg.out_dim = 3;  // mismatched with y
  CHECK_THROWS_AS(capsrep::eval::train_probe(x, y, ProbeKind::kRegression, cfg),
                  capsrep::ConfigError);
  CHECK_THROWS_AS(capsrep::eval::one_hot({0, 3}, 3), capsrep::ParamError);
}

TEST_CASE("embedding an archive is deterministic and leaves the net intact") {
  capsrep::data::DatasetManifest m;
  m.classes = 2;
  m.objects_per_class = 2;
  m.views_per_object = 3;
  m.height = 16;
  m.width = 16;
  m.seed = 400;
  const auto archive = capsrep::data::generate_dataset(m);

  capsrep::caps::NetworkConfig nc;
  nc.encoder.image_size = 16;
  nc.encoder.stages = {{8, 3, 2, 1}, {8, 3, 2, 1}};
  nc.n_caps = 2;
  const capsrep::caps::CapsuleNetwork net(nc, 41);

  const std::uint64_t before = param_checksum(net);
  const EmbeddingTable t1 = capsrep::eval::embed_archive(net, archive, 5);
  const EmbeddingTable t2 = capsrep::eval::embed_archive(net, archive, 5);
  CHECK(param_checksum(net) == before);
  CHECK(bitwise_equal(t1.act, t2.act));
  CHECK(bitwise_equal(t1.pose, t2.pose));
  CHECK(t1.act.shape() == capsrep::nd::Shape{12, 2});
  CHECK(t1.pose.shape() == capsrep::nd::Shape{12, 32});

  for (std::int64_t i = 0; i < 12; ++i) {
    CHECK(t1.object_ids[static_cast<std::size_t>(i)] == i / 3);
    CHECK(t1.view_ids[static_cast<std::size_t>(i)] == i % 3);
    CHECK(t1.class_ids[static_cast<std::size_t>(i)] == (i / 3) / 2);
  }

  // Activation rows from the routing layer live on the simplex.
  for (std::int64_t i = 0; i < 12; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < 2; ++j) sum += t1.act.at({i, j});
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }

  // Probe training on the frozen embeddings cannot touch the backbone.
  ProbeConfig cfg;
  cfg.in_dim = 2;
  cfg.out_dim = 2;
  cfg.epochs = 3;
  cfg.batch = 6;
  std::vector<std::int64_t> labels(12, 0);
  for (std::size_t i = 6; i < 12; ++i) labels[i] = 1;
  capsrep::eval::train_probe(t1.act, capsrep::eval::one_hot(labels, 2),
                             ProbeKind::kClassification, cfg);
  CHECK(param_checksum(net) == before);
}

TEST_CASE("image stacking and row gathering copy exact values") {
  capsrep::data::DatasetManifest m;
  m.classes = 1;
  m.objects_per_class = 2;
  m.views_per_object = 2;
  m.height = 12;
  m.width = 12;
  m.seed = 401;
  const auto archive = capsrep::data::generate_dataset(m);

  const Tensor batch = capsrep::eval::stack_images(archive, {2, 0});
  CHECK(batch.shape() == capsrep::nd::Shape{2, 3, 12, 12});
  CHECK(std::memcmp(batch.data(), archive.records[2].image.data(),
                    sizeof(float) * 3 * 12 * 12) == 0);
  CHECK(std::memcmp(batch.data() + 3 * 12 * 12,
                    archive.records[0].image.data(),
                    sizeof(float) * 3 * 12 * 12) == 0);
  CHECK_THROWS_AS(capsrep::eval::stack_images(archive, {4}),
                  capsrep::ParamError);

  capsrep::nd::Rng rng(105);
  const Tensor t = random_tensor({4, 3}, rng);
  const Tensor g = capsrep::eval::gather_rows(t, {3, 1});
  for (std::int64_t j = 0; j < 3; ++j) {
    CHECK(g.at({0, j}) == t.at({3, j}));
    CHECK(g.at({1, j}) == t.at({1, j}));
  }
  CHECK_THROWS_AS(capsrep::eval::gather_rows(t, {4}), capsrep::ParamError);
}

TEST_CASE("rotation pair construction concatenates embeddings and targets") {
  capsrep::nd::Rng rng(106);
  EmbeddingTable table = toy_table(2, 3, 4, rng);
  const auto rows = all_rows(table);
  const auto data =
      capsrep::eval::build_rotation_pairs(table, table.pose, rows);
  CHECK(data.inputs.shape() == capsrep::nd::Shape{12, 8});
  CHECK(data.targets.shape() == capsrep::nd::Shape{12, 4});

  // First object's pairs come first; spot-check pair (0 -> 1).
  for (std::int64_t j = 0; j < 4; ++j) {
    CHECK(data.inputs.at({0, j}) == table.pose.at({0, j}));
    CHECK(data.inputs.at({0, 4 + j}) == table.pose.at({1, j}));
  }
  const Quat want = capsrep::rot::relative_rotation(table.rotations[0],
                                                    table.rotations[1]);
  CHECK(data.targets.at({0, 0}) == want.w);
  CHECK(data.targets.at({0, 1}) == want.x);
  CHECK(data.targets.at({0, 2}) == want.y);
  CHECK(data.targets.at({0, 3}) == want.z);
  for (std::int64_t i = 0; i < 12; ++i) {
    CHECK(data.targets.at({i, 0}) >= 0.0f);  // canonical hemisphere
  }

  // Restricting the rows restricts the pairs.
  const auto sub =
      capsrep::eval::build_rotation_pairs(table, table.pose, {0, 1, 3});
  CHECK(sub.inputs.shape()[0] == 2);
  CHECK_THROWS_AS(capsrep::eval::build_rotation_pairs(table, table.pose, {0, 3}),
                  capsrep::ContractError);
}

TEST_CASE("colour targets encode both hues on the unit circle") {
  capsrep::nd::Rng rng(107);
  EmbeddingTable table = toy_table(1, 4, 3, rng);
  const Tensor t = capsrep::eval::colour_targets(table);
  CHECK(t.shape() == capsrep::nd::Shape{4, 4});
  for (std::int64_t i = 0; i < 4; ++i) {
    const double floor = table.floor_hues[static_cast<std::size_t>(i)];
    const double light = table.light_hues[static_cast<std::size_t>(i)];
    CHECK(t.at({i, 0}) == doctest::Approx(std::cos(2 * M_PI * floor)));
    CHECK(t.at({i, 1}) == doctest::Approx(std::sin(2 * M_PI * floor)));
    CHECK(t.at({i, 2}) == doctest::Approx(std::cos(2 * M_PI * light)));
    CHECK(t.at({i, 3}) == doctest::Approx(std::sin(2 * M_PI * light)));
  }
}
