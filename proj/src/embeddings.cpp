#include "capsrep/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "capsrep/ops.hpp"

namespace capsrep::eval {

nd::Tensor stack_images(const data::DatasetArchive& archive,
                        const std::vector<std::int64_t>& rows) {
  const auto& m = archive.manifest;
  const auto c = static_cast<std::int64_t>(m.channels);
  const auto h = static_cast<std::int64_t>(m.height);
  const auto w = static_cast<std::int64_t>(m.width);
  nd::Tensor out({static_cast<std::int64_t>(rows.size()), c, h, w});
  float* po = out.mutable_data();
  const std::int64_t stride = c * h * w;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::int64_t r = rows[i];
    if (r < 0 || r >= static_cast<std::int64_t>(archive.records.size())) {
      throw ParamError("stack_images row " + std::to_string(r) +
                       " out of range");
    }
    const nd::Tensor& img = archive.records[static_cast<std::size_t>(r)].image;
    if (img.numel() != stride) {
      throw DimError("record image has " + std::to_string(img.numel()) +
                     " values, manifest expects " + std::to_string(stride));
    }
    std::copy(img.data(), img.data() + stride,
              po + static_cast<std::int64_t>(i) * stride);
  }
  return out;
}

nd::Tensor gather_rows(const nd::Tensor& t,
                       const std::vector<std::int64_t>& rows) {
  if (t.shape().size() != 2) {
    throw DimError("gather_rows expects a (N, d) matrix, got " +
                   shape_str(t.shape()));
  }
  const std::int64_t d = t.shape()[1];
  nd::Tensor out({static_cast<std::int64_t>(rows.size()), d});
  float* po = out.mutable_data();
  const float* pt = t.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::int64_t r = rows[i];
    if (r < 0 || r >= t.shape()[0]) {
      throw ParamError("gather_rows row " + std::to_string(r) +
                       " out of range");
    }
    std::copy(pt + r * d, pt + (r + 1) * d,
              po + static_cast<std::int64_t>(i) * d);
  }
  return out;
}

EmbeddingTable embed_archive(const ForwardFn& forward, std::int64_t act_dim,
                             std::int64_t pose_dim,
                             const data::DatasetArchive& archive,
                             std::int64_t batch_size) {
  if (batch_size < 1) throw ParamError("embed_archive batch_size must be >= 1");
  if (act_dim < 1 || pose_dim < 1) {
    throw ParamError("embed_archive embedding dims must be positive");
  }
  const auto n = static_cast<std::int64_t>(archive.records.size());
  if (n == 0) throw ParamError("embed_archive got an empty archive");

  EmbeddingTable table;
  table.act = nd::Tensor({n, act_dim});
  table.pose = nd::Tensor({n, pose_dim});
  float* pa = table.act.mutable_data();
  float* pp = table.pose.mutable_data();

  const std::int64_t views = archive.manifest.views_per_object;
  for (std::int64_t begin = 0; begin < n; begin += batch_size) {
    const std::int64_t count = std::min(batch_size, n - begin);
    std::vector<std::int64_t> rows(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) rows[static_cast<std::size_t>(i)] = begin + i;
    const auto [act, pose] = forward(stack_images(archive, rows));
    if (act.shape() != nd::Shape{count, act_dim} ||
        pose.shape() != nd::Shape{count, pose_dim}) {
      throw DimError("embed_archive forward returned " +
                     shape_str(act.shape()) + " / " + shape_str(pose.shape()) +
                     ", expected (" + std::to_string(count) + ", " +
                     std::to_string(act_dim) + ") / (" + std::to_string(count) +
                     ", " + std::to_string(pose_dim) + ")");
    }
    std::copy(act.data(), act.data() + count * act_dim, pa + begin * act_dim);
    std::copy(pose.data(), pose.data() + count * pose_dim,
              pp + begin * pose_dim);
  }

  table.object_ids.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& rec = archive.records[static_cast<std::size_t>(i)];
    table.object_ids.push_back(rec.object_id);
    table.view_ids.push_back(views > 0 ? i % views : 0);
    table.class_ids.push_back(rec.class_id);
    table.rotations.push_back(rec.rotation);
    table.floor_hues.push_back(rec.floor_hue);
    table.light_hues.push_back(rec.light_hue);
  }
  return table;
}

EmbeddingTable embed_archive(const caps::CapsuleNetwork& net,
                             const data::DatasetArchive& archive,
                             std::int64_t batch_size) {
  const ForwardFn forward = [&net](const nd::Tensor& images) {
    const auto out = net.forward(nd::constant(images));
    return std::make_pair(out.z_act.value(), out.z_pose.value());
  };
  return embed_archive(forward, net.act_dim(), net.pose_dim(), archive,
                       batch_size);
}

PairRegressionData build_rotation_pairs(const EmbeddingTable& table,
                                        const nd::Tensor& emb,
                                        const std::vector<std::int64_t>& rows) {
  if (emb.shape().size() != 2 || emb.shape()[0] != table.size()) {
    throw DimError("build_rotation_pairs embeddings must be (N, d) with one "
                   "row per table entry, got " + shape_str(emb.shape()));
  }
  const std::int64_t d = emb.shape()[1];

  std::map<std::int64_t, std::vector<std::int64_t>> by_object;
  for (const std::int64_t r : rows) {
    if (r < 0 || r >= table.size()) {
      throw ParamError("build_rotation_pairs row " + std::to_string(r) +
                       " out of range");
    }
    by_object[table.object_ids[static_cast<std::size_t>(r)]].push_back(r);
  }

  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  for (const auto& [obj, members] : by_object) {
    for (const std::int64_t a : members) {
      for (const std::int64_t b : members) {
        if (a != b) pairs.emplace_back(a, b);
      }
    }
  }
  if (pairs.empty()) {
    throw ContractError("build_rotation_pairs found no same-object pair");
  }

  const auto m = static_cast<std::int64_t>(pairs.size());
  PairRegressionData out;
  out.inputs = nd::Tensor({m, 2 * d});
  out.targets = nd::Tensor({m, 4});
  float* pi = out.inputs.mutable_data();
  float* pt = out.targets.mutable_data();
  const float* pe = emb.data();
  for (std::int64_t i = 0; i < m; ++i) {
    const auto [a, b] = pairs[static_cast<std::size_t>(i)];
    std::copy(pe + a * d, pe + (a + 1) * d, pi + i * 2 * d);
    std::copy(pe + b * d, pe + (b + 1) * d, pi + i * 2 * d + d);
    const rot::Quat q = rot::relative_rotation(
        table.rotations[static_cast<std::size_t>(a)],
        table.rotations[static_cast<std::size_t>(b)]);
    pt[i * 4 + 0] = q.w;
    pt[i * 4 + 1] = q.x;
    pt[i * 4 + 2] = q.y;
    pt[i * 4 + 3] = q.z;
  }
  return out;
}

nd::Tensor colour_targets(const EmbeddingTable& table) {
  const std::int64_t n = table.size();
  nd::Tensor out({n, 4});
  float* d = out.mutable_data();
  constexpr double kTau = 6.283185307179586;
  for (std::int64_t i = 0; i < n; ++i) {
    const double floor = table.floor_hues[static_cast<std::size_t>(i)];
    const double light = table.light_hues[static_cast<std::size_t>(i)];
    d[i * 4 + 0] = static_cast<float>(std::cos(kTau * floor));
    d[i * 4 + 1] = static_cast<float>(std::sin(kTau * floor));
    d[i * 4 + 2] = static_cast<float>(std::cos(kTau * light));
    d[i * 4 + 3] = static_cast<float>(std::sin(kTau * light));
  }
  return out;
}

}  // namespace capsrep::eval
