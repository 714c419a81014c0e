#include "capsrep/predictor.hpp"

#include <cmath>
#include <cstdint>

namespace capsrep::pred {

namespace {

constexpr double kUnitTol = 1e-4;

void check_unit_rows(const nd::Tensor& g) {
  const std::int64_t b = g.shape()[0];
  for (std::int64_t i = 0; i < b; ++i) {
    double sq = 0.0;
    for (std::int64_t k = 0; k < 4; ++k) {
      const double v = g.at({i, k});
      sq += v * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > kUnitTol) {
      throw ContractError("predictor quaternion row " + std::to_string(i) +
                          " is not unit length");
    }
  }
}

}  // namespace

HyperPredictor::HyperPredictor(std::int64_t pose_dim, nd::Rng& rng) {
  if (pose_dim < 1) {
    throw ConfigError("predictor pose_dim must be positive, got " +
                      std::to_string(pose_dim));
  }
  d_ = pose_dim;
  const std::int64_t n = generated_param_count();
  nd::Tensor w({4, n});
  float* wd = w.mutable_data();
  for (std::int64_t i = 0; i < w.numel(); ++i) {
    wd[i] = static_cast<float>(1e-3 * rng.normal());
  }
  gen_w_ = nd::parameter(std::move(w));
  gen_b_ = nd::parameter(nd::Tensor({n}));
}

nd::Var HyperPredictor::predict(const nd::Var& z_pose,
                                const nd::Var& g_batch) const {
  const auto& zs = z_pose.value().shape();
  const auto& gs = g_batch.value().shape();
  if (zs.size() != 2 || zs[1] != d_) {
    throw DimError("predictor expects pose input (B, " + std::to_string(d_) +
                   "), got " + shape_str(zs));
  }
  if (gs.size() != 2 || gs[1] != 4) {
    throw DimError("predictor expects quaternions (B, 4), got " +
                   shape_str(gs));
  }
  if (gs[0] != zs[0]) {
    throw DimError("predictor batch mismatch: poses " + shape_str(zs) +
                   " vs quaternions " + shape_str(gs));
  }
  check_unit_rows(g_batch.value());

  const std::int64_t b = zs[0];
  const std::int64_t dd = d_ * d_;
  // (B, 2*D*D + 2*D): one generated weight vector per row.
  auto flat = nd::add(nd::matmul(g_batch, gen_w_), gen_b_);
  auto w1 = nd::reshape(nd::slice_cols(flat, 0, dd), {b, d_, d_});
  auto b1 = nd::slice_cols(flat, dd, d_);
  auto w2 = nd::reshape(nd::slice_cols(flat, dd + d_, dd), {b, d_, d_});
  auto b2 = nd::slice_cols(flat, 2 * dd + d_, d_);

  auto hidden = nd::relu(nd::add(nd::batched_matvec(w1, z_pose), b1));
  auto delta = nd::add(nd::batched_matvec(w2, hidden), b2);
  return nd::add(z_pose, delta);
}

HyperPredictor::Blocks HyperPredictor::generate_weights(
    const rot::Quat& g) const {
  if (!g.is_unit()) {
    throw ContractError("predictor quaternion is not unit length");
  }
  const std::int64_t n = generated_param_count();
  const double gv[4] = {g.w, g.x, g.y, g.z};
  const nd::Tensor& w = gen_w_.value();
  const nd::Tensor& c = gen_b_.value();
  std::vector<double> flat(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t p = 0; p < n; ++p) {
    double acc = c.data()[p];
    for (std::int64_t k = 0; k < 4; ++k) {
      acc += static_cast<double>(w.at({k, p})) * gv[k];
    }
    flat[static_cast<std::size_t>(p)] = acc;
  }

  const std::int64_t dd = d_ * d_;
  Blocks out{nd::Tensor({d_, d_}), nd::Tensor({d_}), nd::Tensor({d_, d_}),
             nd::Tensor({d_})};
  float* w1 = out.w1.mutable_data();
  float* w2 = out.w2.mutable_data();
  for (std::int64_t i = 0; i < dd; ++i) {
    w1[i] = static_cast<float>(flat[static_cast<std::size_t>(i)]);
    w2[i] = static_cast<float>(flat[static_cast<std::size_t>(dd + d_ + i)]);
  }
  float* b1 = out.b1.mutable_data();
  float* b2 = out.b2.mutable_data();
  for (std::int64_t i = 0; i < d_; ++i) {
    b1[i] = static_cast<float>(flat[static_cast<std::size_t>(dd + i)]);
    b2[i] = static_cast<float>(flat[static_cast<std::size_t>(2 * dd + d_ + i)]);
  }
  return out;
}

std::vector<std::pair<std::string, nd::Var>> HyperPredictor::named_parameters()
    const {
  return {{"predictor.gen_w", gen_w_}, {"predictor.gen_b", gen_b_}};
}

nd::Tensor pack_quaternions(const std::vector<rot::Quat>& quats) {
  nd::Tensor out({static_cast<std::int64_t>(quats.size()), 4});
  float* d = out.mutable_data();
  for (std::size_t i = 0; i < quats.size(); ++i) {
    d[4 * i + 0] = static_cast<float>(quats[i].w);
    d[4 * i + 1] = static_cast<float>(quats[i].x);
    d[4 * i + 2] = static_cast<float>(quats[i].y);
    d[4 * i + 3] = static_cast<float>(quats[i].z);
  }
  return out;
}

}  // namespace capsrep::pred
