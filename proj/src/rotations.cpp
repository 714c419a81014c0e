#include "capsrep/rotations.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace capsrep::rot {

namespace {

void require_range(float value, const char* name) {
  // Allow a hair of float slack at the boundaries.
  if (!(std::abs(static_cast<double>(value)) <= kHalfPi + 1e-6)) {
    std::ostringstream msg;
    msg << name << " = " << value << " outside [-pi/2, pi/2]";
    throw ParamError(msg.str());
  }
}

}  // namespace

TaitBryan::TaitBryan(float rx_, float ry_, float rz_) : rx(rx_), ry(ry_), rz(rz_) {
  require_range(rx, "rx");
  require_range(ry, "ry");
  require_range(rz, "rz");
}

double Quat::norm() const {
  const double dw = w, dx = x, dy = y, dz = z;
  return std::sqrt(dw * dw + dx * dx + dy * dy + dz * dz);
}

Quat Quat::normalized() const {
  const double n = norm();
  if (n < 1e-12) {
    throw NumericError("cannot normalize a near-zero quaternion");
  }
  return {static_cast<float>(w / n), static_cast<float>(x / n),
          static_cast<float>(y / n), static_cast<float>(z / n)};
}

Quat Quat::canonical() const {
  if (w > 0.0f) return *this;
  if (w < 0.0f) return {-w, -x, -y, -z};
  // w == 0: the double cover is resolved by the first nonzero component.
  for (float c : {x, y, z}) {
    if (c > 0.0f) return *this;
    if (c < 0.0f) return {-w, -x, -y, -z};
  }
  return *this;  // zero quaternion; callers validate elsewhere
}

bool Quat::is_unit(double tol) const { return std::abs(norm() - 1.0) <= tol; }

Quat operator*(const Quat& a, const Quat& b) {
  const double aw = a.w, ax = a.x, ay = a.y, az = a.z;
  const double bw = b.w, bx = b.x, by = b.y, bz = b.z;
  return {static_cast<float>(aw * bw - ax * bx - ay * by - az * bz),
          static_cast<float>(aw * bx + ax * bw + ay * bz - az * by),
          static_cast<float>(aw * by - ax * bz + ay * bw + az * bx),
          static_cast<float>(aw * bz + ax * by - ay * bx + az * bw)};
}

double dot(const Quat& a, const Quat& b) {
  return static_cast<double>(a.w) * b.w + static_cast<double>(a.x) * b.x +
         static_cast<double>(a.y) * b.y + static_cast<double>(a.z) * b.z;
}

std::array<double, 3> rotate_vector(const Quat& q,
                                    const std::array<double, 3>& v) {
  if (!q.is_unit()) {
    throw ContractError("rotate_vector requires a unit quaternion");
  }
  // Sandwich product q * (0, v) * q^-1 expanded in double for stability.
  const double qw = q.w, qx = q.x, qy = q.y, qz = q.z;
  const double tw = -qx * v[0] - qy * v[1] - qz * v[2];
  const double tx = qw * v[0] + qy * v[2] - qz * v[1];
  const double ty = qw * v[1] - qx * v[2] + qz * v[0];
  const double tz = qw * v[2] + qx * v[1] - qy * v[0];
  return {tx * qw - tw * qx - ty * qz + tz * qy,
          ty * qw - tw * qy - tz * qx + tx * qz,
          tz * qw - tw * qz - tx * qy + ty * qx};
}

Quat tait_bryan_to_quaternion(const TaitBryan& angles) {
  const double hx = 0.5 * angles.rx;
  const double hy = 0.5 * angles.ry;
  const double hz = 0.5 * angles.rz;
  const Quat qx{static_cast<float>(std::cos(hx)), static_cast<float>(std::sin(hx)), 0.0f, 0.0f};
  const Quat qy{static_cast<float>(std::cos(hy)), 0.0f, static_cast<float>(std::sin(hy)), 0.0f};
  const Quat qz{static_cast<float>(std::cos(hz)), 0.0f, 0.0f, static_cast<float>(std::sin(hz))};
  return ((qz * qy) * qx).normalized().canonical();
}

Quat relative_rotation(const Quat& q_a, const Quat& q_b) {
  if (!q_a.is_unit() || !q_b.is_unit()) {
    throw ContractError("relative_rotation requires unit quaternions");
  }
  return (q_b * q_a.conjugate()).normalized().canonical();
}

double rotation_distance(const Quat& q1, const Quat& q2) {
  if (!q1.is_unit() || !q2.is_unit()) {
    throw ContractError("rotation_distance requires unit quaternions");
  }
  const double d = dot(q1, q2);
  return std::clamp(1.0 - d * d, 0.0, 1.0);
}

std::pair<TaitBryan, Quat> sample_rotation(nd::Rng& rng) {
  const TaitBryan angles(static_cast<float>(rng.uniform(-kHalfPi, kHalfPi)),
                         static_cast<float>(rng.uniform(-kHalfPi, kHalfPi)),
                         static_cast<float>(rng.uniform(-kHalfPi, kHalfPi)));
  return {angles, tait_bryan_to_quaternion(angles)};
}

}  // namespace capsrep::rot
