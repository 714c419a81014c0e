#pragma once

#include <array>

#include "capsrep/errors.hpp"
#include "capsrep/rng.hpp"

namespace capsrep::rot {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

// Extrinsic rotations applied about x, then y, then z (R = Rz * Ry * Rx).
// Each angle is restricted to [-pi/2, pi/2].
struct TaitBryan {
  float rx = 0.0f, ry = 0.0f, rz = 0.0f;

  TaitBryan() = default;
  TaitBryan(float rx_, float ry_, float rz_);
};

struct Quat {
  float w = 1.0f, x = 0.0f, y = 0.0f, z = 0.0f;

  Quat() = default;
  Quat(float w_, float x_, float y_, float z_) : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const;
  Quat normalized() const;
  // w >= 0; on w == 0 the first nonzero of (x,y,z) is flipped positive.
  Quat canonical() const;
  Quat conjugate() const { return {w, -x, -y, -z}; }
  bool is_unit(double tol = 1e-4) const;
};

// Hamilton product a (x) b.
Quat operator*(const Quat& a, const Quat& b);

double dot(const Quat& a, const Quat& b);

// Rotates a 3-vector by the unit quaternion q (sandwich product).
std::array<double, 3> rotate_vector(const Quat& q,
                                    const std::array<double, 3>& v);

// Unit quaternion of the extrinsic X-then-Y-then-Z rotation, canonicalized.
Quat tait_bryan_to_quaternion(const TaitBryan& angles);

// q_rel = q_b (x) q_a^-1, normalized and canonicalized.
Quat relative_rotation(const Quat& q_a, const Quat& q_b);

// 1 - <q1, q2>^2, clamped to [0, 1]. Sign-invariant (double cover).
double rotation_distance(const Quat& q1, const Quat& q2);

// Uniform per-axis angles in [-pi/2, pi/2] with the paired quaternion.
std::pair<TaitBryan, Quat> sample_rotation(nd::Rng& rng);

}  // namespace capsrep::rot
