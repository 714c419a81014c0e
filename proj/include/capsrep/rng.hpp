#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "capsrep/errors.hpp"

namespace capsrep::nd {

// Deterministic RNG with serializable state. std::mt19937_64 streams its full
// state through operator<<, and the Box-Muller spare is carried explicitly, so
// a restored Rng continues the exact sequence (std::normal_distribution keeps
// hidden state and is avoided for that reason).
class Rng {
 public:
  Rng() : Rng(0x9e3779b97f4a7c15ull) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw ParamError("rng.uniform: lo > hi");
    return lo + (hi - lo) * uniform();
  }

  // Uniform integer in [0, n). Debiased via rejection.
  std::int64_t uniform_int(std::int64_t n) {
    if (n <= 0) throw ParamError("rng.uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::int64_t>(x % un);
  }

  // Standard normal via Box-Muller; the spare is cached and serialized.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0);
    if (has_spare_) {
      os << ' ';
      os.precision(17);
      os << spare_;
    }
    return os.str();
  }

  static Rng deserialize(const std::string& s) {
    Rng r;
    std::istringstream is(s);
    int spare_flag = 0;
    is >> r.engine_ >> spare_flag;
    if (is.fail()) throw IoError("rng.deserialize: malformed state string");
    r.has_spare_ = spare_flag != 0;
    if (r.has_spare_) {
      is >> r.spare_;
      if (is.fail()) throw IoError("rng.deserialize: malformed spare value");
    }
    return r;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      const std::int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed mixing for derived streams (per-epoch pairing, probes, ...).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace capsrep::nd
