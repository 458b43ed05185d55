#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace priming {

/// Inner product used wherever a ranking or argmax decision is made.
///
/// Defined as sequential accumulation of double(a[i]) * double(b[i]) over
/// i = 0..n-1. Pinning the summation order makes every tie-break and every
/// top-k boundary reproducible across chunk sizes and worker counts.
inline double ranking_dot(const float* a, const float* b, Eigen::Index n) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline double ranking_dot(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  return ranking_dot(a.data(), b.data(), a.size());
}

/// SplitMix64 (Steele et al.), the project's deterministic generator. Used for
/// synthetic data and shot sampling so results do not depend on the standard
/// library's distribution implementations.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in (0, 1]: (next() >> 11) is 53 random bits; +1 avoids zero.
  double next_unit() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) via modulo. Bias is irrelevant here; what
  /// matters is that the draw sequence is fully specified.
  std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }
};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + 0x9E3779B97F4A7C15ULL) ^ mix64(stream));
}

/// Standard normal via Box-Muller on SplitMix64 uniforms; draws come in pairs
/// and the spare is cached, so the stream is a pure function of the seed.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = rng_.next_unit();
    const double u2 = rng_.next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Eigen::VectorXd vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = next();
    return v;
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates with SplitMix64 index draws; fully specified permutation.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace priming
