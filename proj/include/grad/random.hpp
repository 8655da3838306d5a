#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "grad/matrix.hpp"

namespace grad {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Independent stream seed for a named stage.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) { return splitmix64(base ^ fnv1a(tag)); }

/// Uniform integer in [0, n) by rejection; the standard distributions are
/// implementation-defined, this is not.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
void fisher_yates(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Standard normal via Box-Muller on our own uniforms.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  NormalSampler normal;
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * normal(rng);
  return m;
}

/// Symmetric k×k standard-normal matrix with zero diagonal (upper triangle
/// drawn, mirrored).
inline Matrix symmetric_normal(std::size_t k, Rng& rng) {
  NormalSampler normal;
  Matrix m(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double v = normal(rng);
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

}  // namespace grad
