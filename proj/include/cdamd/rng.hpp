#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "cdamd/types.hpp"

namespace cdamd {

// Counter-based pseudo random stream. A generator is a (key, counter) pair;
// every draw hashes key + counter, so independent streams can be derived by
// name or index without sharing state. Parallel generation over derived
// streams matches serial generation exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kSeedTag)) {}

  // Derived stream keyed by a label, e.g. rng.stream("corpus").
  Rng stream(std::string_view name) const {
    return Rng(mix(key_ ^ fnv1a(name)), 0);
  }

  // Derived stream keyed by an index (per-sample, per-position streams).
  Rng stream(std::uint64_t index) const {
    return Rng(mix(key_ ^ (index * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL)), 0);
  }

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) {
    return static_cast<int>(static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * static_cast<std::uint64_t>(n)) >> 64));
  }

  // Standard normal via Box-Muller (single value per pair of uniforms; the
  // sine half is discarded to keep the stream strictly counter-addressed).
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class Scalar>
  void fill_normal(Mat<Scalar>& m, Scalar scale = Scalar(1)) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        m(r, c) = static_cast<Scalar>(normal()) * scale;
  }

  template <class Scalar>
  Mat<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols, Scalar scale = Scalar(1)) {
    Mat<Scalar> m(rows, cols);
    fill_normal(m, scale);
    return m;
  }

  // Fisher-Yates shuffle of [0, n).
  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)],
                                              p[static_cast<std::size_t>(uniform_int(i + 1))]);
    return p;
  }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  static constexpr std::uint64_t kSeedTag = 0xC0DA4D0000000001ULL;

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cdamd
