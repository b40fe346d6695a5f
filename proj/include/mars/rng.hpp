#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mars {

// Seeded generator with portable draws. The standard distributions are
// implementation-defined, so bounded integers, uniforms and normals are
// derived here directly from the 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream for (seed, key), e.g. one per user.
  static Rng derived(std::uint64_t seed, std::uint64_t key);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[uniform_index(i)]);
    }
  }

  // k distinct elements of `pool` chosen uniformly, in draw order.
  template <typename T>
  std::vector<T> sample_without_replacement(std::span<const T> pool, std::size_t k) {
    std::vector<T> scratch(pool.begin(), pool.end());
    if (k > scratch.size()) k = scratch.size();
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(scratch[i], scratch[i + uniform_index(scratch.size() - i)]);
    }
    scratch.resize(k);
    return scratch;
  }

  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to mix seeds and keys.
std::uint64_t mix64(std::uint64_t x);

}  // namespace mars
