#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace ecgenkf {

/// SplitMix64 finalizer. Used both as a hash and as the step function of the
/// generator below.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31U);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return mix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6U) + (seed >> 2U)));
}

/// FNV-1a over bytes, for deriving seeds from record/method names.
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SplitMix64 engine; satisfies UniformRandomBitGenerator so it plugs into the
/// <random> distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// Independent stream keyed by (master seed, a, b, tag). Streams for distinct
/// keys never depend on how many draws other streams consumed, so evaluation
/// order cannot change results.
inline SplitMix64 substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                            std::uint64_t tag = 0) {
  return SplitMix64(hash_combine(hash_combine(hash_combine(mix64(seed), a), b), tag));
}

/// Draws standard normals from one substream.
class NormalStream {
 public:
  explicit NormalStream(SplitMix64 engine) : engine_(engine) {}
  double operator()() { return dist_(engine_); }
  double operator()(double stddev) { return stddev == 0.0 ? 0.0 : stddev * dist_(engine_); }

 private:
  SplitMix64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace ecgenkf
