#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace tmeta {

// Philox4x32-10 counter-based generator (Salmon et al. 2011). Chosen so that
// replicate streams are pure functions of (seed, stream id): results do not
// depend on thread scheduling or on how many draws other streams consumed.
class Philox4x32 {
 public:
  Philox4x32(std::uint64_t key, std::uint64_t stream)
      : key0_(static_cast<std::uint32_t>(key)),
        key1_(static_cast<std::uint32_t>(key >> 32)),
        stream_(stream) {}

  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ULL; }

  result_type operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = kMul0 * static_cast<std::uint64_t>(c0);
      std::uint64_t p1 = kMul1 * static_cast<std::uint64_t>(c2);
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      std::uint32_t n0 = hi1 ^ c1 ^ k0;
      std::uint32_t n1 = lo1;
      std::uint32_t n2 = hi0 ^ c3 ^ k1;
      std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    ++counter_;
    spare_ = (static_cast<std::uint64_t>(c2) << 32) | c3;
    have_spare_ = true;
    return (static_cast<std::uint64_t>(c0) << 32) | c1;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  std::uint32_t key0_, key1_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool have_spare_ = false;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Module labels used to derive independent substreams from one global seed.
namespace streams {
constexpr std::uint64_t simulate = 0x53494d;
constexpr std::uint64_t truth = 0x545255;
constexpr std::uint64_t bootstrap = 0x424f4f;
constexpr std::uint64_t sample_split = 0x53504c;
constexpr std::uint64_t oracle_sample = 0x4f5243;
constexpr std::uint64_t population = 0x504f50;
constexpr std::uint64_t fixture = 0x464958;
}  // namespace streams

// Deterministic draws on top of Philox. Distribution code is written out so
// results do not depend on the standard library implementation.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t label, std::uint64_t index = 0)
      : engine_(seed, splitmix64(splitmix64(label) ^ splitmix64(index + 0x5851F42D4C957F2DULL))) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open() { return 1.0 - uniform(); }

  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Unbiased integer on [0, n): modulo rejection.
  std::size_t uniform_int(std::size_t n);

  // Index drawn from unnormalized nonnegative mass vector.
  std::size_t categorical(const std::vector<double>& mass);

 private:
  Philox4x32 engine_;
  double spare_normal_ = 0.0;
  bool have_spare_normal_ = false;
};

}  // namespace tmeta
