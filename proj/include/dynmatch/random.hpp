#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace dynmatch {

using Seed = std::uint64_t;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Derives an independent sub-seed for a named purpose (`stream`).
constexpr Seed derive_seed(Seed base, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64(stream * 0xd1b54a32d192ed03ULL + 1));
}

/// Counter-based uniform draw for an unordered pair of ids. Pure function of
/// ({a, b}, seed); symmetric in a and b.
constexpr double pair_uniform(std::uint64_t a, std::uint64_t b, Seed seed) noexcept {
  const std::uint64_t lo = a < b ? a : b;
  const std::uint64_t hi = a < b ? b : a;
  std::uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ lo);
  h = splitmix64(h ^ (hi * 0x9e3779b97f4a7c15ULL));
  return unit_interval(h);
}

/// Sequential generator with platform-independent conversions. The engine is
/// std::mt19937_64 (its output sequence is fixed by the standard); the
/// distributions are implemented here because the standard library ones are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(splitmix64(seed)) {}

  std::uint64_t bits() { return engine_(); }

  double uniform() { return unit_interval(engine_()); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dynmatch
