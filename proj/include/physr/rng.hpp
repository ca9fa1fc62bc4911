#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

namespace physr {

/// 64-bit FNV-1a. Used to turn text keys (question ids, prompts) into seeds.
inline constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64 stream. Every draw helper below is defined in terms of
/// `next_u64` with integer arithmetic only, so a seed yields the same
/// sequence on every platform (the normal/lognormal helpers go through libm
/// and are only reproducible to the last ulp).
class SeededRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SeededRng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  /// Independent stream keyed by a seed plus any number of discriminators.
  static constexpr SeededRng derive(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t s = splitmix64_mix(seed + 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t k : keys) s = splitmix64_mix(s ^ splitmix64_mix(k + 0x632be59bd9b4e019ULL));
    return SeededRng(s);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  constexpr result_type operator()() noexcept { return next_u64(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased. n must be > 0.
  constexpr std::uint64_t uniform_below(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  constexpr bool bernoulli(double p) noexcept { return uniform01() < p; }

  /// Standard normal via Box-Muller (no cached second value).
  double normal() noexcept {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Fisher-Yates, drawing j in [0, i] for i = n-1 down to 1.
  template <typename T>
  constexpr void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(values[i - 1], values[j]);
    }
  }

  constexpr std::uint64_t state() const noexcept { return state_; }
  static constexpr SeededRng from_state(std::uint64_t state) noexcept { return SeededRng(state); }

  friend constexpr bool operator==(const SeededRng&, const SeededRng&) = default;

 private:
  std::uint64_t state_;
};

}  // namespace physr
