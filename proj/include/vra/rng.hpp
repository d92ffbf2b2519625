#pragma once

#include <cstdint>
#include <limits>

namespace vra {

// SplitMix64 finalizer; used to derive independent seeds from (seed, ids...).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Small counter-based generator satisfying UniformRandomBitGenerator. Cheap
// to construct, so training can afford one stream per record.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept : state_(mix64(seed)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, bound). Lemire's multiply-shift with rejection,
  // so results are identical across standard libraries.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    for (;;) {
      const std::uint64_t x = (*this)();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  // Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Stream-splitting scheme: training draws from one stream per (epoch, record)
// so results do not depend on how records are spread across threads.
//   epoch stream:  stream(seed, kEpochDomain, epoch)
//   record stream: stream(seed, epoch, recordIndex)
inline constexpr std::uint64_t kEpochDomain = 0xffffffffffffffffULL;

constexpr std::uint64_t streamSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(seed ^ 0x5851f42d4c957f2dULL) ^ mix64(a + 0x14057b7ef767814fULL) ^
               (mix64(b) << 1));
}

inline Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return Rng(streamSeed(seed, a, b));
}

}  // namespace vra
