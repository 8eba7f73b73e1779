#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mppf {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** generator. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed = 0) noexcept {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 bits of randomness.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> s_{};
};

enum class StreamTag : std::uint64_t {
  kSignal = 1,
  kObservation = 2,
  kParticle = 3,
  kResample = 4,
  kInit = 5,
  kEnkf = 6,
  kMask = 7,
  kInstance = 8,
};

namespace detail {
constexpr std::uint64_t mix_key(std::uint64_t h, std::uint64_t key) noexcept {
  std::uint64_t s = h ^ (key + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}
}  // namespace detail

/// Counter-based stream: same (seed, keys...) always yields the same sequence,
/// independent of call order or thread assignment.
template <class... Keys>
Stream derive_stream(std::uint64_t seed, StreamTag tag, Keys... keys) noexcept {
  std::uint64_t h = detail::mix_key(seed, static_cast<std::uint64_t>(tag));
  ((h = detail::mix_key(h, static_cast<std::uint64_t>(keys))), ...);
  return Stream(h);
}

}  // namespace mppf
