#ifndef HOMOG_RNG_HPP
#define HOMOG_RNG_HPP

#include <cmath>
#include <cstdint>

namespace homog {

/// SplitMix64 engine. Self-contained so that streams are bit-identical
/// across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in (0, 1]; never returns 0 so it is safe inside log().
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
  }

  /// Standard normal via Box-Muller, one cached value.
  double next_gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// Mixes (base seed, stream, substream) into an independent seed. Used to
/// give every (sample_index, purpose) pair its own deterministic stream,
/// independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t substream = 0) {
  Rng mixer(base ^ (stream * 0xd1342543de82ef95ULL) ^
            (substream * 0xaf251af3b0f025b5ULL) ^ 0x5851f42d4c957f2dULL);
  mixer.next_u64();
  return mixer.next_u64();
}

}  // namespace homog

#endif
