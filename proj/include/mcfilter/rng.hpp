#ifndef MCFILTER_RNG_HPP
#define MCFILTER_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace mcfilter {

/// Seedable stream generator. Every Monte-Carlo trial owns one stream, keyed
/// by an integer stream id, so trials are independent of scheduling order.
///
/// Uniform variates are built from the raw 64-bit engine output rather than
/// std distributions, whose algorithms are implementation-defined, so that
/// results are identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t stream) : engine_(mix(stream)) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the result exactly uniform.
    const std::uint64_t limit = -n % n;
    while (true) {
      const std::uint64_t x = engine_();
      if (x >= limit)
        return x % n;
    }
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer; decorrelates neighbouring stream ids
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

} // namespace mcfilter

#endif
