#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ddkit {

/// SplitMix64 finaliser; a bijective mix of 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `stream` under master seed `seed`. Streams are a pure
/// function of (seed, stream), so work can be split across threads in any
/// way without changing what each stream draws.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/**
 * Per-stream generator. The engine is std::mt19937_64; variates are built
 * from raw 64-bit words here rather than with <random> distributions so the
 * draws are identical across standard library implementations.
 */
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}

  /// Uniform on (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Underlying engine, for <random> distributions where exact
  /// cross-library reproducibility is not needed.
  std::mt19937_64& engine() noexcept { return engine_; }

  /// Unit-mean exponential.
  double exponential() { return -std::log(uniform()); }

  /// Gamma variate of integer shape k, unit scale.
  double gamma_int(int k) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += exponential();
    return s;
  }

  /// Standard normal by Box-Muller; the second variate is kept for the
  /// next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double a = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ddkit
