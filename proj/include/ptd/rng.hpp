#pragma once

// Counter-based splittable random streams. Every bootstrap replicate and
// every simulation draws from its own derived stream, so results are
// bit-reproducible regardless of how work is scheduled across threads.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>

namespace ptd {

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Standard normal quantile. Abramowitz-Stegun 26.2.23 starter refined by
// Newton steps against Phi evaluated through std::erfc; accurate to well
// below 1e-9 over the full open interval.
inline double normal_quantile(double p) {
  assert(p > 0.0 && p < 1.0);
  const double r = p < 0.5 ? p : 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(r));
  double x = t - (2.515517 + t * (0.802853 + t * 0.010328)) /
                     (1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308)));
  if (p < 0.5) x = -x;
  for (int iter = 0; iter < 4; ++iter) {
    const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
    if (pdf <= 0.0) break;
    const double step = (cdf - p) / pdf;
    x -= step;
    if (std::abs(step) < 1e-14 * (1.0 + std::abs(x))) break;
  }
  return x;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(detail::mix64(key + detail::kGolden)) {}

  // Deterministically derives a child key; derivation nests, so
  // derive(derive(seed, b), r) gives replicate b's r-th retry stream.
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return detail::mix64(detail::mix64(seed + detail::kGolden) ^
                         detail::mix64(stream + 0x632be59bd9b4e019ULL));
  }

  static RngStream derive(std::uint64_t seed, std::uint64_t stream) {
    return RngStream(derive_key(seed, stream));
  }

  std::uint64_t next_u64() {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); safe input for inverse-CDF transforms.
  double next_open_double() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); Lemire multiply-shift with rejection keeps it
  // unbiased without a hardware divide on the hot path.
  std::uint64_t next_below(std::uint64_t n) {
    assert(n > 0);
    std::uint64_t x = next_u64();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
      while (low < threshold) {
        x = next_u64();
        m = static_cast<unsigned __int128>(x) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double next_normal() { return normal_quantile(next_open_double()); }

 private:
  std::uint64_t state_;
};

}  // namespace ptd
