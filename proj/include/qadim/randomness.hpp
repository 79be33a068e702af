#pragma once

// Counter-based per-node random streams, the uniform-simplex sampler and the
// Beta(1, n-1) distribution helpers.
//
// Stream derivation (frozen):
//   bytes  = BE64(level) || digit_0 || digit_1 || ...      (one byte per digit)
//   h      = mix64(master_seed ^ kSeedSalt)
//   for each 8-byte big-endian word w of bytes (last word zero-padded):
//     h    = mix64((h ^ w) + kGolden)
//   output i (i = 1, 2, ...) = mix64(h + i * kGolden)
// Trial seeds use the same absorber with the level field replaced by the
// reserved tag word 0x80 00 00 00 00 00 00 00 followed by BE64(trial index);
// no node level reaches 2^56, so the two encodings never coincide.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "qadim/errors.hpp"
#include "qadim/tree_core.hpp"

namespace qadim {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
inline constexpr std::uint64_t kSeedSalt = 0x6a09e667f3bcc909ULL;
inline constexpr std::uint64_t kTrialTag = 0x8000000000000000ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Satisfies std::uniform_random_bit_generator.
class NodeGenerator {
 public:
  using result_type = std::uint64_t;

  constexpr explicit NodeGenerator(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t consumed() const noexcept { return counter_; }

  friend constexpr bool operator==(const NodeGenerator&, const NodeGenerator&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

namespace detail {

class Absorber {
 public:
  constexpr explicit Absorber(std::uint64_t seed) noexcept : h_(mix64(seed ^ kSeedSalt)) {}

  constexpr void word(std::uint64_t w) noexcept { h_ = mix64((h_ ^ w) + kGolden); }

  constexpr void bytes(std::span<const Digit> bs) noexcept {
    std::size_t i = 0;
    for (; i + 8 <= bs.size(); i += 8) {
      std::uint64_t w = 0;
      for (std::size_t k = 0; k < 8; ++k) w = (w << 8) | bs[i + k];
      word(w);
    }
    if (i < bs.size()) {
      std::uint64_t w = 0;
      std::size_t k = 0;
      for (; i < bs.size(); ++i, ++k) w = (w << 8) | bs[i];
      word(w << (8 * (8 - k)));
    }
  }

  constexpr std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_;
};

}  // namespace detail

inline NodeGenerator derive_generator(std::uint64_t master_seed, std::span<const Digit> digits) {
  detail::Absorber a(master_seed);
  a.word(static_cast<std::uint64_t>(digits.size()));
  a.bytes(digits);
  return NodeGenerator(a.value());
}

inline NodeGenerator derive_generator(std::uint64_t master_seed, const NodePath& path) {
  return derive_generator(master_seed, path.digits());
}

// Seed of the random measure used by Monte Carlo trial `trial`.
inline std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial) {
  detail::Absorber a(master_seed);
  a.word(kTrialTag);
  a.word(trial);
  return a.value();
}

// Uniform on (0, 1] with 53 random bits.
template <std::uniform_random_bit_generator G>
double uniform_open_closed(G& gen) {
  return static_cast<double>((static_cast<std::uint64_t>(gen()) >> 11) + 1) * 0x1.0p-53;
}

// Dirichlet(1, ..., 1) by normalised exponential spacings. Consumes exactly
// out.size() generator outputs.
template <std::uniform_random_bit_generator G>
void sample_uniform_simplex(G& gen, std::span<double> out) {
  if (out.empty()) throw DomainError("simplex dimension must be >= 1");
  double sum = 0.0;
  for (double& e : out) {
    e = -std::log(uniform_open_closed(gen));
    sum += e;
  }
  if (sum == 0.0) {
    // every draw was u == 1 (probability 2^(-53n))
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return;
  }
  for (double& e : out) e /= sum;
}

template <std::uniform_random_bit_generator G>
std::vector<double> sample_uniform_simplex(G& gen, int n) {
  if (n < 1) throw DomainError("simplex dimension must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(n));
  sample_uniform_simplex(gen, std::span<double>(w));
  return w;
}

// P{X <= c} for X ~ Beta(1, n-1): 1 - (1-c)^(n-1).
inline double beta_cdf(double c, int n) {
  if (!(c >= 0.0 && c <= 1.0)) throw DomainError("beta_cdf: c must lie in [0, 1]");
  if (n < 2) throw DomainError("beta_cdf: n must be >= 2");
  if (c == 1.0) return 1.0;
  return -std::expm1(static_cast<double>(n - 1) * std::log1p(-c));
}

// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of sorted
// samples and `cdf`.
template <typename Cdf>
double ks_distance(std::span<const double> sorted, Cdf&& cdf) {
  if (sorted.empty()) throw DomainError("ks_distance: empty sample");
  const double n = static_cast<double>(sorted.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    dist = std::max({dist, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return dist;
}

// Kolmogorov critical value at alpha ~ 0.01.
inline double ks_critical_001(std::size_t n) { return 1.63 / std::sqrt(static_cast<double>(n)); }

}  // namespace qadim
