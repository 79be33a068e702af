#pragma once

// Closed-form predictions and finite-m tail bounds for the random measure.
// All powers with exponents like 2^(dL) are evaluated as exp(count * log1p(-q)).

#include <cmath>
#include <cstdint>

#include "qadim/dimension.hpp"
#include "qadim/errors.hpp"
#include "qadim/randomness.hpp"
#include "qadim/tree_core.hpp"

namespace qadim {

struct BoundInput {
  int d = 1;
  int N = 1;  // threshold: exponent <= N (upper) or >= 1/N (lower)
  int m = 2;
  std::size_t level = 1;
};

// Expected mass of the path's cube: its Lebesgue measure 2^(-kd).
inline LogMass predicted_cube_mass(const NodePath& path) {
  return LogMass(-static_cast<double>(path.level()) * path.dim());
}

namespace detail {

inline void check_bound_input(const BoundInput& in, int min_m) {
  check_dim(in.d);
  if (in.N < 1) throw DomainError("N must be >= 1");
  if (in.m < min_m) throw DomainError("m must be >= " + std::to_string(min_m));
  if (in.level > 1000) throw DomainError("level too large for a bound evaluation");
}

// (1 - q)^(2^(d*level)).
inline double pow_complement(double q, int d, std::size_t level) {
  const double count = std::ldexp(1.0, d * static_cast<int>(level));
  if (q >= 1.0) return 0.0;
  return std::exp(count * std::log1p(-q));
}

}  // namespace detail

// Upper bound on P{log2 H_{m,.}/m <= N} for the fixed-level statistic at
// level L: (1 - F(2^-Nm)^(2^d))^(2^(dL)), F the exact Beta(1, 2^d - 1) CDF.
inline double upper_tail_bound(const BoundInput& in) {
  detail::check_bound_input(in, 2);
  const double c = std::ldexp(1.0, -in.N * in.m);
  const double cdf = beta_cdf(c, static_cast<int>(branching(in.d)));
  const double q = cdf == 0.0 ? 0.0 : std::exp(static_cast<double>(branching(in.d)) * std::log(cdf));
  return detail::pow_complement(q, in.d, in.level);
}

// Same event with the cruder per-node probability 2^(-Nm(2^d-1)2^d) and node
// count 2^L; coincides with upper_tail_bound when d = 1.
inline double upper_tail_bound_coarse(const BoundInput& in) {
  detail::check_bound_input(in, 2);
  const double n = branching(in.d);
  const double q = std::exp2(-static_cast<double>(in.N) * in.m * (n - 1) * n);
  if (q >= 1.0) return 0.0;
  return std::exp(std::ldexp(1.0, static_cast<int>(in.level)) * std::log1p(-q));
}

// Upper bound on P{log2 h_{m,.}/m >= 1/N}:
// (1 - (1 - 2^(-1/N))^((2^d - 1) m))^(2^(dL)).
inline double lower_tail_bound(const BoundInput& in) {
  detail::check_bound_input(in, 1);
  const double n = branching(in.d);
  const double log_p = (n - 1) * in.m * std::log1p(-std::exp2(-1.0 / in.N));
  return detail::pow_complement(std::exp(log_p), in.d, in.level);
}

// delta < 1 / (N 2^d (2^d - 1)), in exact integer arithmetic.
inline bool upper_bound_admissible(int d, int N, DeltaParam delta) {
  const unsigned __int128 n = branching(d);
  return static_cast<unsigned __int128>(delta.num) * static_cast<unsigned>(N) * n * (n - 1) <
         delta.den;
}

// (1 - 2^(-1/N))^(2^d - 1) > 2^(-1/delta).
inline bool lower_bound_admissible(int d, int N, DeltaParam delta) {
  const double n = branching(d);
  return (n - 1) * std::log2(1.0 - std::exp2(-1.0 / N)) >
         -static_cast<double>(delta.den) / static_cast<double>(delta.num);
}

// P{U_1 ... U_m >= t} for i.i.d. uniforms. With x = ln(1/t) this is
// P{Gamma(m, 1) <= x} = 1 - e^-x sum_{k<m} x^k / k!; for x < m the upper
// series e^-x sum_{k>=m} x^k / k! avoids the cancellation.
inline double product_uniform_tail(int m, double t) {
  if (m < 1) throw DomainError("product_uniform_tail: m must be >= 1");
  if (!(t > 0.0 && t <= 1.0)) throw DomainError("product_uniform_tail: t must lie in (0, 1]");
  const double x = -std::log(t);
  if (x == 0.0) return 1.0;
  if (x < m) {
    double term = std::exp(-x + m * std::log(x) - std::lgamma(m + 1.0));
    double sum = 0.0;
    for (int k = m; term > sum * 1e-18; ++k) {
      sum += term;
      term *= x / (k + 1);
    }
    return std::min(1.0, sum);
  }
  double term = t;  // e^-x
  double lower = term;
  for (int k = 1; k < m; ++k) {
    term *= x / k;
    lower += term;
  }
  return std::max(0.0, 1.0 - lower);
}

}  // namespace qadim
