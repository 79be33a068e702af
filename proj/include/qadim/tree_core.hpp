#pragma once

// Node addressing for 2^d-ary trees, the dyadic cube each node stands for,
// central children, and base-2 log-domain masses.
//
// Digit/axis convention: bit j of a digit selects the upper half along
// axis j, with axis 0 the least significant bit. The first digit of a path
// is the coarsest subdivision.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qadim/errors.hpp"

namespace qadim {

inline constexpr int kMaxDim = 8;

inline void check_dim(int d) {
  if (d < 1 || d > kMaxDim) {
    throw DomainError("ambient dimension must be in [1, 8], got " + std::to_string(d));
  }
}

// Number of children of every node, 2^d.
inline constexpr unsigned branching(int d) noexcept { return 1u << d; }

using Digit = std::uint8_t;

class NodePath {
 public:
  explicit NodePath(int d) : dim_(d) { check_dim(d); }

  NodePath(int d, std::vector<Digit> digits) : dim_(d), digits_(std::move(digits)) {
    check_dim(d);
    for (Digit g : digits_) check_digit(g);
  }

  NodePath(int d, std::initializer_list<unsigned> digits) : dim_(d) {
    check_dim(d);
    digits_.reserve(digits.size());
    for (unsigned g : digits) {
      if (g >= branching(d)) throw DomainError("digit " + std::to_string(g) + " out of range");
      digits_.push_back(static_cast<Digit>(g));
    }
  }

  // Parses a dot-free string of base-(2^d) characters 0-9a-z ("" is the root).
  static NodePath parse(int d, std::string_view text) {
    NodePath p(d);
    for (char ch : text) {
      int v = -1;
      if (ch >= '0' && ch <= '9') v = ch - '0';
      else if (ch >= 'a' && ch <= 'z') v = ch - 'a' + 10;
      if (v < 0 || static_cast<unsigned>(v) >= branching(d)) {
        throw DomainError(std::string("invalid digit character '") + ch + "' for d=" +
                          std::to_string(d));
      }
      p.digits_.push_back(static_cast<Digit>(v));
    }
    return p;
  }

  // Inverse of parse(); only defined while 2^d <= 36.
  std::string str() const {
    if (branching(dim_) > 36) throw DomainError("digit strings need 2^d <= 36");
    std::string s;
    s.reserve(digits_.size());
    for (Digit g : digits_) s.push_back(static_cast<char>(g < 10 ? '0' + g : 'a' + g - 10));
    return s;
  }

  int dim() const noexcept { return dim_; }
  std::size_t level() const noexcept { return digits_.size(); }
  bool is_root() const noexcept { return digits_.empty(); }
  std::span<const Digit> digits() const noexcept { return digits_; }
  Digit operator[](std::size_t i) const { return digits_[i]; }

  NodePath child(unsigned digit) const {
    NodePath c = *this;
    c.push(digit);
    return c;
  }

  void push(unsigned digit) {
    check_digit(digit);
    digits_.push_back(static_cast<Digit>(digit));
  }

  void pop() { digits_.pop_back(); }

  NodePath prefix(std::size_t len) const {
    return NodePath(dim_, std::vector<Digit>(digits_.begin(),
                                             digits_.begin() + static_cast<std::ptrdiff_t>(len)));
  }

  friend bool operator==(const NodePath&, const NodePath&) = default;

  // Lexicographic digit order; a prefix sorts before its extensions (DFS pre-order).
  friend bool operator<(const NodePath& a, const NodePath& b) {
    return a.digits_ < b.digits_;
  }

 private:
  void check_digit(unsigned g) const {
    if (g >= branching(dim_)) {
      throw DomainError("digit " + std::to_string(g) + " out of range for d=" +
                        std::to_string(dim_));
    }
  }

  int dim_;
  std::vector<Digit> digits_;
};

// Half-open cube prod_j [coords_j 2^-level, (coords_j + 1) 2^-level).
struct DyadicCube {
  std::size_t level = 0;
  std::vector<std::uint64_t> coords;

  friend bool operator==(const DyadicCube&, const DyadicCube&) = default;

  double lower(std::size_t axis) const { return std::ldexp(double(coords[axis]), -int(level)); }
  double upper(std::size_t axis) const {
    return std::ldexp(double(coords[axis] + 1), -int(level));
  }

  bool contains(std::span<const double> point) const {
    for (std::size_t j = 0; j < coords.size(); ++j) {
      if (point[j] < lower(j) || point[j] >= upper(j)) return false;
    }
    return true;
  }
};

inline DyadicCube path_to_cube(const NodePath& path) {
  if (path.level() > 63) throw DomainError("cube level above 63 is not representable");
  const auto d = static_cast<std::size_t>(path.dim());
  DyadicCube cube{path.level(), std::vector<std::uint64_t>(d, 0)};
  for (Digit g : path.digits()) {
    for (std::size_t j = 0; j < d; ++j) cube.coords[j] = (cube.coords[j] << 1) | ((g >> j) & 1u);
  }
  return cube;
}

inline NodePath cube_to_path(const DyadicCube& cube) {
  const int d = static_cast<int>(cube.coords.size());
  check_dim(d);
  if (cube.level > 63) throw DomainError("cube level above 63 is not representable");
  std::vector<Digit> digits(cube.level, 0);
  for (std::size_t j = 0; j < cube.coords.size(); ++j) {
    if (cube.level < 64 && (cube.coords[j] >> cube.level) != 0) {
      throw DomainError("cube coordinate out of range for its level");
    }
    for (std::size_t t = 0; t < cube.level; ++t) {
      const auto bit = (cube.coords[j] >> (cube.level - 1 - t)) & 1u;
      digits[t] = static_cast<Digit>(digits[t] | (bit << j));
    }
  }
  return NodePath(d, std::move(digits));
}

// Digit sequence (relative to the parent) of central child number `first`:
// `first` followed by m-1 copies of its bitwise complement.
inline void central_suffix(int d, unsigned first, int m, std::span<Digit> out) {
  const unsigned complement = branching(d) - 1 - first;
  out[0] = static_cast<Digit>(first);
  for (int k = 1; k < m; ++k) out[static_cast<std::size_t>(k)] = static_cast<Digit>(complement);
}

// The 2^d depth-m descendants of omega whose cubes touch the centre of omega's cube.
inline std::vector<NodePath> central_children(const NodePath& omega, int m) {
  if (m < 1) throw DomainError("central children need m >= 1");
  const int d = omega.dim();
  std::vector<NodePath> out;
  out.reserve(branching(d));
  std::vector<Digit> suffix(static_cast<std::size_t>(m));
  for (unsigned c = 0; c < branching(d); ++c) {
    central_suffix(d, c, m, suffix);
    NodePath p = omega;
    for (Digit g : suffix) p.push(g);
    out.push_back(std::move(p));
  }
  return out;
}

// Nonnegative real stored as its base-2 logarithm; -inf is exactly zero.
class LogMass {
 public:
  constexpr LogMass() = default;
  constexpr explicit LogMass(double log2_value) : log2_(log2_value) {}

  static constexpr LogMass one() { return LogMass(0.0); }
  static constexpr LogMass zero() { return LogMass(-std::numeric_limits<double>::infinity()); }
  static LogMass from_linear(double x) {
    if (x < 0 || std::isnan(x)) throw DomainError("mass must be nonnegative");
    return LogMass(std::log2(x));
  }

  constexpr double log2_value() const noexcept { return log2_; }
  double linear() const { return std::exp2(log2_); }
  bool is_zero() const noexcept { return log2_ == -std::numeric_limits<double>::infinity(); }

  friend LogMass operator*(LogMass a, LogMass b) {
    if (a.is_zero() || b.is_zero()) return zero();
    return LogMass(a.log2_ + b.log2_);
  }

  // Zero numerator gives zero; positive over zero gives +inf.
  friend LogMass operator/(LogMass a, LogMass b) {
    if (a.is_zero()) return zero();
    if (b.is_zero()) return LogMass(std::numeric_limits<double>::infinity());
    return LogMass(a.log2_ - b.log2_);
  }

  friend bool operator==(LogMass, LogMass) = default;
  friend auto operator<=>(LogMass a, LogMass b) { return a.log2_ <=> b.log2_; }

 private:
  double log2_ = 0.0;
};

}  // namespace qadim
