#pragma once

// Dyadic ratio statistics H_{m,delta} / h_{m,delta}: for every node omega at
// a given level, the smallest parent-to-central-child mass ratio
// m(omega) / m(omega'), then the max (upper) or min (lower) over omega.
// Scale levels come from an exact rational delta or from a phi function via
// its quasi-inverse.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "qadim/errors.hpp"
#include "qadim/measures.hpp"
#include "qadim/tree_core.hpp"

namespace qadim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// delta = num / den, kept exact so that floor(m / delta) never mis-levels.
struct DeltaParam {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  DeltaParam() = default;
  DeltaParam(std::uint64_t p, std::uint64_t q) : num(p), den(q) {
    if (p == 0 || q == 0) throw DomainError("delta needs positive numerator and denominator");
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  // Accepts "P/Q" or "P". Decimals are rejected: floor(m / delta) must be exact.
  static DeltaParam parse(std::string_view text) {
    auto parse_uint = [&](std::string_view s) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        if (s.find('.') != std::string_view::npos || text.find('.') != std::string_view::npos) {
          throw DomainError("delta must be an exact rational P/Q or an integer, got \"" +
                            std::string(text) +
                            "\"; decimals are rejected because floor(m/delta) is evaluated in "
                            "exact integer arithmetic");
        }
        throw DomainError("malformed delta \"" + std::string(text) + "\" (expected P/Q)");
      }
      return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) return DeltaParam(parse_uint(text), 1);
    return DeltaParam(parse_uint(text.substr(0, slash)), parse_uint(text.substr(slash + 1)));
  }

  friend bool operator==(const DeltaParam&, const DeltaParam&) = default;
};

// floor(m / delta) = floor(m * den / num).
inline std::size_t level_from_delta(int m, DeltaParam delta) {
  if (m < 1) throw DomainError("m must be >= 1");
  const unsigned __int128 prod = static_cast<unsigned __int128>(m) * delta.den;
  const unsigned __int128 level = prod / delta.num;
  if (level > std::numeric_limits<std::uint32_t>::max()) throw DomainError("level overflow");
  return static_cast<std::size_t>(level);
}

// phi(R) = R^(-delta).
struct PowerPhi {
  DeltaParam delta;
};

// phi identically `value`.
struct ConstantPhi {
  double value = 1.0;
};

// Sampled phi: strictly increasing x in (0, 1], nonincreasing positive phi.
// Interpolation is linear in (log x, log phi), so power laws are reproduced
// exactly; phi is held constant outside the sampled range.
struct TabulatedPhi {
  std::vector<double> x;
  std::vector<double> phi;
};

class PhiSpec {
 public:
  using Variant = std::variant<PowerPhi, ConstantPhi, TabulatedPhi>;

  static PhiSpec power(DeltaParam delta) { return PhiSpec(PowerPhi{delta}); }

  static PhiSpec constant(double value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw DomainError("constant phi must be > 0");
    return PhiSpec(ConstantPhi{value});
  }

  static PhiSpec tabulated(std::vector<double> x, std::vector<double> phi) {
    if (x.empty() || x.size() != phi.size()) throw DomainError("phi table: empty or ragged");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] > 0.0 && x[i] <= 1.0)) throw DomainError("phi table: x must lie in (0, 1]");
      if (!(phi[i] > 0.0) || !std::isfinite(phi[i])) throw DomainError("phi table: phi must be > 0");
      if (i > 0 && !(x[i] > x[i - 1])) throw DomainError("phi table: x must be strictly increasing");
      if (i > 0 && phi[i] > phi[i - 1]) throw DomainError("phi table: phi must be nonincreasing");
    }
    return PhiSpec(TabulatedPhi{std::move(x), std::move(phi)});
  }

  // Two whitespace-separated columns "x phi" per line; '#' starts a comment.
  static PhiSpec load_table(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open phi table " + file);
    std::vector<double> xs, ps;
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream row(line);
      double x = 0, p = 0;
      if (!(row >> x)) continue;
      if (!(row >> p)) throw DomainError("phi table: missing phi column in " + file);
      xs.push_back(x);
      ps.push_back(p);
    }
    return tabulated(std::move(xs), std::move(ps));
  }

  // "const:V", "power:P/Q" or "table:FILE".
  static PhiSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw DomainError("phi must be const:V, power:P/Q or table:FILE");
    const std::string head = text.substr(0, colon), tail = text.substr(colon + 1);
    if (head == "power") return power(DeltaParam::parse(tail));
    if (head == "table") return load_table(tail);
    if (head == "const") {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(tail, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tail.size() || tail.empty()) throw DomainError("malformed constant phi: " + tail);
      return constant(v);
    }
    throw DomainError("unknown phi variant \"" + head + "\"");
  }

  const Variant& variant() const noexcept { return v_; }
  bool is_power() const noexcept { return std::holds_alternative<PowerPhi>(v_); }
  bool is_constant() const noexcept { return std::holds_alternative<ConstantPhi>(v_); }

  std::string tag() const {
    if (const auto* p = std::get_if<PowerPhi>(&v_)) return "power:" + p->delta.str();
    if (const auto* c = std::get_if<ConstantPhi>(&v_)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "const:%.17g", c->value);
      return buf;
    }
    return "table:" + std::to_string(std::get<TabulatedPhi>(v_).x.size());
  }

  double operator()(double x) const {
    if (const auto* p = std::get_if<PowerPhi>(&v_)) return std::pow(x, -p->delta.value());
    if (const auto* c = std::get_if<ConstantPhi>(&v_)) return c->value;
    const auto& t = std::get<TabulatedPhi>(v_);
    if (x <= t.x.front()) return t.phi.front();
    if (x >= t.x.back()) return t.phi.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(t.x.begin(), t.x.end(), x) - t.x.begin());
    const std::size_t lo = hi - 1;
    const double s = (std::log(x) - std::log(t.x[lo])) / (std::log(t.x[hi]) - std::log(t.x[lo]));
    return std::exp(std::log(t.phi[lo]) + s * (std::log(t.phi[hi]) - std::log(t.phi[lo])));
  }

 private:
  explicit PhiSpec(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

// sup{x in (0,1) : phi(x) >= y}; nullopt when the set is empty (no scale
// constraint at all).
inline std::optional<double> quasi_inverse(const PhiSpec& phi, double y) {
  if (!(y > 0.0)) throw DomainError("quasi_inverse needs y > 0");
  if (const auto* p = std::get_if<PowerPhi>(&phi.variant())) {
    // x^(-P/Q) >= y  <=>  x <= y^(-Q/P)
    const double x = std::pow(y, -static_cast<double>(p->delta.den) / static_cast<double>(p->delta.num));
    return std::min(1.0, x);
  }
  if (const auto* c = std::get_if<ConstantPhi>(&phi.variant())) {
    if (c->value >= y) return 1.0;
    return std::nullopt;
  }
  const auto& t = std::get<TabulatedPhi>(phi.variant());
  if (t.phi.front() < y) return std::nullopt;
  if (t.phi.back() >= y) return 1.0;
  double lo = t.x.front(), hi = t.x.back();  // phi(lo) >= y > phi(hi)
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (phi(mid) >= y ? lo : hi) = mid;
  }
  return lo;
}

struct LevelChoice {
  std::size_t level = 0;
  bool capped = false;  // phi imposed no scale bound; level_cap was used

  friend bool operator==(const LevelChoice&, const LevelChoice&) = default;
};

// floor(-log2 phi^{-1}(2^m)). Power phi goes through exact integer
// arithmetic; a bisected value within 1e-9 of an integer snaps to it.
inline LevelChoice level_from_phi(const PhiSpec& phi, int m, std::size_t level_cap) {
  if (m < 1) throw DomainError("m must be >= 1");
  if (level_cap < 1) throw DomainError("level cap must be >= 1");
  if (const auto* p = std::get_if<PowerPhi>(&phi.variant())) return {level_from_delta(m, p->delta), false};
  const auto inv = quasi_inverse(phi, std::ldexp(1.0, m));
  if (!inv) return {level_cap, true};
  double n = -std::log2(*inv);
  if (std::abs(n - std::round(n)) < 1e-9) n = std::round(n);
  const auto level = static_cast<std::size_t>(std::max(0.0, std::floor(n)));
  return {std::min(level, level_cap), level > level_cap};
}

struct StatOptions {
  std::size_t depth_budget = 32;
  // Extremise over every level 1..L instead of level L only.
  bool multi_level = false;
  unsigned threads = 1;
};

struct RatioStatistic {
  int m = 0;
  std::size_t level = 0;
  double log2_value = 0.0;  // +inf when a positive node only has zero-mass central children
  NodePath witness{1};
  bool multi_level = false;

  double exponent() const { return log2_value / m; }
};

struct RatioPair {
  RatioStatistic upper;
  RatioStatistic lower;
};

namespace detail {

struct Candidate {
  double value = 0.0;
  std::vector<Digit> witness;
  bool valid = false;
};

// Better value wins; equal values go to the lexicographically (DFS) least path.
inline void absorb(Candidate& best, const Candidate& c, bool maximise) {
  if (!c.valid) return;
  if (!best.valid) {
    best = c;
    return;
  }
  const bool better = maximise ? c.value > best.value : c.value < best.value;
  if (better || (c.value == best.value && c.witness < best.witness)) best = c;
}

struct Extremes {
  Candidate upper, lower;

  void offer(double value, const std::vector<Digit>& path) {
    // DFS visits in lexicographic order, so strict improvement keeps the first witness.
    if (!upper.valid || value > upper.value) upper = {value, path, true};
    if (!lower.valid || value < lower.value) lower = {value, path, true};
  }

  void merge(const Extremes& o) {
    absorb(upper, o.upper, true);
    absorb(lower, o.lower, false);
  }
};

class Walker {
 public:
  Walker(const MeasureTree& mu, int m, std::size_t first_level, std::size_t last_level)
      : mu_(mu), n_(branching(mu.dim())), m_(m), first_(first_level), last_(last_level),
        scratch_(n_) {}

  // DFS below `prefix` (whose log mass is `log_mass`), evaluating every node
  // whose level is in [first, last], the prefix included.
  void run(std::vector<Digit> prefix, double log_mass, Extremes& out) {
    path_ = std::move(prefix);
    root_level_ = path_.size();
    stack_.assign((last_ >= root_level_ ? last_ - root_level_ + 1 : 1) * n_, 0.0);
    visit(log_mass, out);
  }

  // Value of a single node (no descent below it).
  double evaluate(std::vector<Digit> node) {
    path_ = std::move(node);
    std::vector<double> w(n_);
    mu_.edge_weights(path_, w);
    return central_min(w);
  }

  // min over central children of -log2(child/parent), given the node's own weights.
  double central_min(std::span<const double> node_weights) {
    double best = kInf;
    const std::size_t base = path_.size();
    for (unsigned c = 0; c < n_; ++c) {
      const unsigned comp = n_ - 1 - c;
      double ratio = -std::log2(node_weights[c]);
      path_.push_back(static_cast<Digit>(c));
      for (int k = 1; k < m_; ++k) {
        mu_.edge_weights(path_, scratch_);
        ratio += -std::log2(scratch_[comp]);
        path_.push_back(static_cast<Digit>(comp));
      }
      path_.resize(base);
      best = std::min(best, ratio);
    }
    return best;
  }

 private:
  void visit(double log_mass, Extremes& out) {
    if (log_mass == -kInf) return;  // outside the support: never constrains
    const std::size_t level = path_.size();
    const std::span<double> w = std::span<double>(stack_).subspan((level - root_level_) * n_, n_);
    mu_.edge_weights(path_, w);
    if (level >= first_) out.offer(central_min(w), path_);
    if (level >= last_) return;
    for (unsigned c = 0; c < n_; ++c) {
      path_.push_back(static_cast<Digit>(c));
      visit(log_mass + std::log2(w[c]), out);
      path_.pop_back();
    }
  }

  const MeasureTree& mu_;
  unsigned n_;
  int m_;
  std::size_t first_, last_;
  std::size_t root_level_ = 0;
  std::vector<Digit> path_;
  std::vector<double> stack_, scratch_;
};

inline RatioStatistic finish(const Candidate& c, int d, int m, std::size_t level, bool multi) {
  RatioStatistic s;
  s.m = m;
  s.level = level;
  s.multi_level = multi;
  s.log2_value = c.valid ? c.value : kInf;
  s.witness = NodePath(d, c.witness);
  return s;
}

}  // namespace detail

inline void check_depth_budget(int m, std::size_t level, std::size_t budget) {
  if (m < 1) throw DomainError("m must be >= 1");
  if (level + static_cast<std::size_t>(m) > budget) {
    throw DomainError("depth budget exceeded: level " + std::to_string(level) + " + m " +
                      std::to_string(m) + " > " + std::to_string(budget));
  }
}

// Streams over the level-L nodes (levels 1..L with multi_level) and returns
// both the max-min (upper) and min-min (lower) statistics. Work is split over
// subtrees; the result is independent of the thread count.
inline RatioPair ratio_stats(const MeasureTree& mu, int m, std::size_t level,
                             const StatOptions& opts = {}) {
  check_depth_budget(m, level, opts.depth_budget);
  const int d = mu.dim();
  const unsigned n = branching(d);
  const std::size_t first = opts.multi_level ? std::min<std::size_t>(1, level) : level;
  const unsigned threads = std::max(1u, opts.threads);

  if (mu.homogeneous()) {
    // Every positive-mass node has the same subtree, hence the same value;
    // the DFS-least one sits at level `first` on the first positive digit.
    std::vector<double> w(n);
    mu.edge_weights(std::span<const Digit>{}, w);
    const auto lead = static_cast<Digit>(std::find_if(w.begin(), w.end(), [](double x) { return x > 0; }) - w.begin());
    detail::Walker walker(mu, m, first, level);
    std::vector<Digit> node(first, lead);
    const detail::Candidate c{walker.evaluate(node), node, true};
    return {detail::finish(c, d, m, level, opts.multi_level), detail::finish(c, d, m, level, opts.multi_level)};
  }

  // Subtree roots at `split`; shallower evaluated nodes are handled up front.
  std::size_t split = 0;
  if (threads > 1) {
    std::uint64_t tasks = 1;
    while (split < level && tasks < 8ull * threads) {
      tasks *= n;
      ++split;
    }
  }

  detail::Extremes total;
  if (split > 0 && first < split) {
    detail::Walker shallow(mu, m, first, split - 1);
    shallow.run({}, 0.0, total);
  }

  std::uint64_t task_count = 1;
  for (std::size_t i = 0; i < split; ++i) task_count *= n;
  std::vector<detail::Extremes> results(task_count);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    detail::Walker walker(mu, m, first, level);
    std::vector<double> w(n);
    for (std::uint64_t t = next++; t < task_count; t = next++) {
      try {
        std::vector<Digit> prefix(split);
        std::uint64_t rem = t;
        for (std::size_t k = split; k-- > 0;) {
          prefix[k] = static_cast<Digit>(rem % n);
          rem /= n;
        }
        double log_mass = 0.0;
        for (std::size_t k = 0; k < split; ++k) {
          mu.edge_weights(std::span<const Digit>(prefix).first(k), w);
          log_mass += std::log2(w[prefix[k]]);
        }
        walker.run(std::move(prefix), log_mass, results[t]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  if (threads == 1 || task_count == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    const auto count = static_cast<unsigned>(std::min<std::uint64_t>(threads, task_count));
    for (unsigned i = 0; i < count; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& r : results) total.merge(r);

  return {detail::finish(total.upper, d, m, level, opts.multi_level),
          detail::finish(total.lower, d, m, level, opts.multi_level)};
}

inline RatioStatistic upper_ratio_stat(const MeasureTree& mu, int m, std::size_t level,
                                       const StatOptions& opts = {}) {
  return ratio_stats(mu, m, level, opts).upper;
}

inline RatioStatistic lower_ratio_stat(const MeasureTree& mu, int m, std::size_t level,
                                       const StatOptions& opts = {}) {
  return ratio_stats(mu, m, level, opts).lower;
}

enum class Side { upper, lower };

inline constexpr std::size_t kOracleMaxLog2Nodes = 22;

// Literal evaluation of the definition: materialises every node mass down to
// level L+m as a long double product, locates central children geometrically
// (cube centre coordinates) and takes the ratios in the linear domain.
inline RatioStatistic brute_force_oracle(const MeasureTree& mu, int m, std::size_t level, Side side,
                                         bool multi_level = false) {
  if (m < 1) throw DomainError("m must be >= 1");
  const int d = mu.dim();
  const unsigned n = branching(d);
  const std::size_t depth = level + static_cast<std::size_t>(m);
  if (static_cast<std::size_t>(d) * depth > kOracleMaxLog2Nodes) {
    throw DomainError("oracle size bound exceeded: 2^(d(L+m)) > 2^22");
  }
  const std::size_t first = multi_level ? std::min<std::size_t>(1, level) : level;

  auto digits_of = [&](std::uint64_t index, std::size_t lvl) {
    std::vector<Digit> digits(lvl);
    for (std::size_t k = lvl; k-- > 0;) {
      digits[k] = static_cast<Digit>(index % n);
      index /= n;
    }
    return digits;
  };

  std::vector<std::vector<long double>> masses(depth + 1);
  masses[0] = {1.0L};
  std::vector<double> w(n);
  for (std::size_t k = 0; k < depth; ++k) {
    masses[k + 1].assign(masses[k].size() * n, 0.0L);
    for (std::uint64_t i = 0; i < masses[k].size(); ++i) {
      const auto digits = digits_of(i, k);
      mu.edge_weights(digits, w);
      for (unsigned c = 0; c < n; ++c) masses[k + 1][i * n + c] = masses[k][i] * static_cast<long double>(w[c]);
    }
    // keep only evaluated levels and the levels holding their central children
    const bool evaluated = k >= first && k <= level;
    const bool holds_children = k >= first + static_cast<std::size_t>(m);
    if (!evaluated && !holds_children) std::vector<long double>().swap(masses[k]);
  }

  detail::Candidate best;
  const bool maximise = side == Side::upper;
  for (std::size_t lvl = first; lvl <= level; ++lvl) {
    const std::size_t deep = lvl + static_cast<std::size_t>(m);
    for (std::uint64_t i = 0; i < masses[lvl].size(); ++i) {
      const long double parent = masses[lvl][i];
      if (parent == 0.0L) continue;
      // cube coordinates of node i
      std::vector<std::uint64_t> x(static_cast<std::size_t>(d), 0);
      const auto digits = digits_of(i, lvl);
      for (Digit g : digits) {
        for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] = (x[static_cast<std::size_t>(j)] << 1) | ((g >> j) & 1u);
      }
      double node_min = kInf;
      for (unsigned corner = 0; corner < n; ++corner) {
        // the 2^d level-deep cubes sharing the centre of cube x
        std::vector<std::uint64_t> y(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
          y[static_cast<std::size_t>(j)] = (x[static_cast<std::size_t>(j)] << m) +
                                           (std::uint64_t{1} << (m - 1)) - 1 + ((corner >> j) & 1u);
        }
        std::uint64_t idx = 0;
        for (std::size_t t = 0; t < deep; ++t) {
          unsigned g = 0;
          for (int j = 0; j < d; ++j) g |= static_cast<unsigned>((y[static_cast<std::size_t>(j)] >> (deep - 1 - t)) & 1u) << j;
          idx = idx * n + g;
        }
        const long double child = masses[deep][idx];
        const double ratio = child == 0.0L ? kInf : static_cast<double>(std::log2(parent / child));
        node_min = std::min(node_min, ratio);
      }
      detail::absorb(best, {node_min, digits, true}, maximise);
    }
  }
  return detail::finish(best, d, m, level, multi_level);
}

struct ScheduleEntry {
  int m = 1;
  std::variant<DeltaParam, PhiSpec> scale;
};

struct ProfileRow {
  int m = 0;
  std::string scale_tag;
  std::size_t level = 0;
  bool capped = false;
  double upper_exponent = 0.0;
  double lower_exponent = 0.0;
};

struct DimensionProfile {
  std::vector<ProfileRow> rows;
};

inline LevelChoice resolve_level(int m, const std::variant<DeltaParam, PhiSpec>& scale,
                                 std::size_t level_cap) {
  if (const auto* delta = std::get_if<DeltaParam>(&scale)) return {level_from_delta(m, *delta), false};
  return level_from_phi(std::get<PhiSpec>(scale), m, level_cap);
}

inline std::string scale_tag(const std::variant<DeltaParam, PhiSpec>& scale) {
  if (const auto* delta = std::get_if<DeltaParam>(&scale)) return "delta=" + delta->str();
  return "phi=" + std::get<PhiSpec>(scale).tag();
}

inline DimensionProfile estimate_profile(const MeasureTree& mu, const std::vector<ScheduleEntry>& schedule,
                                         std::size_t level_cap, const StatOptions& opts = {}) {
  DimensionProfile profile;
  for (const auto& entry : schedule) {
    const LevelChoice lc = resolve_level(entry.m, entry.scale, level_cap);
    const RatioPair stats = ratio_stats(mu, entry.m, lc.level, opts);
    profile.rows.push_back({entry.m, scale_tag(entry.scale), lc.level, lc.capped,
                            stats.upper.exponent(), stats.lower.exponent()});
  }
  return profile;
}

}  // namespace qadim
