#pragma once

// Probability measures on [0,1]^d represented as 2^d-ary trees whose edges
// carry the child/parent mass ratios. Three families: seeded random
// (uniform-simplex weights at every node), product (the same weights at every
// node) and explicit (a finite table loaded from JSON).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "qadim/errors.hpp"
#include "qadim/randomness.hpp"
#include "qadim/tree_core.hpp"

namespace qadim {

enum class MeasureKind { random, product, explicit_table };

inline const char* to_string(MeasureKind k) {
  switch (k) {
    case MeasureKind::random: return "random";
    case MeasureKind::product: return "product";
    case MeasureKind::explicit_table: return "explicit";
  }
  return "?";
}

class MeasureTree {
 public:
  virtual ~MeasureTree() = default;

  virtual int dim() const noexcept = 0;
  virtual MeasureKind kind() const noexcept = 0;

  // Writes the 2^d edge weights leaving `node` into `out` (size 2^d).
  virtual void edge_weights(std::span<const Digit> node, std::span<double> out) const = 0;

  // True when every node carries the same weights (the product family).
  virtual bool homogeneous() const noexcept { return false; }

  std::vector<double> edge_weights(const NodePath& node) const {
    check_path(node);
    std::vector<double> w(branching(dim()));
    edge_weights(node.digits(), w);
    return w;
  }

  // Mass of the node's cube, accumulated as a left-to-right sum of log2 edge
  // weights starting from 0.0 (the streaming statistics use the same order).
  LogMass mass(const NodePath& path) const {
    check_path(path);
    std::vector<double> w(branching(dim()));
    const auto digits = path.digits();
    double acc = 0.0;
    for (std::size_t k = 0; k < digits.size(); ++k) {
      edge_weights(digits.first(k), w);
      acc += std::log2(w[digits[k]]);
    }
    return LogMass(acc);
  }

 protected:
  void check_path(const NodePath& path) const {
    if (path.dim() != dim()) {
      throw DomainError("path dimension " + std::to_string(path.dim()) +
                        " does not match measure dimension " + std::to_string(dim()));
    }
  }
};

inline LogMass mass(const MeasureTree& measure, const NodePath& path) { return measure.mass(path); }

class RandomMeasure final : public MeasureTree {
 public:
  RandomMeasure(int d, std::uint64_t seed) : d_(d), seed_(seed) { check_dim(d); }

  int dim() const noexcept override { return d_; }
  MeasureKind kind() const noexcept override { return MeasureKind::random; }
  std::uint64_t seed() const noexcept { return seed_; }

  void edge_weights(std::span<const Digit> node, std::span<double> out) const override {
    NodeGenerator gen = derive_generator(seed_, node);
    sample_uniform_simplex(gen, out);
  }
  using MeasureTree::edge_weights;

 private:
  int d_;
  std::uint64_t seed_;
};

inline RandomMeasure make_random_measure(int d, std::uint64_t seed) { return RandomMeasure(d, seed); }

namespace detail {

inline void check_simplex(std::span<const double> w, double tol, const std::string& where) {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError(where + ": weight outside [0, 1]");
    sum += x;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw DomainError(where + ": weights sum to " + std::to_string(sum) + ", not 1");
  }
}

}  // namespace detail

struct ProductMeasureSpec {
  int d = 1;
  std::vector<double> weights;

  static ProductMeasureSpec lebesgue(int d) {
    check_dim(d);
    return {d, std::vector<double>(branching(d), std::ldexp(1.0, -d))};
  }
  static ProductMeasureSpec bernoulli(double p) { return {1, {p, 1.0 - p}}; }
};

class ProductMeasure final : public MeasureTree {
 public:
  explicit ProductMeasure(ProductMeasureSpec spec) : spec_(std::move(spec)) {
    check_dim(spec_.d);
    if (spec_.weights.size() != branching(spec_.d)) {
      throw DomainError("product measure needs exactly 2^d weights");
    }
    detail::check_simplex(spec_.weights, 1e-12, "product measure");
  }

  int dim() const noexcept override { return spec_.d; }
  MeasureKind kind() const noexcept override { return MeasureKind::product; }
  bool homogeneous() const noexcept override { return true; }
  const ProductMeasureSpec& spec() const noexcept { return spec_; }

  void edge_weights(std::span<const Digit>, std::span<double> out) const override {
    std::copy(spec_.weights.begin(), spec_.weights.end(), out.begin());
  }
  using MeasureTree::edge_weights;

 private:
  ProductMeasureSpec spec_;
};

inline ProductMeasure make_product_measure(ProductMeasureSpec spec) {
  return ProductMeasure(std::move(spec));
}

enum class Continuation { uniform, error };

inline Continuation parse_continuation(const std::string& s) {
  if (s == "uniform") return Continuation::uniform;
  if (s == "error") return Continuation::error;
  throw DomainError("continuation must be \"uniform\" or \"error\", got \"" + s + "\"");
}

inline const char* to_string(Continuation c) {
  return c == Continuation::uniform ? "uniform" : "error";
}

struct ExplicitMeasureSpec {
  int d = 1;
  // Keyed by node path; values are the 2^d weights leaving that node.
  std::map<std::vector<Digit>, std::vector<double>> nodes;
  Continuation continuation = Continuation::uniform;
};

class ExplicitMeasure final : public MeasureTree {
 public:
  explicit ExplicitMeasure(ExplicitMeasureSpec spec) : spec_(std::move(spec)) {
    check_dim(spec_.d);
    for (auto& [key, w] : spec_.nodes) {
      NodePath(spec_.d, key);  // validates digits
      if (w.size() != branching(spec_.d)) {
        throw DomainError("explicit measure: node needs exactly 2^d weights");
      }
      detail::check_simplex(w, 1e-9, "explicit measure");
      double sum = 0.0;
      for (double x : w) sum += x;
      for (double& x : w) x /= sum;
      stored_level_ = std::max(stored_level_, key.size());
      table_.emplace(std::string(key.begin(), key.end()), w);
    }
  }

  int dim() const noexcept override { return spec_.d; }
  MeasureKind kind() const noexcept override { return MeasureKind::explicit_table; }
  const ExplicitMeasureSpec& spec() const noexcept { return spec_; }
  Continuation continuation() const noexcept { return spec_.continuation; }

  // Deepest level at which a node carries stored weights.
  std::size_t stored_level() const noexcept { return stored_level_; }

  void edge_weights(std::span<const Digit> node, std::span<double> out) const override {
    const auto it = table_.find(std::string(node.begin(), node.end()));
    if (it != table_.end()) {
      std::copy(it->second.begin(), it->second.end(), out.begin());
      return;
    }
    if (spec_.continuation == Continuation::error) {
      if (table_.empty() || node.size() > stored_level_) {
        throw DomainError("beyond stored depth");
      }
      throw DomainError("node not stored in explicit measure");
    }
    std::fill(out.begin(), out.end(), std::ldexp(1.0, -spec_.d));
  }
  using MeasureTree::edge_weights;

 private:
  ExplicitMeasureSpec spec_;
  std::unordered_map<std::string, std::vector<double>> table_;
  std::size_t stored_level_ = 0;
};

// File format: {"d": int, "nodes": {"<digits>": [w_0, ...], ...},
// "continuation": "uniform" | "error"}; the root key is "".
// `policy`, when given, overrides the file's continuation field.
inline ExplicitMeasure parse_explicit_measure(const nlohmann::json& j,
                                              std::optional<Continuation> policy = {}) {
  ExplicitMeasureSpec spec;
  try {
    spec.d = j.at("d").get<int>();
    check_dim(spec.d);
    for (const auto& [key, weights] : j.at("nodes").items()) {
      const NodePath p = NodePath::parse(spec.d, key);
      spec.nodes.emplace(std::vector<Digit>(p.digits().begin(), p.digits().end()),
                         weights.get<std::vector<double>>());
    }
    if (j.contains("continuation")) {
      spec.continuation = parse_continuation(j.at("continuation").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("explicit measure: malformed document: ") + e.what());
  }
  if (policy) spec.continuation = *policy;
  return ExplicitMeasure(std::move(spec));
}

inline ExplicitMeasure load_explicit_measure(const std::string& file,
                                             std::optional<Continuation> policy = {}) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError("explicit measure: parse failure in " + file + ": " + e.what());
  }
  return parse_explicit_measure(j, policy);
}

// Tabulates every node above `depth` (levels 0 .. depth-1), i.e. enough to
// reproduce masses down to level `depth`.
inline nlohmann::json tabulate_measure(const MeasureTree& measure, std::size_t depth,
                                       Continuation continuation = Continuation::uniform) {
  const int d = measure.dim();
  nlohmann::json nodes = nlohmann::json::object();
  std::vector<double> w(branching(d));
  NodePath node(d);
  auto visit = [&](auto&& self) -> void {
    measure.edge_weights(node.digits(), w);
    nodes[node.str()] = w;
    if (node.level() + 1 >= depth) return;
    for (unsigned c = 0; c < branching(d); ++c) {
      node.push(c);
      self(self);
      node.pop();
    }
  };
  if (depth > 0) visit(visit);
  return {{"d", d}, {"nodes", std::move(nodes)}, {"continuation", to_string(continuation)}};
}

}  // namespace qadim
