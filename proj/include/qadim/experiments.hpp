#pragma once

// Monte Carlo harness. Trial t uses the measure seeded by
// trial_seed(master_seed, t); per-trial results land in index-addressed slots
// and are reduced in trial order, so reports do not depend on the thread count.
//
// All tail and trend rows are finite-scale surrogates of the limsup/liminf
// events; confidence radii are 3 sigma Gaussian (sd / sqrt(trials)).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qadim/analytics.hpp"
#include "qadim/dimension.hpp"
#include "qadim/errors.hpp"
#include "qadim/measures.hpp"
#include "qadim/parallel.hpp"
#include "qadim/randomness.hpp"

namespace qadim {

inline constexpr const char* kFormatVersion = "qadim-1.0";

enum class ExperimentKind { upper_tail, lower_tail, expectation, marginal, profile_trend };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::upper_tail: return "upper_tail";
    case ExperimentKind::lower_tail: return "lower_tail";
    case ExperimentKind::expectation: return "expectation";
    case ExperimentKind::marginal: return "marginal";
    case ExperimentKind::profile_trend: return "profile_trend";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::upper_tail, ExperimentKind::lower_tail, ExperimentKind::expectation,
                 ExperimentKind::marginal, ExperimentKind::profile_trend}) {
    if (s == to_string(k)) return k;
  }
  throw DomainError("unknown experiment kind \"" + s + "\"");
}

using MeasureFactory = std::function<std::shared_ptr<const MeasureTree>(std::uint64_t seed)>;

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::upper_tail;
  int d = 1;
  int N = 1;
  std::vector<int> ms{4};
  // Tail kinds use deltas.front() (or phi when set); profile_trend walks the
  // whole list, which must be strictly decreasing.
  std::vector<DeltaParam> deltas{DeltaParam(1, 1)};
  std::optional<PhiSpec> phi;
  std::size_t trials = 100;
  std::uint64_t master_seed = 0;
  std::size_t depth_budget = 32;
  std::size_t level_cap = 20;
  bool multi_level = false;
  unsigned threads = 1;
  NodePath target{1};               // expectation
  std::size_t marginal_depth = 5;   // marginal
  // Overrides the random measure (deterministic fixtures); empty = random.
  MeasureFactory measure_factory;
  std::string measure_label = "random";
};

enum class Verdict { pass, fail, not_evaluated };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "true";
    case Verdict::fail: return "false";
    case Verdict::not_evaluated: return "na";
  }
  return "?";
}

inline Verdict parse_verdict(const std::string& s) {
  if (s == "true") return Verdict::pass;
  if (s == "false") return Verdict::fail;
  if (s == "na") return Verdict::not_evaluated;
  throw DomainError("bad pass field \"" + s + "\"");
}

struct ReportRow {
  std::string kind;
  int d = 1;
  int N = 0;
  int m = 0;
  std::uint64_t delta_num = 0;  // 0/0 when no delta applies
  std::uint64_t delta_den = 0;
  std::size_t level = 0;
  std::size_t trials = 0;
  std::string metric;
  double value = 0.0;
  double sd = 0.0;
  double radius3 = 0.0;
  double bound_or_prediction = 0.0;
  Verdict pass = Verdict::not_evaluated;
  std::uint64_t seed = 0;
  std::string version = kFormatVersion;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ExperimentReport {
  nlohmann::json config;  // echo of the resolved configuration
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;  // not serialised

  bool passed() const {
    return std::none_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.pass == Verdict::fail; });
  }
};

inline nlohmann::json config_echo(const ExperimentConfig& c) {
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& dl : c.deltas) deltas.push_back(dl.str());
  return {{"kind", to_string(c.kind)},
          {"d", c.d},
          {"N", c.N},
          {"m", c.ms},
          {"delta", deltas},
          {"phi", c.phi ? c.phi->tag() : ""},
          {"trials", c.trials},
          {"seed", c.master_seed},
          {"depth_budget", c.depth_budget},
          {"level_cap", c.level_cap},
          {"multi_level", c.multi_level},
          {"target", branching(c.target.dim()) <= 36 ? c.target.str() : ""},
          {"marginal_depth", c.marginal_depth},
          {"measure", c.measure_label},
          {"statistic", c.kind == ExperimentKind::expectation || c.kind == ExperimentKind::marginal
                            ? "exact finite-scale quantity"
                            : "finite-scale surrogate"},
          {"version", kFormatVersion}};
}

namespace detail {

inline void validate(const ExperimentConfig& c, ExperimentKind expected) {
  if (c.kind != expected) throw DomainError("experiment kind mismatch");
  check_dim(c.d);
  if (c.trials == 0) throw DomainError("trials must be >= 1");
  if (c.N < 1) throw DomainError("N must be >= 1");
  for (int m : c.ms) {
    if (m < 1) throw DomainError("m must be >= 1");
  }
}

inline std::shared_ptr<const MeasureTree> trial_measure(const ExperimentConfig& c, std::size_t t) {
  const std::uint64_t seed = trial_seed(c.master_seed, t);
  if (c.measure_factory) {
    auto mu = c.measure_factory(seed);
    if (!mu || mu->dim() != c.d) throw DomainError("measure factory returned a measure of the wrong dimension");
    return mu;
  }
  return std::make_shared<RandomMeasure>(c.d, seed);
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1), 0 for a single value
};

// Two-pass, fixed summation order.
inline Moments moments(const std::vector<double>& xs) {
  Moments mo;
  if (xs.empty()) return mo;
  double sum = 0.0;
  for (double x : xs) sum += x;
  mo.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mo.mean) * (x - mo.mean);
    mo.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return mo;
}

inline double radius3(double sd, std::size_t n) { return 3.0 * sd / std::sqrt(static_cast<double>(n)); }

inline ReportRow base_row(const ExperimentConfig& c) {
  ReportRow r;
  r.kind = to_string(c.kind);
  r.d = c.d;
  r.N = c.N;
  r.trials = c.trials;
  r.seed = c.master_seed;
  return r;
}

struct TailScale {
  std::size_t level = 0;
  bool capped = false;
  std::uint64_t num = 0, den = 0;
};

inline TailScale tail_scale(const ExperimentConfig& c, int m) {
  if (c.phi) {
    const LevelChoice lc = level_from_phi(*c.phi, m, c.level_cap);
    return {lc.level, lc.capped, 0, 0};
  }
  if (c.deltas.empty()) throw DomainError("tail experiments need a delta or a phi");
  const DeltaParam dl = c.deltas.front();
  return {level_from_delta(m, dl), false, dl.num, dl.den};
}

template <typename Fn>
ExperimentReport timed(const ExperimentConfig& c, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = config_echo(c);
  fn(report);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

enum class TailSide { upper, lower };

inline ExperimentReport run_tail(const ExperimentConfig& c, TailSide side) {
  validate(c, side == TailSide::upper ? ExperimentKind::upper_tail : ExperimentKind::lower_tail);
  for (int m : c.ms) {
    if (side == TailSide::upper && m < 2) throw DomainError("upper tail bound needs m >= 2");
  }
  std::vector<TailScale> scales;
  for (int m : c.ms) {
    scales.push_back(tail_scale(c, m));
    check_depth_budget(m, scales.back().level, c.depth_budget);
  }

  return timed(c, [&](ExperimentReport& report) {
    if (!c.phi && !c.deltas.empty()) {
      const DeltaParam dl = c.deltas.front();
      const bool ok = side == TailSide::upper ? upper_bound_admissible(c.d, c.N, dl)
                                              : lower_bound_admissible(c.d, c.N, dl);
      if (!ok) {
        report.warnings.push_back("delta " + dl.str() + " is outside the admissible range for N=" +
                                  std::to_string(c.N) + "; the bound comparison still runs");
      }
    }

    // exponents[t][i] for trial t and the i-th m
    std::vector<std::vector<double>> exponents(c.trials, std::vector<double>(c.ms.size()));
    StatOptions opts{c.depth_budget, c.multi_level, 1};
    parallel_for(c.trials, c.threads, [&](std::size_t t) {
      const auto mu = trial_measure(c, t);
      for (std::size_t i = 0; i < c.ms.size(); ++i) {
        const RatioPair s = ratio_stats(*mu, c.ms[i], scales[i].level, opts);
        exponents[t][i] = (side == TailSide::upper ? s.upper : s.lower).exponent();
      }
    });

    for (std::size_t i = 0; i < c.ms.size(); ++i) {
      const int m = c.ms[i];
      std::vector<double> events, values;
      for (std::size_t t = 0; t < c.trials; ++t) {
        const double e = exponents[t][i];
        values.push_back(e);
        const bool hit = side == TailSide::upper ? e <= c.N : e >= 1.0 / c.N;
        events.push_back(hit ? 1.0 : 0.0);
      }
      const BoundInput in{c.d, c.N, m, scales[i].level};
      const double bound = side == TailSide::upper ? upper_tail_bound(in) : lower_tail_bound(in);

      ReportRow freq = base_row(c);
      freq.m = m;
      freq.delta_num = scales[i].num;
      freq.delta_den = scales[i].den;
      freq.level = scales[i].level;
      freq.metric = "event_frequency";
      freq.value = moments(events).mean;
      freq.sd = std::sqrt(freq.value * (1.0 - freq.value));
      freq.radius3 = radius3(freq.sd, c.trials);
      freq.bound_or_prediction = bound;
      freq.pass = freq.value <= bound + freq.radius3 ? Verdict::pass : Verdict::fail;
      report.rows.push_back(freq);

      ReportRow mean = freq;
      const Moments mo = moments(values);
      mean.metric = side == TailSide::upper ? "mean_upper_exponent" : "mean_lower_exponent";
      mean.value = mo.mean;
      mean.sd = mo.sd;
      mean.radius3 = radius3(mo.sd, c.trials);
      mean.bound_or_prediction = side == TailSide::upper ? c.N : 1.0 / c.N;  // event threshold
      mean.pass = Verdict::not_evaluated;
      report.rows.push_back(mean);
    }
  });
}

}  // namespace detail

// Frequency of {log2 H_{m,delta}/m <= N} against upper_tail_bound.
inline ExperimentReport run_upper_tail(const ExperimentConfig& c) {
  return detail::run_tail(c, detail::TailSide::upper);
}

// Frequency of {log2 h_{m,delta}/m >= 1/N} against lower_tail_bound.
inline ExperimentReport run_lower_tail(const ExperimentConfig& c) {
  return detail::run_tail(c, detail::TailSide::lower);
}

// Mean of mu(cube(target)) against its Lebesgue measure.
inline ExperimentReport run_expectation(const ExperimentConfig& c) {
  detail::validate(c, ExperimentKind::expectation);
  if (c.target.dim() != c.d) throw DomainError("target path dimension does not match d");
  return detail::timed(c, [&](ExperimentReport& report) {
    std::vector<double> masses(c.trials);
    parallel_for(c.trials, c.threads, [&](std::size_t t) {
      masses[t] = detail::trial_measure(c, t)->mass(c.target).linear();
    });
    const auto mo = detail::moments(masses);
    ReportRow r = detail::base_row(c);
    r.level = c.target.level();
    r.metric = "mean_mass";
    r.value = mo.mean;
    r.sd = mo.sd;
    r.radius3 = detail::radius3(mo.sd, c.trials);
    r.bound_or_prediction = predicted_cube_mass(c.target).linear();
    r.pass = std::abs(r.value - r.bound_or_prediction) <= r.radius3 ? Verdict::pass : Verdict::fail;
    report.rows.push_back(r);
  });
}

// Node whose child-0 edge weight trial t contributes to the marginal test.
inline NodePath marginal_node(int d, std::size_t depth, std::size_t trial) {
  NodePath p(d);
  std::uint64_t rem = trial;
  for (std::size_t k = 0; k < depth; ++k) {
    p.push(static_cast<unsigned>(rem % branching(d)));
    rem /= branching(d);
  }
  return p;
}

// KS distance of child-0 edge weights against Beta(1, 2^d - 1).
inline ExperimentReport run_marginal(const ExperimentConfig& c) {
  detail::validate(c, ExperimentKind::marginal);
  return detail::timed(c, [&](ExperimentReport& report) {
    std::vector<double> samples(c.trials);
    parallel_for(c.trials, c.threads, [&](std::size_t t) {
      const auto mu = detail::trial_measure(c, t);
      samples[t] = mu->edge_weights(marginal_node(c.d, c.marginal_depth, t))[0];
    });
    std::sort(samples.begin(), samples.end());
    const int n = static_cast<int>(branching(c.d));
    ReportRow r = detail::base_row(c);
    r.level = c.marginal_depth;
    r.metric = "ks_distance";
    r.value = ks_distance(samples, [n](double x) { return beta_cdf(x, n); });
    r.bound_or_prediction = ks_critical_001(c.trials);
    r.pass = c.trials < 2 ? Verdict::not_evaluated
                          : (r.value <= r.bound_or_prediction ? Verdict::pass : Verdict::fail);
    report.rows.push_back(r);
  });
}

// Mean upper exponent at fixed m along a strictly decreasing delta list.
inline ExperimentReport run_profile_trend(const ExperimentConfig& c) {
  detail::validate(c, ExperimentKind::profile_trend);
  if (c.ms.empty() || c.deltas.empty()) throw DomainError("profile_trend needs m and a delta list");
  for (std::size_t i = 1; i < c.deltas.size(); ++i) {
    const auto& a = c.deltas[i - 1];
    const auto& b = c.deltas[i];
    if (static_cast<unsigned __int128>(b.num) * a.den >= static_cast<unsigned __int128>(a.num) * b.den) {
      throw DomainError("profile_trend needs a strictly decreasing delta list");
    }
  }
  const int m = c.ms.front();
  std::vector<std::size_t> levels;
  for (const auto& dl : c.deltas) {
    levels.push_back(level_from_delta(m, dl));
    check_depth_budget(m, levels.back(), c.depth_budget);
  }
  return detail::timed(c, [&](ExperimentReport& report) {
    std::vector<std::vector<double>> exps(c.trials, std::vector<double>(c.deltas.size()));
    StatOptions opts{c.depth_budget, c.multi_level, 1};
    parallel_for(c.trials, c.threads, [&](std::size_t t) {
      const auto mu = detail::trial_measure(c, t);
      for (std::size_t i = 0; i < c.deltas.size(); ++i) {
        exps[t][i] = upper_ratio_stat(*mu, m, levels[i], opts).exponent();
      }
    });

    std::vector<double> means;
    for (std::size_t i = 0; i < c.deltas.size(); ++i) {
      std::vector<double> col;
      for (std::size_t t = 0; t < c.trials; ++t) col.push_back(exps[t][i]);
      const auto mo = detail::moments(col);
      means.push_back(mo.mean);
      ReportRow r = detail::base_row(c);
      r.m = m;
      r.delta_num = c.deltas[i].num;
      r.delta_den = c.deltas[i].den;
      r.level = levels[i];
      r.metric = "mean_upper_exponent";
      r.value = mo.mean;
      r.sd = mo.sd;
      r.radius3 = detail::radius3(mo.sd, c.trials);
      r.bound_or_prediction = 0.0;
      report.rows.push_back(r);
    }

    std::size_t monotone = 0;
    for (const auto& row : exps) {
      if (std::is_sorted(row.begin(), row.end())) ++monotone;
    }
    bool increasing = true;
    for (std::size_t i = 1; i < means.size(); ++i) increasing = increasing && means[i] > means[i - 1];

    ReportRow r = detail::base_row(c);
    r.m = m;
    r.metric = "monotone_fraction";
    r.value = static_cast<double>(monotone) / static_cast<double>(c.trials);
    r.bound_or_prediction = 0.9;
    r.pass = c.deltas.size() < 2 ? Verdict::not_evaluated
                                 : (increasing && r.value >= 0.9 ? Verdict::pass : Verdict::fail);
    report.rows.push_back(r);
  });
}

inline ExperimentReport run_experiment(const ExperimentConfig& c) {
  switch (c.kind) {
    case ExperimentKind::upper_tail: return run_upper_tail(c);
    case ExperimentKind::lower_tail: return run_lower_tail(c);
    case ExperimentKind::expectation: return run_expectation(c);
    case ExperimentKind::marginal: return run_marginal(c);
    case ExperimentKind::profile_trend: return run_profile_trend(c);
  }
  throw DomainError("unknown experiment kind");
}

// ---- serialisation -------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "kind,d,N,m,delta_num,delta_den,level,trials,metric,value,sd,radius3,bound_or_prediction,pass,seed,version";

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw DomainError("malformed number \"" + s + "\"");
  return v;
}

inline std::string report_csv(const ExperimentReport& report) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : report.rows) {
    out += r.kind + "," + std::to_string(r.d) + "," + std::to_string(r.N) + "," + std::to_string(r.m) + "," +
           std::to_string(r.delta_num) + "," + std::to_string(r.delta_den) + "," + std::to_string(r.level) + "," +
           std::to_string(r.trials) + "," + r.metric + "," + format_double(r.value) + "," + format_double(r.sd) +
           "," + format_double(r.radius3) + "," + format_double(r.bound_or_prediction) + "," + to_string(r.pass) +
           "," + std::to_string(r.seed) + "," + r.version + "\n";
  }
  return out;
}

namespace detail {

// Non-finite doubles become strings; JSON has no literal for them.
inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

inline double json_to_double(const nlohmann::json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json report_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"kind", r.kind},
                    {"d", r.d},
                    {"N", r.N},
                    {"m", r.m},
                    {"delta_num", r.delta_num},
                    {"delta_den", r.delta_den},
                    {"level", r.level},
                    {"trials", r.trials},
                    {"metric", r.metric},
                    {"value", detail::json_number(r.value)},
                    {"sd", detail::json_number(r.sd)},
                    {"radius3", detail::json_number(r.radius3)},
                    {"bound_or_prediction", detail::json_number(r.bound_or_prediction)},
                    {"pass", to_string(r.pass)},
                    {"seed", r.seed},
                    {"version", r.version}});
  }
  return {{"config", report.config}, {"warnings", report.warnings}, {"rows", std::move(rows)}};
}

enum class ReportFormat { csv, json };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw DomainError("format must be csv or json, got \"" + s + "\"");
}

inline std::string render_report(const ExperimentReport& report, ReportFormat format) {
  if (format == ReportFormat::csv) return report_csv(report);
  return report_json(report).dump(2) + "\n";
}

inline void write_report(const ExperimentReport& report, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << render_report(report, format);
  if (!out) throw IoError("write failed for " + path);
}

inline ExperimentReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw DomainError("report CSV: bad header");
  ExperimentReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream cells(line);
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (f.size() != 16) throw DomainError("report CSV: expected 16 fields");
    ReportRow r;
    r.kind = f[0];
    r.d = std::stoi(f[1]);
    r.N = std::stoi(f[2]);
    r.m = std::stoi(f[3]);
    r.delta_num = std::stoull(f[4]);
    r.delta_den = std::stoull(f[5]);
    r.level = std::stoull(f[6]);
    r.trials = std::stoull(f[7]);
    r.metric = f[8];
    r.value = parse_double(f[9]);
    r.sd = parse_double(f[10]);
    r.radius3 = parse_double(f[11]);
    r.bound_or_prediction = parse_double(f[12]);
    r.pass = parse_verdict(f[13]);
    r.seed = std::stoull(f[14]);
    r.version = f[15];
    report.rows.push_back(std::move(r));
  }
  return report;
}

inline ExperimentReport parse_report_json(const std::string& text) {
  ExperimentReport report;
  try {
    const auto j = nlohmann::json::parse(text);
    report.config = j.at("config");
    report.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& o : j.at("rows")) {
      ReportRow r;
      r.kind = o.at("kind").get<std::string>();
      r.d = o.at("d").get<int>();
      r.N = o.at("N").get<int>();
      r.m = o.at("m").get<int>();
      r.delta_num = o.at("delta_num").get<std::uint64_t>();
      r.delta_den = o.at("delta_den").get<std::uint64_t>();
      r.level = o.at("level").get<std::size_t>();
      r.trials = o.at("trials").get<std::size_t>();
      r.metric = o.at("metric").get<std::string>();
      r.value = detail::json_to_double(o.at("value"));
      r.sd = detail::json_to_double(o.at("sd"));
      r.radius3 = detail::json_to_double(o.at("radius3"));
      r.bound_or_prediction = detail::json_to_double(o.at("bound_or_prediction"));
      r.pass = parse_verdict(o.at("pass").get<std::string>());
      r.seed = o.at("seed").get<std::uint64_t>();
      r.version = o.at("version").get<std::string>();
      report.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("report JSON: ") + e.what());
  }
  return report;
}

}  // namespace qadim
