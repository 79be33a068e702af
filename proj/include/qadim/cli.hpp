#pragma once

// Command-line front end. run_cli is the whole program; tools/qadim_cli.cpp
// only forwards argv and the standard streams.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qadim/analytics.hpp"
#include "qadim/dimension.hpp"
#include "qadim/errors.hpp"
#include "qadim/experiments.hpp"
#include "qadim/measures.hpp"
#include "qadim/render.hpp"

namespace qadim {

struct AcceptanceOptions {
  unsigned threads = 1;
  bool slow = false;
  std::vector<int> only;  // empty = every criterion
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget = 0.0;
};

// Defined in acceptance.hpp, which this header pulls in at the bottom.
inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts, std::ostream* progress);
inline std::string format_criterion(const CriterionResult& r);

namespace cli_detail {

struct Flags {
  int d = 1;
  std::uint64_t seed = 0;
  std::vector<int> ms{4};
  std::vector<std::string> deltas{"1"};
  std::string phi;
  std::size_t trials = 100;
  std::size_t depth_budget = 32;
  std::string out;
  std::string format = "csv";
  unsigned threads = 1;
  int N = 1;
  bool multi_level = false;
  std::size_t level_cap = 20;
  std::size_t depth = 4;
  std::string path;
  std::string target;
  std::size_t marginal_depth = 5;
  std::string measure_file;
  std::string continuation;
  bool slow = false;
  std::vector<int> only;
  std::string kind;
};

inline void add_d(CLI::App* s, Flags& f) { s->add_option("--d", f.d, "dimension (1..8)")->check(CLI::Range(1, kMaxDim)); }
inline void add_seed(CLI::App* s, Flags& f) { s->add_option("--seed", f.seed, "master seed"); }
inline void add_threads(CLI::App* s, Flags& f) {
  s->add_option("--threads", f.threads, "worker threads")->check(CLI::Range(1u, 4096u));
}
inline void add_ms(CLI::App* s, Flags& f) {
  s->add_option("--m", f.ms, "scale gap m (comma separated list allowed)")->delimiter(',')->check(CLI::PositiveNumber);
}
inline void add_scale(CLI::App* s, Flags& f) {
  auto* delta = s->add_option("--delta", f.deltas, "exact rational P/Q or integer (comma separated list allowed)")
                    ->delimiter(',');
  s->add_option("--phi", f.phi, "const:V | power:P/Q | table:FILE")->excludes(delta);
}
inline void add_measure(CLI::App* s, Flags& f) {
  add_d(s, f);
  add_seed(s, f);
  s->add_option("--measure-file", f.measure_file, "explicit measure JSON instead of a random measure");
  s->add_option("--continuation", f.continuation, "uniform | error (overrides the file)")
      ->check(CLI::IsMember({"uniform", "error"}));
}

inline std::shared_ptr<const MeasureTree> build_measure(const Flags& f, const CLI::App* s) {
  if (f.measure_file.empty()) {
    if (!f.continuation.empty()) throw DomainError("--continuation needs --measure-file");
    return std::make_shared<RandomMeasure>(f.d, f.seed);
  }
  std::optional<Continuation> policy;
  if (!f.continuation.empty()) policy = parse_continuation(f.continuation);
  auto mu = std::make_shared<ExplicitMeasure>(load_explicit_measure(f.measure_file, policy));
  if (s->count("--d") > 0 && mu->dim() != f.d) throw DomainError("--d does not match the measure file");
  return mu;
}

inline std::vector<DeltaParam> parse_deltas(const Flags& f) {
  std::vector<DeltaParam> out;
  for (const auto& s : f.deltas) out.push_back(DeltaParam::parse(s));
  if (out.empty()) throw DomainError("--delta needs a value");
  return out;
}

inline std::vector<std::variant<DeltaParam, PhiSpec>> scales(const Flags& f) {
  std::vector<std::variant<DeltaParam, PhiSpec>> out;
  if (!f.phi.empty()) {
    out.emplace_back(PhiSpec::parse(f.phi));
  } else {
    for (const auto& dl : parse_deltas(f)) out.emplace_back(dl);
  }
  return out;
}

inline NodePath parse_path(int d, const std::string& s) {
  return s.empty() || s == "-" ? NodePath(d) : NodePath::parse(d, s);
}

inline void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(out_path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open " + out_path + " for writing");
  file << text;
  if (!file) throw IoError("write failed for " + out_path);
}

// --continuation here names the policy written into the file.
inline int cmd_sample(const Flags& f, std::ostream& out) {
  const RandomMeasure mu(f.d, f.seed);
  const Continuation cont = f.continuation.empty() ? Continuation::uniform : parse_continuation(f.continuation);
  emit(tabulate_measure(mu, f.depth, cont).dump(2) + "\n", f.out, out);
  return 0;
}

inline int cmd_mass(const Flags& f, const CLI::App* s, std::ostream& out) {
  const auto mu = build_measure(f, s);
  const NodePath p = parse_path(mu->dim(), f.path);
  const LogMass lm = mu->mass(p);
  out << "path " << witness_string(p) << "\n"
      << "level " << p.level() << "\n"
      << "log2_mass " << format_double(lm.log2_value()) << "\n"
      << "mass " << format_double(lm.linear()) << "\n"
      << "lebesgue " << format_double(predicted_cube_mass(p).linear()) << "\n";
  return 0;
}

inline int cmd_stat(const Flags& f, const CLI::App* s, std::ostream& out) {
  const auto mu = build_measure(f, s);
  if (f.ms.size() != 1) throw DomainError("stat takes a single --m");
  const auto sc = scales(f);
  if (sc.size() != 1) throw DomainError("stat takes a single --delta");
  const LevelChoice lc = resolve_level(f.ms[0], sc[0], f.level_cap);
  const RatioPair st = ratio_stats(*mu, f.ms[0], lc.level, {f.depth_budget, f.multi_level, f.threads});
  out << render_stat(st, lc);
  return 0;
}

inline int cmd_profile(const Flags& f, const CLI::App* s, std::ostream& out) {
  const auto mu = build_measure(f, s);
  std::vector<ScheduleEntry> schedule;
  for (int m : f.ms) {
    for (const auto& sc : scales(f)) schedule.push_back({m, sc});
  }
  out << render_profile(estimate_profile(*mu, schedule, f.level_cap, {f.depth_budget, f.multi_level, f.threads}));
  return 0;
}

inline int cmd_bound(const Flags& f, std::ostream& out) {
  check_dim(f.d);
  const auto sc = scales(f);
  for (int m : f.ms) {
    for (const auto& scale : sc) {
      const LevelChoice lc = resolve_level(m, scale, f.level_cap);
      const BoundInput in{f.d, f.N, m, lc.level};
      const auto* dl = std::get_if<DeltaParam>(&scale);
      out << "m " << m << "\n"
          << "scale " << scale_tag(scale) << "\n"
          << "level " << lc.level << "\n"
          << "capped " << (lc.capped ? "true" : "false") << "\n"
          << "upper_tail_bound " << (m >= 2 ? format_double(upper_tail_bound(in)) : "na") << "\n"
          << "upper_tail_bound_coarse " << (m >= 2 ? format_double(upper_tail_bound_coarse(in)) : "na") << "\n"
          << "lower_tail_bound " << format_double(lower_tail_bound(in)) << "\n"
          << "upper_admissible " << (dl ? (upper_bound_admissible(f.d, f.N, *dl) ? "true" : "false") : "na") << "\n"
          << "lower_admissible " << (dl ? (lower_bound_admissible(f.d, f.N, *dl) ? "true" : "false") : "na") << "\n";
    }
  }
  return 0;
}

inline int cmd_experiment(const Flags& f, const CLI::App* s, std::ostream& out, std::ostream& err) {
  ExperimentConfig c;
  c.kind = parse_experiment_kind(f.kind);
  c.d = f.d;
  c.N = f.N;
  c.ms = f.ms;
  if (!f.phi.empty()) {
    c.phi = PhiSpec::parse(f.phi);
    c.deltas.clear();
  } else {
    c.deltas = parse_deltas(f);
  }
  c.trials = f.trials;
  c.master_seed = f.seed;
  c.depth_budget = f.depth_budget;
  c.level_cap = f.level_cap;
  c.multi_level = f.multi_level;
  c.threads = f.threads;
  c.marginal_depth = f.marginal_depth;
  if (!f.measure_file.empty()) {
    const std::shared_ptr<const MeasureTree> fixed = build_measure(f, s);
    c.d = fixed->dim();
    c.measure_factory = [fixed](std::uint64_t) { return fixed; };
    c.measure_label = "file:" + f.measure_file;
  } else if (!f.continuation.empty()) {
    throw DomainError("--continuation needs --measure-file");
  }
  c.target = parse_path(c.d, f.target);
  const ReportFormat fmt = parse_report_format(f.format);

  const ExperimentReport report = run_experiment(c);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  err << "# wall_seconds " << report.wall_seconds << "\n";
  if (f.out.empty()) {
    out << render_report(report, fmt);
  } else {
    write_report(report, fmt, f.out);
  }
  return 0;
}

inline int cmd_verify(const Flags& f, std::ostream& out) {
  AcceptanceOptions opts;
  opts.threads = f.threads;
  opts.slow = f.slow;
  opts.only = f.only;
  const auto results = run_acceptance(opts, &out);
  const bool ok = std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.passed; });
  out << (ok ? "all criteria passed" : "some criteria failed") << "\n";
  return ok ? 0 : 1;
}

}  // namespace cli_detail

// Exit codes: 0 success, 1 domain or validation error, 2 I/O error.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  Flags f;
  CLI::App app{"Random measures on dyadic trees and their quasi-Assouad ratio statistics", "qadim"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);

  auto* sample = app.add_subcommand("sample", "write a seeded random measure as an explicit-measure file");
  add_d(sample, f);
  add_seed(sample, f);
  sample->add_option("--continuation", f.continuation, "policy recorded in the file: uniform | error")
      ->check(CLI::IsMember({"uniform", "error"}));
  sample->add_option("--depth", f.depth, "number of tabulated levels");
  sample->add_option("--out", f.out, "output file (default stdout)");

  auto* mass_cmd = app.add_subcommand("mass", "mass of one dyadic cube");
  add_measure(mass_cmd, f);
  mass_cmd->add_option("--path", f.path, "node digits, e.g. 0110 (empty or - for the root)");

  auto* stat = app.add_subcommand("stat", "H and h exponents at one m");
  add_measure(stat, f);
  add_ms(stat, f);
  add_scale(stat, f);
  stat->add_flag("--multi-level", f.multi_level, "extremise over levels 1..L");
  stat->add_option("--level-cap", f.level_cap, "level used when phi gives no bound");
  stat->add_option("--depth-budget", f.depth_budget, "maximum L + m");
  add_threads(stat, f);

  auto* profile = app.add_subcommand("profile", "exponents over an (m, scale) schedule");
  add_measure(profile, f);
  add_ms(profile, f);
  add_scale(profile, f);
  profile->add_flag("--multi-level", f.multi_level, "extremise over levels 1..L");
  profile->add_option("--level-cap", f.level_cap, "level used when phi gives no bound");
  profile->add_option("--depth-budget", f.depth_budget, "maximum L + m");
  add_threads(profile, f);

  auto* bound = app.add_subcommand("bound", "analytic tail bounds");
  add_d(bound, f);
  bound->add_option("--N", f.N, "event threshold")->check(CLI::PositiveNumber);
  add_ms(bound, f);
  add_scale(bound, f);
  bound->add_option("--level-cap", f.level_cap, "level used when phi gives no bound");

  auto* experiment = app.add_subcommand("experiment", "run a Monte Carlo experiment and write its report");
  experiment->add_option("kind", f.kind, "upper_tail | lower_tail | expectation | marginal | profile_trend")
      ->required()
      ->check(CLI::IsMember({"upper_tail", "lower_tail", "expectation", "marginal", "profile_trend"}));
  add_measure(experiment, f);
  experiment->add_option("--N", f.N, "event threshold")->check(CLI::PositiveNumber);
  add_ms(experiment, f);
  add_scale(experiment, f);
  experiment->add_option("--trials", f.trials, "number of independent measures")->check(CLI::PositiveNumber);
  experiment->add_option("--depth-budget", f.depth_budget, "maximum L + m");
  experiment->add_option("--level-cap", f.level_cap, "level used when phi gives no bound");
  experiment->add_flag("--multi-level", f.multi_level, "extremise over levels 1..L");
  experiment->add_option("--target", f.target, "expectation: node digits of the target cube");
  experiment->add_option("--marginal-depth", f.marginal_depth, "marginal: depth of the sampled nodes");
  experiment->add_option("--out", f.out, "report file (default stdout)");
  experiment->add_option("--format", f.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  add_threads(experiment, f);

  auto* verify = app.add_subcommand("verify", "run the acceptance suite");
  verify->add_flag("--slow", f.slow, "include the slow m = 8 upper-tail point");
  verify->add_option("--only", f.only, "criterion ids to run")->delimiter(',');
  add_threads(verify, f);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  err << "# resolved " << chosen->get_name() << (f.kind.empty() ? "" : " " + f.kind) << "\n";
  std::istringstream resolved(chosen->config_to_str(true, false));
  for (std::string line; std::getline(resolved, line);) {
    if (!line.empty()) err << "#   " << line << "\n";
  }

  try {
    if (chosen == sample) return cmd_sample(f, out);
    if (chosen == mass_cmd) return cmd_mass(f, mass_cmd, out);
    if (chosen == stat) return cmd_stat(f, stat, out);
    if (chosen == profile) return cmd_profile(f, profile, out);
    if (chosen == bound) return cmd_bound(f, out);
    if (chosen == experiment) return cmd_experiment(f, experiment, out, err);
    if (chosen == verify) return cmd_verify(f, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace qadim

#include "qadim/acceptance.hpp"
