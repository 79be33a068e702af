#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qadim/experiments.hpp"

using namespace qadim;

namespace {

ExperimentConfig config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  return c;
}

MeasureFactory lebesgue_factory(int d) {
  return [d](std::uint64_t) {
    return std::make_shared<ProductMeasure>(ProductMeasureSpec::lebesgue(d));
  };
}

const ReportRow& row(const ExperimentReport& r, const std::string& metric, int m = -1) {
  for (const auto& x : r.rows) {
    if (x.metric == metric && (m < 0 || x.m == m)) return x;
  }
  throw std::runtime_error("no row " + metric);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(UpperTail, PassesBoundAtDeltaTwoFifths) {
  auto c = config(ExperimentKind::upper_tail);
  c.ms = {4};
  c.deltas = {DeltaParam(2, 5)};
  c.trials = 400;
  c.master_seed = 11;
  const auto r = run_upper_tail(c);
  const auto& f = row(r, "event_frequency");
  EXPECT_EQ(f.level, 10u);
  EXPECT_NEAR(f.bound_or_prediction, 0.01817273464050762, 1e-13);
  EXPECT_GE(f.value, 0.0);
  EXPECT_LE(f.value, 1.0);
  EXPECT_EQ(f.pass, Verdict::pass);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(r.rows.size(), 2u);
}

TEST(UpperTail, SingleTrialFrequencyIsZeroOrOne) {
  auto c = config(ExperimentKind::upper_tail);
  c.trials = 1;
  c.deltas = {DeltaParam(2, 5)};
  const double f = row(run_upper_tail(c), "event_frequency").value;
  EXPECT_TRUE(f == 0.0 || f == 1.0);
}

TEST(UpperTail, ThreadCountDoesNotChangeRows) {
  auto c = config(ExperimentKind::upper_tail);
  c.ms = {2, 4};
  c.deltas = {DeltaParam(2, 5)};
  c.trials = 60;
  c.master_seed = 3;
  const auto one = run_upper_tail(c);
  c.threads = 8;
  const auto eight = run_upper_tail(c);
  EXPECT_EQ(one.rows, eight.rows);
  EXPECT_EQ(report_csv(one), report_csv(eight));
  EXPECT_EQ(render_report(one, ReportFormat::json), render_report(eight, ReportFormat::json));
}

TEST(UpperTail, WarnsOutsideAdmissibleRange) {
  auto c = config(ExperimentKind::upper_tail);
  c.ms = {2};
  c.deltas = {DeltaParam(1, 1)};
  c.trials = 5;
  EXPECT_EQ(run_upper_tail(c).warnings.size(), 1u);
}

TEST(UpperTail, Validation) {
  auto c = config(ExperimentKind::upper_tail);
  c.trials = 0;
  EXPECT_THROW(run_upper_tail(c), DomainError);
  c.trials = 1;
  c.ms = {1};
  EXPECT_THROW(run_upper_tail(c), DomainError);
  c.ms = {8};
  c.deltas = {DeltaParam(1, 10)};
  EXPECT_THROW(run_upper_tail(c), DomainError);  // depth budget
  c = config(ExperimentKind::lower_tail);
  EXPECT_THROW(run_upper_tail(c), DomainError);
}

TEST(UpperTail, PhiScheduleUsesLevelFromPhi) {
  auto c = config(ExperimentKind::upper_tail);
  c.ms = {4};
  c.phi = PhiSpec::power(DeltaParam(2, 5));
  c.trials = 3;
  const auto& f = row(run_upper_tail(c), "event_frequency");
  EXPECT_EQ(f.level, 10u);
  EXPECT_EQ(f.delta_den, 0u);
}

TEST(LowerTail, PassesBoundAtHalf) {
  auto c = config(ExperimentKind::lower_tail);
  c.N = 2;
  c.ms = {4, 8};
  c.deltas = {DeltaParam(1, 2)};
  c.trials = 400;
  c.master_seed = 5;
  const auto r = run_lower_tail(c);
  const auto& f4 = row(r, "event_frequency", 4);
  const auto& f8 = row(r, "event_frequency", 8);
  EXPECT_NEAR(f4.bound_or_prediction, 0.15092825124758389, 1e-13);
  EXPECT_LT(f8.bound_or_prediction, f4.bound_or_prediction);
  EXPECT_EQ(f4.pass, Verdict::pass);
  EXPECT_EQ(f8.pass, Verdict::pass);
  EXPECT_TRUE(r.passed());
}

TEST(LowerTail, LebesgueFixtureAlwaysHitsTheEvent) {
  auto c = config(ExperimentKind::lower_tail);
  c.trials = 1;
  c.measure_factory = lebesgue_factory(1);
  c.measure_label = "lebesgue";
  const auto r = run_lower_tail(c);
  EXPECT_EQ(row(r, "event_frequency").value, 1.0);
  EXPECT_EQ(row(r, "mean_lower_exponent").value, 1.0);
}

TEST(Expectation, RootIsExactlyOne) {
  auto c = config(ExperimentKind::expectation);
  c.trials = 50;
  const auto& r = row(run_expectation(c), "mean_mass");
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.sd, 0.0);
  EXPECT_EQ(r.pass, Verdict::pass);
}

TEST(Expectation, MeanMatchesLebesgueVolume) {
  auto c = config(ExperimentKind::expectation);
  c.trials = 10000;
  c.master_seed = 1;
  c.target = NodePath(1, {1, 0, 1});
  const auto& r1 = row(run_expectation(c), "mean_mass");
  EXPECT_EQ(r1.bound_or_prediction, 0.125);
  EXPECT_EQ(r1.pass, Verdict::pass);

  c.d = 2;
  c.target = NodePath(2, {3, 0});
  const auto& r2 = row(run_expectation(c), "mean_mass");
  EXPECT_EQ(r2.bound_or_prediction, 0.0625);
  EXPECT_EQ(r2.pass, Verdict::pass);

  c.target = NodePath(1, {0});
  EXPECT_THROW(run_expectation(c), DomainError);
}

TEST(Marginal, KsAgainstBeta) {
  for (int d = 1; d <= 2; ++d) {
    auto c = config(ExperimentKind::marginal);
    c.d = d;
    c.trials = 20000;
    c.master_seed = 9;
    const auto& r = row(run_marginal(c), "ks_distance");
    EXPECT_EQ(r.pass, Verdict::pass) << r.value;
  }
}

TEST(Marginal, SingleTrialIsNotEvaluated) {
  auto c = config(ExperimentKind::marginal);
  c.trials = 1;
  const auto& r = row(run_marginal(c), "ks_distance");
  EXPECT_EQ(r.pass, Verdict::not_evaluated);
  EXPECT_GE(r.value, 0.5);  // a single point is at least half a step from a continuous CDF
}

TEST(ProfileTrend, RandomMeasuresRise) {
  auto c = config(ExperimentKind::profile_trend);
  c.ms = {6};
  c.deltas = {DeltaParam(1, 1), DeltaParam(1, 2), DeltaParam(1, 3)};
  c.trials = 100;
  c.master_seed = 2;
  const auto r = run_profile_trend(c);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_LT(r.rows[0].value, r.rows[1].value);
  EXPECT_LT(r.rows[1].value, r.rows[2].value);
  EXPECT_EQ(row(r, "monotone_fraction").pass, Verdict::pass);
}

TEST(ProfileTrend, LebesgueIsFlat) {
  auto c = config(ExperimentKind::profile_trend);
  c.ms = {4};
  c.deltas = {DeltaParam(1, 1), DeltaParam(1, 2)};
  c.trials = 3;
  c.measure_factory = lebesgue_factory(1);
  const auto r = run_profile_trend(c);
  EXPECT_EQ(r.rows[0].value, 1.0);
  EXPECT_EQ(r.rows[1].value, 1.0);
  EXPECT_EQ(row(r, "monotone_fraction").value, 1.0);
  // flat means are not strictly increasing
  EXPECT_EQ(row(r, "monotone_fraction").pass, Verdict::fail);
}

TEST(ProfileTrend, SingleDeltaHasNoVerdict) {
  auto c = config(ExperimentKind::profile_trend);
  c.ms = {3};
  c.trials = 4;
  const auto r = run_profile_trend(c);
  EXPECT_EQ(row(r, "monotone_fraction").pass, Verdict::not_evaluated);
}

TEST(ProfileTrend, RejectsNonDecreasingDeltas) {
  auto c = config(ExperimentKind::profile_trend);
  c.deltas = {DeltaParam(1, 2), DeltaParam(1, 1)};
  EXPECT_THROW(run_profile_trend(c), DomainError);
  c.deltas = {DeltaParam(1, 2), DeltaParam(2, 4)};
  EXPECT_THROW(run_profile_trend(c), DomainError);
}

TEST(Report, CsvAndJsonRoundTrip) {
  auto c = config(ExperimentKind::upper_tail);
  c.ms = {2, 3};
  c.deltas = {DeltaParam(2, 5)};
  c.trials = 20;
  c.master_seed = 1234567890123ULL;
  auto r = run_upper_tail(c);
  // exercise non-finite values as well
  r.rows.front().sd = kInf;
  EXPECT_EQ(parse_report_csv(report_csv(r)).rows, r.rows);
  const auto back = parse_report_json(render_report(r, ReportFormat::json));
  EXPECT_EQ(back.rows, r.rows);
  EXPECT_EQ(back.config, r.config);
  EXPECT_EQ(back.config.at("seed"), 1234567890123ULL);
  EXPECT_EQ(back.config.at("statistic"), "finite-scale surrogate");
}

TEST(Report, CsvRowCountAndVersion) {
  auto c = config(ExperimentKind::upper_tail);
  c.ms = {2, 3, 4};
  c.deltas = {DeltaParam(2, 5)};
  c.trials = 5;
  const std::string csv = report_csv(run_upper_tail(c));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);
  EXPECT_NE(csv.find(",qadim-1.0\n"), std::string::npos);
}

TEST(Report, FilesAreByteIdenticalAcrossRuns) {
  auto c = config(ExperimentKind::lower_tail);
  c.N = 2;
  c.deltas = {DeltaParam(1, 2)};
  c.trials = 30;
  const auto dir = std::filesystem::temp_directory_path();
  for (auto fmt : {ReportFormat::csv, ReportFormat::json}) {
    const std::string a = (dir / "qadim_report_a").string(), b = (dir / "qadim_report_b").string();
    write_report(run_lower_tail(c), fmt, a);
    c.threads = 4;
    write_report(run_lower_tail(c), fmt, b);
    c.threads = 1;
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_FALSE(slurp(a).empty());
  }
}

TEST(Report, WriteFailureIsAnIoError) {
  auto c = config(ExperimentKind::expectation);
  c.trials = 2;
  EXPECT_THROW(write_report(run_expectation(c), ReportFormat::csv, "/nonexistent/dir/r.csv"), IoError);
}

TEST(Report, SeventeenSignificantDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(parse_double(format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(parse_double("inf"), kInf);
  EXPECT_THROW(parse_double("1.0x"), DomainError);
}
