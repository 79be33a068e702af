#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qadim/dimension.hpp"
#include "qadim/measures.hpp"

using namespace qadim;

namespace {

// Hides the homogeneous() hint so the full streaming walk runs.
class Opaque final : public MeasureTree {
 public:
  explicit Opaque(const MeasureTree& inner) : inner_(inner) {}
  int dim() const noexcept override { return inner_.dim(); }
  MeasureKind kind() const noexcept override { return inner_.kind(); }
  void edge_weights(std::span<const Digit> node, std::span<double> out) const override {
    inner_.edge_weights(node, out);
  }
  using MeasureTree::edge_weights;

 private:
  const MeasureTree& inner_;
};

ExplicitMeasure fixture(const char* json) { return parse_explicit_measure(nlohmann::json::parse(json)); }

void expect_matches_oracle(const MeasureTree& mu, int m, std::size_t level, bool multi = false) {
  const RatioPair s = ratio_stats(mu, m, level, {32, multi, 1});
  const RatioStatistic up = brute_force_oracle(mu, m, level, Side::upper, multi);
  const RatioStatistic lo = brute_force_oracle(mu, m, level, Side::lower, multi);
  if (std::isinf(up.log2_value)) {
    EXPECT_EQ(s.upper.log2_value, up.log2_value);
  } else {
    EXPECT_NEAR(s.upper.log2_value, up.log2_value, 1e-12) << "m=" << m << " L=" << level;
  }
  if (std::isinf(lo.log2_value)) {
    EXPECT_EQ(s.lower.log2_value, lo.log2_value);
  } else {
    EXPECT_NEAR(s.lower.log2_value, lo.log2_value, 1e-12) << "m=" << m << " L=" << level;
  }
}

}  // namespace

TEST(DeltaParam, ParsesExactRationals) {
  EXPECT_EQ(DeltaParam::parse("2/5"), DeltaParam(2, 5));
  EXPECT_EQ(DeltaParam::parse("3"), DeltaParam(3, 1));
  EXPECT_THROW(DeltaParam::parse("0/1"), DomainError);
  EXPECT_THROW(DeltaParam::parse("1/0"), DomainError);
  EXPECT_THROW(DeltaParam::parse("x"), DomainError);
  EXPECT_THROW(DeltaParam::parse("1/2/3"), DomainError);
  try {
    DeltaParam::parse("0.4");
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("exact"), std::string::npos);
  }
}

TEST(LevelFromDelta, Examples) {
  EXPECT_EQ(level_from_delta(2, DeltaParam(2, 1)), 1u);
  EXPECT_EQ(level_from_delta(10, DeltaParam(2, 5)), 25u);
  EXPECT_EQ(level_from_delta(7, DeltaParam(3, 1)), 2u);
  // 10 / 0.1 in binary floating point is 99.999...; the rational is exact
  EXPECT_EQ(level_from_delta(10, DeltaParam(1, 10)), 100u);
  EXPECT_THROW(level_from_delta(0, DeltaParam(1, 1)), DomainError);
}

TEST(RatioStats, LebesgueIsExactlyMd) {
  for (int d = 1; d <= 2; ++d) {
    const auto leb = make_product_measure(ProductMeasureSpec::lebesgue(d));
    const Opaque walked(leb);
    for (int m = 1; m <= 4; ++m) {
      for (std::size_t level = 0; level <= 3; ++level) {
        for (const MeasureTree* mu : {static_cast<const MeasureTree*>(&leb), static_cast<const MeasureTree*>(&walked)}) {
          const RatioPair s = ratio_stats(*mu, m, level);
          EXPECT_EQ(s.upper.log2_value, m * d);
          EXPECT_EQ(s.lower.log2_value, m * d);
        }
      }
    }
  }
}

TEST(RatioStats, BernoulliClosedFormAtEveryLevel) {
  const auto b = make_product_measure(ProductMeasureSpec::bernoulli(0.3));
  const Opaque walked(b);
  for (std::size_t level = 1; level <= 4; ++level) {
    // -log2(max(0.3 * 0.7^2, 0.7 * 0.3^2)) = -log2(0.147), mpmath
    EXPECT_NEAR(upper_ratio_stat(walked, 3, level).log2_value, 2.766111939825722655, 1e-12);
    EXPECT_NEAR(lower_ratio_stat(walked, 3, level).log2_value, 2.766111939825722655, 1e-12);
    EXPECT_EQ(upper_ratio_stat(b, 3, level).log2_value, upper_ratio_stat(walked, 3, level).log2_value);
  }
  expect_matches_oracle(b, 3, 2);
}

TEST(RatioStats, HomogeneousShortcutMatchesFullWalk) {
  for (const auto& spec : {ProductMeasureSpec::bernoulli(0.2), ProductMeasureSpec{1, {0.0, 1.0}},
                           ProductMeasureSpec{2, {0.1, 0.2, 0.3, 0.4}}, ProductMeasureSpec{2, {0.0, 0.5, 0.5, 0.0}}}) {
    const auto mu = make_product_measure(spec);
    const Opaque walked(mu);
    for (int m = 1; m <= 3; ++m) {
      for (std::size_t level = 0; level <= 3; ++level) {
        for (bool multi : {false, true}) {
          const RatioPair fast = ratio_stats(mu, m, level, {32, multi, 1});
          const RatioPair slow = ratio_stats(walked, m, level, {32, multi, 1});
          EXPECT_EQ(fast.upper.log2_value, slow.upper.log2_value);
          EXPECT_EQ(fast.lower.log2_value, slow.lower.log2_value);
          EXPECT_EQ(fast.upper.witness, slow.upper.witness);
          EXPECT_EQ(fast.lower.witness, slow.lower.witness);
        }
      }
    }
  }
}

TEST(RatioStats, RandomMeasureMatchesOracle) {
  const auto mu = make_random_measure(1, 2024);
  expect_matches_oracle(mu, 2, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (int d = 1; d <= 3; ++d) {
      const auto r = make_random_measure(d, seed);
      for (int m = 1; m <= 3; ++m) {
        for (std::size_t level = 0; static_cast<std::size_t>(d) * (level + static_cast<std::size_t>(m)) <= 9; ++level) {
          expect_matches_oracle(r, m, level);
          expect_matches_oracle(r, m, level, true);
        }
      }
    }
  }
}

TEST(RatioStats, WitnessIsTheAttainingNode) {
  const auto mu = make_random_measure(1, 8);
  const RatioPair s = ratio_stats(mu, 3, 5);
  const auto value_at = [&](const NodePath& omega) {
    double best = kInf;
    for (const auto& child : central_children(omega, 3)) {
      best = std::min(best, (mu.mass(omega) / mu.mass(child)).log2_value());
    }
    return best;
  };
  EXPECT_EQ(s.upper.witness.level(), 5u);
  EXPECT_NEAR(value_at(s.upper.witness), s.upper.log2_value, 1e-12);
  EXPECT_NEAR(value_at(s.lower.witness), s.lower.log2_value, 1e-12);
  const auto oracle = brute_force_oracle(mu, 3, 5, Side::upper);
  EXPECT_EQ(oracle.witness, s.upper.witness);
}

TEST(RatioStats, TiesGoToTheFirstNodeInDfsOrder) {
  const auto lebesgue = make_product_measure(ProductMeasureSpec::lebesgue(2));
  const Opaque walked(lebesgue);
  const RatioPair s = ratio_stats(walked, 2, 3, {32, false, 4});
  EXPECT_EQ(s.upper.witness, NodePath(2, {0, 0, 0}));
  EXPECT_EQ(s.lower.witness, NodePath(2, {0, 0, 0}));
  const RatioPair multi = ratio_stats(walked, 2, 3, {32, true, 4});
  EXPECT_EQ(multi.upper.witness, NodePath(2, {0}));
}

TEST(RatioStats, ZeroMassCentralChildContributesInfinity) {
  // node "0" has weights (1, 0): its central child 0-1-0 has zero mass
  const auto mu = fixture(R"({"d": 1, "nodes": {"": [0.5, 0.5], "0": [1.0, 0.0]}})");
  const RatioPair s = ratio_stats(mu, 2, 1);
  EXPECT_DOUBLE_EQ(s.lower.log2_value, 1.0);  // omega = 0: min(0 + 1, inf)
  EXPECT_DOUBLE_EQ(s.upper.log2_value, 2.0);  // omega = 1: uniform below
  EXPECT_EQ(s.lower.witness, NodePath(1, {0}));
  expect_matches_oracle(mu, 2, 1);
}

TEST(RatioStats, AllCentralChildrenZeroGivesInfinity) {
  const auto mu = fixture(R"({"d": 1, "nodes": {"": [0.5, 0.5], "0": [1.0, 0.0], "1": [0.0, 1.0]}})");
  const RatioPair s = ratio_stats(mu, 2, 0);
  EXPECT_EQ(s.upper.log2_value, kInf);
  expect_matches_oracle(mu, 2, 0);
  expect_matches_oracle(mu, 2, 1);
}

TEST(RatioStats, ZeroMassNodesAreSkipped) {
  const auto mu = fixture(R"({"d": 1, "nodes": {"": [1.0, 0.0], "0": [0.25, 0.75]}})");
  const RatioPair s = ratio_stats(mu, 1, 1);
  // only omega = 0 has mass; its children carry 0.25 and 0.75
  EXPECT_DOUBLE_EQ(s.upper.log2_value, -std::log2(0.75));
  EXPECT_DOUBLE_EQ(s.lower.log2_value, -std::log2(0.75));
  EXPECT_EQ(s.upper.witness, NodePath(1, {0}));
  expect_matches_oracle(mu, 1, 1);
  expect_matches_oracle(mu, 2, 2);
}

TEST(RatioStats, LowerNeverExceedsUpper) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 40; ++t) {
    const int d = 1 + static_cast<int>(rng() % 2);
    const auto mu = make_random_measure(d, rng());
    const int m = 1 + static_cast<int>(rng() % 3);
    const std::size_t level = rng() % (d == 1 ? 6 : 3);
    const RatioPair s = ratio_stats(mu, m, level, {32, (t % 2) == 1, 1});
    EXPECT_LE(s.lower.log2_value, s.upper.log2_value);
    EXPECT_GE(s.lower.log2_value, 0.0);
  }
}

TEST(RatioStats, MultiLevelIsMonotoneInLevel) {
  const auto mu = make_random_measure(1, 5);
  double prev_upper = -kInf, prev_lower = kInf;
  for (std::size_t level = 1; level <= 9; ++level) {
    const RatioPair s = ratio_stats(mu, 3, level, {32, true, 1});
    EXPECT_GE(s.upper.log2_value, prev_upper);
    EXPECT_LE(s.lower.log2_value, prev_lower);
    prev_upper = s.upper.log2_value;
    prev_lower = s.lower.log2_value;
  }
}

TEST(RatioStats, ThreadCountDoesNotChangeResults) {
  for (int d = 1; d <= 2; ++d) {
    const auto mu = make_random_measure(d, 77);
    for (bool multi : {false, true}) {
      const std::size_t level = d == 1 ? 10 : 5;
      const RatioPair one = ratio_stats(mu, 3, level, {32, multi, 1});
      for (unsigned threads : {2u, 3u, 8u}) {
        const RatioPair many = ratio_stats(mu, 3, level, {32, multi, threads});
        EXPECT_EQ(one.upper.log2_value, many.upper.log2_value);
        EXPECT_EQ(one.lower.log2_value, many.lower.log2_value);
        EXPECT_EQ(one.upper.witness, many.upper.witness);
        EXPECT_EQ(one.lower.witness, many.lower.witness);
      }
    }
  }
}

TEST(RatioStats, DepthBudget) {
  const auto mu = make_random_measure(1, 1);
  EXPECT_THROW(ratio_stats(mu, 4, 30), DomainError);
  EXPECT_THROW(ratio_stats(mu, 2, 5, {6, false, 1}), DomainError);
  EXPECT_NO_THROW(ratio_stats(mu, 2, 4, {6, false, 1}));
  EXPECT_THROW(ratio_stats(mu, 0, 1), DomainError);
}

TEST(BruteForceOracle, SizeBound) {
  const auto mu = make_product_measure(ProductMeasureSpec::lebesgue(2));
  EXPECT_THROW(brute_force_oracle(mu, 2, 10, Side::upper), DomainError);
  EXPECT_EQ(brute_force_oracle(mu, 2, 3, Side::upper).log2_value, 4.0);
}

TEST(BruteForceOracle, BernoulliTwoTenths) {
  const auto b = make_product_measure(ProductMeasureSpec::bernoulli(0.2));
  const auto s = brute_force_oracle(b, 2, 2, Side::upper);
  EXPECT_NEAR(std::exp2(s.log2_value), 6.25, 1e-12);
  EXPECT_NEAR(s.log2_value, 2.643856189774724636, 1e-12);
}

TEST(QuasiInverse, PowerClosedForm) {
  for (int m = 1; m <= 20; ++m) {
    const auto x = quasi_inverse(PhiSpec::power(DeltaParam(2, 1)), std::ldexp(1.0, m));
    ASSERT_TRUE(x);
    EXPECT_NEAR(*x, std::exp2(-m / 2.0), 1e-15);
  }
}

TEST(QuasiInverse, ConstantIsVacuousAboveTheConstant) {
  EXPECT_FALSE(quasi_inverse(PhiSpec::constant(2.0), 8.0));
  EXPECT_EQ(quasi_inverse(PhiSpec::constant(8.0), 8.0), 1.0);
}

TEST(QuasiInverse, TabulatedBisection) {
  std::vector<double> xs, ps;
  for (int k = 40; k >= 0; --k) {
    xs.push_back(std::ldexp(1.0, -k));
    ps.push_back(std::pow(xs.back(), -0.5));
  }
  const auto phi = PhiSpec::tabulated(xs, ps);
  const auto x = quasi_inverse(phi, 4.0);
  ASSERT_TRUE(x);
  EXPECT_NEAR(*x, 1.0 / 16.0, 1e-10);
  // between sample points the log-log interpolation is still exact for a power law
  EXPECT_NEAR(*quasi_inverse(phi, 3.0), 1.0 / 9.0, 1e-10);
  EXPECT_EQ(level_from_phi(phi, 2, 30), (LevelChoice{4, false}));
  EXPECT_FALSE(quasi_inverse(phi, std::ldexp(1.0, 30)));
}

TEST(PhiSpec, RejectsIncreasingTables) {
  EXPECT_THROW(PhiSpec::tabulated({0.1, 0.2}, {1.0, 2.0}), DomainError);
  EXPECT_THROW(PhiSpec::tabulated({0.2, 0.1}, {2.0, 1.0}), DomainError);
  EXPECT_THROW(PhiSpec::tabulated({0.1, 1.5}, {2.0, 1.0}), DomainError);
  EXPECT_THROW(PhiSpec::constant(0.0), DomainError);
  EXPECT_THROW(PhiSpec::parse("cubic:3"), DomainError);
  EXPECT_THROW(PhiSpec::parse("const:abc"), DomainError);
  EXPECT_TRUE(PhiSpec::parse("const:2").is_constant());
  EXPECT_TRUE(PhiSpec::parse("power:2/5").is_power());
}

TEST(LevelFromPhi, PowerAgreesWithDeltaExactly) {
  for (std::uint64_t p = 1; p <= 12; ++p) {
    for (std::uint64_t q = 1; q <= 12; ++q) {
      for (int m = 1; m <= 64; ++m) {
        const DeltaParam dl(p, q);
        EXPECT_EQ(level_from_phi(PhiSpec::power(dl), m, 1000), (LevelChoice{level_from_delta(m, dl), false}));
      }
    }
  }
}

TEST(LevelFromPhi, ConstantIsCapped) {
  for (int m = 2; m <= 10; ++m) {
    EXPECT_EQ(level_from_phi(PhiSpec::constant(2.0), m, 17), (LevelChoice{17, true}));
  }
}

TEST(EstimateProfile, LebesgueExponentsEqualDimension) {
  for (int d = 1; d <= 2; ++d) {
    const auto leb = make_product_measure(ProductMeasureSpec::lebesgue(d));
    std::vector<ScheduleEntry> schedule;
    for (int m = 2; m <= 8; ++m) {
      schedule.push_back({m, DeltaParam(1, 1)});
      schedule.push_back({m, DeltaParam(1, 2)});
      schedule.push_back({m, PhiSpec::constant(2.0)});
    }
    const auto profile = estimate_profile(leb, schedule, 6);
    ASSERT_EQ(profile.rows.size(), schedule.size());
    for (const auto& r : profile.rows) {
      EXPECT_NEAR(r.upper_exponent, d, 1e-9);
      EXPECT_NEAR(r.lower_exponent, d, 1e-9);
    }
    EXPECT_EQ(profile.rows[1].level, 4u);
    EXPECT_TRUE(profile.rows[2].capped);
    EXPECT_EQ(profile.rows[2].scale_tag, "phi=const:2");
  }
}

TEST(EstimateProfile, BernoulliUpperExponentFormula) {
  const double p = 0.3, q = 0.7;
  const auto b = make_product_measure(ProductMeasureSpec::bernoulli(p));
  const auto profile = estimate_profile(b, {{4, DeltaParam(1, 1)}, {8, DeltaParam(1, 1)}, {12, DeltaParam(1, 1)}}, 20);
  double prev = kInf;
  for (const auto& r : profile.rows) {
    const double expected = -std::log2(p * q * std::pow(std::max(p, q), r.m - 2)) / r.m;
    EXPECT_NEAR(r.upper_exponent, expected, 1e-12);
    EXPECT_LT(r.upper_exponent, prev);
    EXPECT_GT(r.upper_exponent, -std::log2(0.7));
    prev = r.upper_exponent;
  }
  const Opaque walked(b);
  EXPECT_NEAR(brute_force_oracle(walked, 4, 4, Side::upper).exponent(), profile.rows[0].upper_exponent, 1e-12);
}

TEST(EstimateProfile, SmallerDeltaUsuallyRaisesTheExponent) {
  int raised = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto mu = make_random_measure(1, s);
    const auto profile = estimate_profile(mu, {{6, DeltaParam(1, 1)}, {6, DeltaParam(1, 2)}}, 20);
    if (profile.rows[1].upper_exponent >= profile.rows[0].upper_exponent) ++raised;
  }
  EXPECT_GE(raised, 95);
}

TEST(EstimateProfile, StableUnderRenormalisationNoise) {
  const auto mu = make_random_measure(1, 123);
  const auto table = tabulate_measure(mu, 12);
  auto noisy = table;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> eps(-1e-15, 1e-15);
  for (auto& [key, w] : noisy["nodes"].items()) {
    for (auto& x : w) x = x.get<double>() * (1.0 + eps(rng));
  }
  const auto a = parse_explicit_measure(table);
  const auto b = parse_explicit_measure(noisy);
  const std::vector<ScheduleEntry> schedule{{2, DeltaParam(1, 2)}, {3, DeltaParam(1, 1)}, {4, DeltaParam(1, 2)}};
  const auto pa = estimate_profile(a, schedule, 10);
  const auto pb = estimate_profile(b, schedule, 10);
  for (std::size_t i = 0; i < pa.rows.size(); ++i) {
    EXPECT_NEAR(pa.rows[i].upper_exponent, pb.rows[i].upper_exponent, 1e-9);
    EXPECT_NEAR(pa.rows[i].lower_exponent, pb.rows[i].lower_exponent, 1e-9);
  }
}
