#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "clperf/error.hpp"
#include "clperf/launchsample.hpp"
#include "oracle.hpp"

using namespace clperf;

TEST(SampleLsize, WarpMultiplesInRange) {
  DeviceProfile dev;
  Rng rng(1);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 5000; ++i) {
    const auto l = sample_lsize(dev, rng);
    EXPECT_EQ(l % 32, 0);
    EXPECT_GE(l, 32);
    EXPECT_LE(l, 1024);
    seen.insert(l);
  }
  EXPECT_EQ(seen.size(), 32u);
  DeviceProfile one{80, 32, 32, 40};
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(sample_lsize(one, s), 32);
}

TEST(SampleLsize, UniformChiSquare) {
  DeviceProfile dev;
  Rng rng(2024);
  std::map<std::int64_t, int> counts;
  const int draws = 32000;
  for (int i = 0; i < draws; ++i) counts[sample_lsize(dev, rng)]++;
  ASSERT_EQ(counts.size(), 32u);
  const double expected = draws / 32.0;
  double chi2 = 0;
  for (const auto& [l, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 31 degrees of freedom, upper 0.1% point.
  EXPECT_LT(chi2, 61.1);
}

TEST(ClassifyRegime, Boundaries) {
  DeviceProfile dev{80, 32, 1024, 40};
  EXPECT_EQ(classify_regime(40, dev), Regime::Idle);
  EXPECT_EQ(classify_regime(79, dev), Regime::Idle);
  EXPECT_EQ(classify_regime(80, dev), Regime::Under);
  EXPECT_EQ(classify_regime(3199, dev), Regime::Under);
  EXPECT_EQ(classify_regime(3200, dev), Regime::Full);
  DeviceProfile k80{80, 32, 1024, 80};
  EXPECT_EQ(classify_regime(3200, k80), Regime::Under);
  EXPECT_EQ(classify_regime(6400, k80), Regime::Full);
}

TEST(StratumCounts, LargestRemainder) {
  for (std::int64_t total : {20, 21, 22, 23, 37, 100, 199, 200, 2000, 2001, 9999}) {
    const auto sc = stratum_counts(total);
    const auto want = oracle::apportion(total, {25, 60, 15});
    EXPECT_EQ(sc.idle, want[0]) << total;
    EXPECT_EQ(sc.under, want[1]) << total;
    EXPECT_EQ(sc.full, want[2]) << total;
    EXPECT_EQ(sc.idle + sc.under + sc.full, total);
  }
  const auto a = stratum_counts(100);
  EXPECT_EQ(a.idle, 25);
  EXPECT_EQ(a.under, 60);
  EXPECT_EQ(a.full, 15);
  const auto b = stratum_counts(20);
  EXPECT_EQ(b.idle, 5);
  EXPECT_EQ(b.under, 12);
  EXPECT_EQ(b.full, 3);
}

TEST(SampleWorkgroupCounts, StrataAndBounds) {
  DeviceProfile dev{80, 32, 1024, 40};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto n = sample_workgroup_counts(dev, 100, seed);
    ASSERT_EQ(n.size(), 100u);
    std::map<Regime, int> per;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const Regime want = i < 25 ? Regime::Idle : i < 85 ? Regime::Under : Regime::Full;
      EXPECT_EQ(classify_regime(n[i], dev), want) << n[i];
      EXPECT_GE(n[i], 1);
      EXPECT_LE(n[i], max_workgroups(dev));
      per[classify_regime(n[i], dev)]++;
      if (i < 25) EXPECT_LT(n[i], 80);
    }
    EXPECT_EQ(per[Regime::Idle], 25);
    EXPECT_EQ(per[Regime::Under], 60);
    EXPECT_EQ(per[Regime::Full], 15);
  }
  EXPECT_EQ(sample_workgroup_counts(dev, 50, 9), sample_workgroup_counts(dev, 50, 9));
  EXPECT_THROW(sample_workgroup_counts(dev, 19, 1), Error);
}

TEST(SampleWorkgroupCounts, LogUniformWithinUnderStratum) {
  // Half of a log-uniform draw on [80, 3200) falls below the geometric midpoint.
  DeviceProfile dev{80, 32, 1024, 40};
  const auto n = sample_workgroup_counts(dev, 20000, 5);
  const auto sc = stratum_counts(20000);
  const double mid = std::sqrt(80.0 * 3200.0);
  int below = 0;
  for (std::int64_t i = sc.idle; i < sc.idle + sc.under; ++i) below += n[static_cast<std::size_t>(i)] < mid;
  EXPECT_NEAR(static_cast<double>(below) / static_cast<double>(sc.under), 0.5, 0.02);
}

TEST(DeriveGsize, Eq) {
  EXPECT_EQ(derive_gsize(50, 128), 6400);
  EXPECT_EQ(derive_gsize(1, 32), 32);
  EXPECT_EQ(derive_gsize(12345, 96) / 96, 12345);
  EXPECT_THROW(derive_gsize(std::int64_t{1} << 40, 1024), Error);
  EXPECT_THROW(derive_gsize(0, 32), Error);
}

TEST(ExecSettings, RandomDrawsSatisfyInvariants) {
  DeviceProfile dev;
  Rng rng(77);
  for (int i = 0; i < 10000; ++i) {
    const auto l = sample_lsize(dev, rng);
    const auto n = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_workgroups(dev))));
    const auto e = make_exec_setting(n, l, dev);
    ASSERT_EQ(e.gsize, e.n_wg * e.lsize);
    ASSERT_EQ(e.gsize % e.lsize, 0);
    ASSERT_EQ(e.lsize % dev.warp_size, 0);
    ASSERT_EQ(e.regime, classify_regime(n, dev));
  }
}

TEST(DeviceProfile, Validate) {
  EXPECT_NO_THROW(DeviceProfile{}.validate());
  EXPECT_THROW((DeviceProfile{80, 32, 1000, 40}.validate()), Error);
  EXPECT_THROW((DeviceProfile{80, 64, 32, 40}.validate()), Error);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> s = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile_sorted(s, 1.0), 4);
}

TEST(IqrGaps, ClusterWithFarOutliers) {
  std::vector<double> t;
  for (int i = 0; i < 100; ++i) t.push_back(1.0 + 9.0 * i / 99.0);
  for (int i = 0; i < 5; ++i) t.push_back(900.0 + 25.0 * i);
  const auto gaps = iqr_missing_ranges(t);
  ASSERT_EQ(gaps.size(), 1u);
  // The gap starts at the cluster and runs through the thin outlier band.
  std::size_t inside = 0;
  for (double x : t) inside += x > gaps[0].low && x < gaps[0].high;
  EXPECT_LT(static_cast<double>(inside), 0.05 * static_cast<double>(t.size()));
  EXPECT_GE(gaps[0].low, 10.0);
  EXPECT_LE(gaps[0].high, 1000.0);
  EXPECT_GT(std::log(gaps[0].high / gaps[0].low), 0.8 * std::log(900.0 / 10.0));
}

TEST(IqrGaps, BalancedInputsHaveNone) {
  std::vector<double> uniform, logu, constant(20, 5.0);
  for (int i = 0; i < 200; ++i) uniform.push_back(1.0 + i);
  for (int i = 0; i < 200; ++i) logu.push_back(std::pow(10.0, 3.0 * i / 199.0));
  EXPECT_TRUE(iqr_missing_ranges(uniform).empty());
  EXPECT_TRUE(iqr_missing_ranges(logu).empty());
  EXPECT_TRUE(iqr_missing_ranges(constant).empty());
}

TEST(IqrGaps, TooFewSamples) {
  try {
    iqr_missing_ranges({1, 2, 3, 4, 5, 6, 7});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
}

TEST(RefineSamples, HandLeastSquares) {
  const std::vector<TimedPoint> pts = {{80, 10}, {160, 20}};
  const auto [a, b] = fit_line(pts);
  EXPECT_DOUBLE_EQ(a, 0.125);
  EXPECT_NEAR(b, 0.0, 1e-12);
  EXPECT_EQ(refine_samples(pts, {{10, 20}}, 3, 12800), (std::vector<std::int64_t>{100, 120, 140}));
  EXPECT_TRUE(refine_samples(pts, {}, 3, 12800).empty());
}

TEST(RefineSamples, ClampedAndDeduplicated) {
  const std::vector<TimedPoint> pts = {{80, 10}, {160, 20}};
  const auto out = refine_samples(pts, {{0.001, 1e9}}, 5, 12800);
  for (auto n : out) {
    EXPECT_GE(n, 1);
    EXPECT_LE(n, 12800);
  }
  EXPECT_EQ(std::set<std::int64_t>(out.begin(), out.end()).size(), out.size());
  // Existing n_wg are not proposed again.
  EXPECT_TRUE(refine_samples(pts, {{9.9, 10.1}}, 1, 12800).empty());
}

TEST(RefineSamples, SingularFit) {
  EXPECT_THROW(refine_samples({{80, 10}, {80, 20}}, {{10, 20}}, 3, 12800), Error);
  EXPECT_THROW(refine_samples({{80, 20}, {160, 10}}, {{10, 20}}, 3, 12800), Error);
}
