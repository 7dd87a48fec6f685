#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "clperf/rng.hpp"

namespace clperf {

enum class Regime { Idle, Under, Full };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view s);

struct DeviceProfile {
  std::int64_t n_sm = 80;
  std::int64_t warp_size = 32;
  std::int64_t max_local_size = 1024;
  std::int64_t full_util_k = 40;

  /// Throws Error(ConfigError) when the invariants do not hold.
  void validate() const;
};

struct ExecSetting {
  std::int64_t lsize = 0;
  std::int64_t n_wg = 0;
  std::int64_t gsize = 0;
  Regime regime = Regime::Idle;

  bool operator==(const ExecSetting&) const = default;
};

/// Uniform over the multiples of warp_size in [warp_size, max_local_size].
std::int64_t sample_lsize(const DeviceProfile& dev, Rng& rng);
std::int64_t sample_lsize(const DeviceProfile& dev, std::uint64_t seed);

Regime classify_regime(std::int64_t n_wg, const DeviceProfile& dev);

struct StratumCounts {
  std::int64_t idle = 0;
  std::int64_t under = 0;
  std::int64_t full = 0;
};

/// Largest-remainder split of `total` at 25:60:15; ties go to idle, then under, then full.
StratumCounts stratum_counts(std::int64_t total);

/// Log-uniform n_wg per stratum: [1, n_sm), [n_sm, k*n_sm), [k*n_sm, 4*k*n_sm].
/// Idle samples come first, then under, then full. Throws Error(InvalidArgument) when total < 20.
std::vector<std::int64_t> sample_workgroup_counts(const DeviceProfile& dev, std::int64_t total, std::uint64_t seed);

/// Upper bound for every sampled or refined n_wg.
inline std::int64_t max_workgroups(const DeviceProfile& dev) { return 4 * dev.full_util_k * dev.n_sm; }

/// n_wg * lsize. Throws Error(Overflow) when the product exceeds `limit`.
std::int64_t derive_gsize(std::int64_t n_wg, std::int64_t lsize,
                          std::int64_t limit = std::int64_t{1} << 32);

ExecSetting make_exec_setting(std::int64_t n_wg, std::int64_t lsize, const DeviceProfile& dev = {});

/// Linear-interpolated quantile of sorted data (the "type 7" definition).
double quantile_sorted(const std::vector<double>& sorted, double p);

struct GapOptions {
  int bins = 20;                 // log-time histogram resolution
  double max_fraction = 0.05;    // a gap holds fewer than this share of the samples
  double min_log_span = 0.20;    // and spans more than this share of the log-time range
};

struct TimeGap {
  double low = 0;
  double high = 0;

  bool operator==(const TimeGap&) const = default;
};

/// Sparse sub-ranges of [min, max] outside the Tukey band [Q1 - 1.5 IQR, Q3 + 1.5 IQR].
/// Throws Error(TooFewSamples) for fewer than 8 times.
std::vector<TimeGap> iqr_missing_ranges(const std::vector<double>& times_us, const GapOptions& opts = {});

struct TimedPoint {
  std::int64_t n_wg = 0;
  double time_us = 0;
};

/// Least-squares time = a * n_wg + b, inverted at per_gap evenly spaced times inside each gap.
/// Results are clamped to [1, max_n_wg] and exclude n_wg values already present.
/// Throws Error(SingularFit) when all n_wg are equal or a <= 0.
std::vector<std::int64_t> refine_samples(const std::vector<TimedPoint>& points, const std::vector<TimeGap>& gaps,
                                         int per_gap, std::int64_t max_n_wg);

/// Least-squares line through the points, {a, b}. Throws Error(SingularFit).
std::pair<double, double> fit_line(const std::vector<TimedPoint>& points);

}  // namespace clperf
