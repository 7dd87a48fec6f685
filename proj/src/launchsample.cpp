#include "clperf/launchsample.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "clperf/error.hpp"

namespace clperf {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Idle: return "idle";
    case Regime::Under: return "under";
    case Regime::Full: return "full";
  }
  return "idle";
}

Regime regime_from_string(std::string_view s) {
  if (s == "idle") return Regime::Idle;
  if (s == "under") return Regime::Under;
  if (s == "full") return Regime::Full;
  throw Error(ErrorCode::InvalidArgument, "unknown regime '" + std::string(s) + "'");
}

void DeviceProfile::validate() const {
  if (n_sm < 2) throw Error(ErrorCode::ConfigError, "n_sm must be at least 2");
  if (warp_size < 1) throw Error(ErrorCode::ConfigError, "warp_size must be positive");
  if (full_util_k < 2) throw Error(ErrorCode::ConfigError, "full_util_k must be at least 2");
  if (max_local_size < warp_size || max_local_size % warp_size != 0) {
    throw Error(ErrorCode::ConfigError, "max_local_size must be a multiple of warp_size and at least warp_size");
  }
}

std::int64_t sample_lsize(const DeviceProfile& dev, Rng& rng) {
  const std::int64_t choices = dev.max_local_size / dev.warp_size;
  return dev.warp_size * (1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(choices))));
}

std::int64_t sample_lsize(const DeviceProfile& dev, std::uint64_t seed) {
  Rng rng(seed);
  return sample_lsize(dev, rng);
}

Regime classify_regime(std::int64_t n_wg, const DeviceProfile& dev) {
  if (n_wg < dev.n_sm) return Regime::Idle;
  if (n_wg >= dev.full_util_k * dev.n_sm) return Regime::Full;
  return Regime::Under;
}

StratumCounts stratum_counts(std::int64_t total) {
  constexpr std::int64_t weights[3] = {25, 60, 15};
  std::int64_t counts[3];
  std::int64_t rem[3];
  std::int64_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = total * weights[i] / 100;
    rem[i] = total * weights[i] % 100;
    assigned += counts[i];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::int64_t k = 0; k < total - assigned; ++k) ++counts[order[k]];
  return {counts[0], counts[1], counts[2]};
}

namespace {

// Log-uniform integer in [lo, hi_excl).
std::int64_t log_uniform(Rng& rng, std::int64_t lo, std::int64_t hi_excl) {
  const double a = std::log(static_cast<double>(lo));
  const double b = std::log(static_cast<double>(hi_excl));
  const double x = std::exp(a + rng.uniform() * (b - a));
  return std::clamp(static_cast<std::int64_t>(std::floor(x)), lo, hi_excl - 1);
}

}  // namespace

std::vector<std::int64_t> sample_workgroup_counts(const DeviceProfile& dev, std::int64_t total, std::uint64_t seed) {
  if (total < 20) throw Error(ErrorCode::InvalidArgument, "total must be at least 20");
  dev.validate();
  const StratumCounts sc = stratum_counts(total);
  Rng rng(seed);
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(total));
  const std::int64_t k_sm = dev.full_util_k * dev.n_sm;
  for (std::int64_t i = 0; i < sc.idle; ++i) out.push_back(log_uniform(rng, 1, dev.n_sm));
  for (std::int64_t i = 0; i < sc.under; ++i) out.push_back(log_uniform(rng, dev.n_sm, k_sm));
  for (std::int64_t i = 0; i < sc.full; ++i) out.push_back(log_uniform(rng, k_sm, max_workgroups(dev) + 1));
  return out;
}

std::int64_t derive_gsize(std::int64_t n_wg, std::int64_t lsize, std::int64_t limit) {
  if (n_wg <= 0 || lsize <= 0) throw Error(ErrorCode::InvalidArgument, "n_wg and lsize must be positive");
  std::int64_t g;
  if (__builtin_mul_overflow(n_wg, lsize, &g) || g > limit) {
    throw Error(ErrorCode::Overflow, "gsize " + std::to_string(n_wg) + " x " + std::to_string(lsize) +
                                         " exceeds the size limit");
  }
  return g;
}

ExecSetting make_exec_setting(std::int64_t n_wg, std::int64_t lsize, const DeviceProfile& dev) {
  return {lsize, n_wg, derive_gsize(n_wg, lsize), classify_regime(n_wg, dev)};
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::TooFewSamples, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<TimeGap> iqr_missing_ranges(const std::vector<double>& times_us, const GapOptions& opts) {
  if (times_us.size() < 8) throw Error(ErrorCode::TooFewSamples, "need at least 8 times");
  for (double t : times_us) {
    if (!(t > 0)) throw Error(ErrorCode::NonPositiveTime, "times must be positive");
  }
  std::vector<double> s = times_us;
  std::sort(s.begin(), s.end());
  const double q1 = quantile_sorted(s, 0.25);
  const double q3 = quantile_sorted(s, 0.75);
  const double band_lo = q1 - 1.5 * (q3 - q1);
  const double band_hi = q3 + 1.5 * (q3 - q1);

  const double lmin = std::log(s.front());
  const double lmax = std::log(s.back());
  const double range = lmax - lmin;
  if (range <= 0) return {};
  const int nb = opts.bins;
  const double w = range / nb;
  auto edge = [&](int j) { return j == nb ? lmax : lmin + w * j; };

  std::vector<double> logs(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) logs[i] = std::log(s[i]);
  // Samples with log time in [edge(a), edge(b)); the last bin is closed.
  auto count_in = [&](int a, int b) {
    const auto lo = std::lower_bound(logs.begin(), logs.end(), edge(a));
    const auto hi = b == nb ? logs.end() : std::lower_bound(logs.begin(), logs.end(), edge(b));
    return static_cast<std::size_t>(hi - lo);
  };
  std::vector<bool> outside(static_cast<std::size_t>(nb));
  for (int j = 0; j < nb; ++j) {
    const double t_lo = std::exp(edge(j));
    const double t_hi = std::exp(edge(j + 1));
    outside[static_cast<std::size_t>(j)] = t_lo > band_hi || t_hi < band_lo;
  }

  struct Window {
    int a, b;  // bins [a, b)
  };
  std::vector<Window> chosen;
  const double max_count = opts.max_fraction * static_cast<double>(s.size());
  int j = 0;
  while (j < nb) {
    if (!outside[static_cast<std::size_t>(j)]) {
      ++j;
      continue;
    }
    int run_end = j;
    while (run_end < nb && outside[static_cast<std::size_t>(run_end)]) ++run_end;
    // Widest qualifying windows inside the run, greedily, without overlap.
    std::vector<bool> used(static_cast<std::size_t>(nb), false);
    for (int len = run_end - j; len >= 1; --len) {
      if (w * len <= opts.min_log_span * range) break;
      for (int a = j; a + len <= run_end; ++a) {
        const int b = a + len;
        bool free = true;
        for (int k = a; k < b; ++k) free = free && !used[static_cast<std::size_t>(k)];
        if (!free) continue;
        if (static_cast<double>(count_in(a, b)) >= max_count) continue;
        for (int k = a; k < b; ++k) used[static_cast<std::size_t>(k)] = true;
        chosen.push_back({a, b});
      }
    }
    j = run_end;
  }
  std::sort(chosen.begin(), chosen.end(), [](const Window& x, const Window& y) { return x.a < y.a; });

  std::vector<TimeGap> gaps;
  for (const auto& win : chosen) {
    const double lo_edge = edge(win.a);
    const double hi_edge = edge(win.b);
    const auto below = std::lower_bound(logs.begin(), logs.end(), lo_edge);
    const auto above = win.b == nb ? logs.end() : std::lower_bound(logs.begin(), logs.end(), hi_edge);
    TimeGap g;
    g.low = below == logs.begin() ? std::exp(lo_edge) : s[static_cast<std::size_t>(below - logs.begin()) - 1];
    g.high = above == logs.end() ? std::exp(hi_edge) : s[static_cast<std::size_t>(above - logs.begin())];
    gaps.push_back(g);
  }
  return gaps;
}

std::pair<double, double> fit_line(const std::vector<TimedPoint>& points) {
  if (points.size() < 2) throw Error(ErrorCode::SingularFit, "need at least two points");
  double mx = 0, my = 0;
  for (const auto& p : points) {
    mx += static_cast<double>(p.n_wg);
    my += p.time_us;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0, sxy = 0;
  for (const auto& p : points) {
    const double dx = static_cast<double>(p.n_wg) - mx;
    sxx += dx * dx;
    sxy += dx * (p.time_us - my);
  }
  if (sxx == 0) throw Error(ErrorCode::SingularFit, "all n_wg are equal");
  const double a = sxy / sxx;
  return {a, my - a * mx};
}

std::vector<std::int64_t> refine_samples(const std::vector<TimedPoint>& points, const std::vector<TimeGap>& gaps,
                                         int per_gap, std::int64_t max_n_wg) {
  if (gaps.empty() || per_gap <= 0) return {};
  const auto [a, b] = fit_line(points);
  if (!(a > 0)) throw Error(ErrorCode::SingularFit, "execution time does not grow with n_wg");
  std::set<std::int64_t> seen;
  for (const auto& p : points) seen.insert(p.n_wg);
  std::vector<std::int64_t> out;
  for (const auto& g : gaps) {
    for (int k = 1; k <= per_gap; ++k) {
      const double t = g.low + (g.high - g.low) * k / (per_gap + 1);
      const double x = std::round((t - b) / a);
      const auto n = static_cast<std::int64_t>(std::clamp(x, 1.0, static_cast<double>(max_n_wg)));
      if (seen.insert(n).second) out.push_back(n);
    }
  }
  return out;
}

}  // namespace clperf
