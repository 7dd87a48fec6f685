#include "oracle.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <numeric>

#include "clperf/interp.hpp"

namespace oracle {

namespace in = clperf::interp;

namespace {

struct Recorder : in::AccessObserver {
  std::vector<Extent> by_buffer;
  void on_access(int buffer, std::int64_t index, bool) override {
    if (buffer < 0 || static_cast<std::size_t>(buffer) >= by_buffer.size()) return;
    Extent& e = by_buffer[static_cast<std::size_t>(buffer)];
    if (!e.accessed) {
      e = {true, index, index};
    } else {
      e.min_index = std::min(e.min_index, index);
      e.max_index = std::max(e.max_index, index);
    }
  }
};

}  // namespace

std::vector<Extent> brute_force_extents(const fixtures::Kernel& k, const std::vector<double>& scalars,
                                        std::int64_t gsize, std::int64_t lsize) {
  const auto prog = in::Program::compile(k.source);
  in::Memory mem;
  std::vector<in::ArgValue> args;
  std::vector<int> array_buffer;  // buffer id per array argument, -1 for local
  std::size_t si = 0;
  for (const auto& a : k.sig.args) {
    if (!a.is_array) {
      args.push_back(in::ArgValue::scalar(scalars.at(si++)));
      continue;
    }
    if (a.qualifier == clperf::Qualifier::Local) {
      args.push_back(in::ArgValue::local(lsize));
      array_buffer.push_back(-1);
      continue;
    }
    // Index ranges are observed regardless of the allocation, so a modest buffer suffices.
    const auto t = in::parse_type_name(clperf::canonical_scalar(a.base_type));
    const int id = mem.add(t.scalar, a.vector_width, in::Space::Global, 4 * gsize + 1024);
    args.push_back(in::ArgValue::buf(id));
    array_buffer.push_back(id);
  }
  Recorder rec;
  rec.by_buffer.resize(mem.buffers.size());
  in::LaunchOptions opts;
  opts.global_size = gsize;
  opts.local_size = lsize;
  opts.bounds = in::BoundsPolicy::Tolerant;
  opts.observer = &rec;
  prog.launch(k.entry, mem, args, opts);
  std::vector<Extent> out;
  for (int id : array_buffer) out.push_back(id < 0 ? Extent{} : rec.by_buffer[static_cast<std::size_t>(id)]);
  return out;
}

std::int64_t bounds_violations(const fixtures::Kernel& k, const std::vector<double>& scalars,
                               const std::vector<std::int64_t>& array_sizes, std::int64_t gsize, std::int64_t lsize) {
  const auto prog = in::Program::compile(k.source);
  in::Memory mem;
  std::vector<in::ArgValue> args;
  std::size_t si = 0;
  std::size_t ai = 0;
  for (const auto& a : k.sig.args) {
    if (!a.is_array) {
      args.push_back(in::ArgValue::scalar(scalars.at(si++)));
      continue;
    }
    const std::int64_t n = array_sizes.at(ai++);
    if (a.qualifier == clperf::Qualifier::Local) {
      args.push_back(in::ArgValue::local(n));
      continue;
    }
    const auto t = in::parse_type_name(clperf::canonical_scalar(a.base_type));
    args.push_back(in::ArgValue::buf(mem.add(t.scalar, a.vector_width, in::Space::Global, n)));
  }
  in::LaunchOptions opts;
  opts.global_size = gsize;
  opts.local_size = lsize;
  opts.bounds = in::BoundsPolicy::Tolerant;
  return prog.launch(k.entry, mem, args, opts).bounds_violations;
}

std::int64_t required_size(const Extent& e) { return e.accessed ? e.max_index + 1 : 1; }

std::vector<std::int64_t> apportion(std::int64_t total, const std::vector<std::int64_t>& weights) {
  const std::int64_t wsum = std::accumulate(weights.begin(), weights.end(), std::int64_t{0});
  const std::size_t n = weights.size();
  std::vector<std::int64_t> base(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    base[i] = total * weights[i] / wsum;
    assigned += base[i];
  }
  const std::int64_t left = total - assigned;
  // Among all ways to give one extra unit to `left` distinct strata, pick the one with the
  // largest summed remainder; ties go to the lexicographically smallest index set.
  std::vector<std::int64_t> best;
  std::int64_t best_score = -1;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != left) continue;
    std::int64_t score = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) score += total * weights[i] % wsum;
    }
    std::vector<std::int64_t> cand = base;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) ++cand[i];
    }
    if (score > best_score) {
      best_score = score;
      best = cand;
    } else if (score == best_score) {
      // Prefer the earlier strata.
      if (std::lexicographical_compare(best.begin(), best.end(), cand.begin(), cand.end())) best = cand;
    }
  }
  return best;
}

std::vector<int> decile_counts(const std::vector<double>& times) {
  std::vector<int> counts(10, 0);
  if (times.empty()) return counts;
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  const double a = std::log(*lo);
  const double b = std::log(*hi);
  for (double t : times) {
    int d = b > a ? static_cast<int>(std::floor((std::log(t) - a) / (b - a) * 10.0)) : 0;
    counts[static_cast<std::size_t>(std::clamp(d, 0, 9))]++;
  }
  return counts;
}

}  // namespace oracle
