#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clperf/sigparse.hpp"

namespace clperf {

class Executor;

/// Smallest and largest element index touched in one array during one probe run.
struct AccessExtent {
  int array_position = 0;  // index into arrays_of(sig)
  std::int64_t min_index = 0;
  std::int64_t max_index = 0;
  bool accessed = true;  // false when no work-item touched the array

  bool operator==(const AccessExtent&) const = default;
};

struct HookSlot {
  int array_position = 0;  // index into arrays_of(sig)
  int slot = 0;            // pair (2*slot, 2*slot+1) of the extent buffer
};

/// A kernel rewritten to record per-array index extents.
///
/// The rewritten kernel takes two extra trailing parameters:
/// `global int* clperf_ext` (2 ints per slot, min then max) and `int clperf_nslots`.
struct InstrumentedKernel {
  std::string entry_name;
  std::string text;
  KernelSignature sig;  // signature of the original kernel
  std::vector<HookSlot> hook_layout;
  int hook_sites = 0;

  int slot_count() const { return static_cast<int>(hook_layout.size()); }
};

/// Host-side initial value of the min slots.
inline constexpr std::int32_t kExtentInitMin = 2147483647;

/// Rewrites every subscript, dereference and builtin pointer argument rooted at a
/// global array parameter (directly or through a local pointer alias) to pass its
/// index through a recording hook.
/// Throws Error(AliasEscape) when an array pointer reaches a user function or is
/// re-pointed at another array, Error(NoArrayAccess) when nothing was hooked.
InstrumentedKernel instrument_array_hooks(std::string_view src, const KernelSignature& sig);

struct ProbePoint {
  std::int64_t gsize = 0;
  std::int64_t lsize = 0;
};

struct ProbePolicy {
  ProbePoint first{1024, 64};
  ProbePoint second{4096, 64};
  ProbePoint validation{2048, 64};
  std::int64_t over_alloc = 64;        // probe arrays hold over_alloc * gsize elements
  std::int64_t retry_over_alloc = 1024;
};

/// Extents of every hooked array under one probe. Retries once with the larger
/// allocation on overflow. Throws Error(ExtentOverflow), Error(ProbeRuntimeFailure).
std::vector<AccessExtent> probe_once(const InstrumentedKernel& ik, const std::vector<double>& scalar_values,
                                     ProbePoint probe, const ProbePolicy& policy, Executor& exec,
                                     std::uint64_t data_seed);

/// Runs the two probes of `policy`; result[i] is {extent under probe 1, extent under probe 2}
/// for hook_layout[i].
std::vector<std::pair<AccessExtent, AccessExtent>> probe_extents(const InstrumentedKernel& ik,
                                                                 const std::vector<double>& scalar_values,
                                                                 const ProbePolicy& policy, Executor& exec,
                                                                 std::uint64_t data_seed);

}  // namespace clperf
