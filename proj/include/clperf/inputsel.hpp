#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clperf/meminstr.hpp"
#include "clperf/sigparse.hpp"

namespace clperf {

class Executor;

/// Exact fraction with a positive denominator, always reduced.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t n) : num_(n) {}  // NOLINT(google-explicit-constructor)
  Rational(std::int64_t n, std::int64_t d);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::int64_t ceil() const;
  std::string str() const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);
  bool operator==(const Rational&) const = default;

 private:
  static Rational from_wide(__int128 n, __int128 d);
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

struct AffineSizeModel {
  int array_position = 0;
  Rational c;
  Rational d;
};

enum class Provenance { Simple, MemAnalysis };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct InputSetting {
  std::vector<double> scalar_values;      // aligned with scalars_of(sig)
  std::vector<std::int64_t> array_sizes;  // aligned with arrays_of(sig)
  Provenance provenance = Provenance::Simple;

  bool operator==(const InputSetting&) const = default;
};

/// Casts a candidate value to a scalar argument's type. Sets `lossy` when the value changed.
double cast_scalar(double value, std::string_view base_type, bool* lossy = nullptr);

/// Every array gets gsize elements and every scalar the value gsize. Local arrays get
/// lsize elements when lsize > 0.
InputSetting simple_inputs(const KernelSignature& sig, std::int64_t gsize, std::int64_t lsize = 0);

/// Exact line through (gsize1, size1) and (gsize2, size2). Throws Error(DegenerateFit).
AffineSizeModel fit_affine(std::pair<std::int64_t, std::int64_t> p1, std::pair<std::int64_t, std::int64_t> p2);

/// ceil(c * gsize + d). Throws Error(NonPositiveSize) when the result is <= 0.
std::int64_t predict_size(const AffineSizeModel& m, std::int64_t gsize);

/// One entry of a candidate set: a literal value or the target gsize.
struct Candidate {
  bool is_gsize = false;
  double value = 0;

  auto operator<=>(const Candidate&) const = default;
};

/// One candidate per scalar argument, before "gsize" is bound to a launch's global size.
using SymbolicCombo = std::vector<Candidate>;

/// Parses "1,4,gsize,16,32,256".
std::vector<Candidate> parse_candidates(std::string_view text);
std::vector<Candidate> default_candidates();

/// The Cartesian product of the per-scalar candidates (literals cast to the scalar type,
/// duplicates dropped). When it exceeds max_combos, a seeded sample of max_combos distinct
/// members is returned in enumeration order.
std::vector<SymbolicCombo> symbolic_combinations(const KernelSignature& sig, const std::vector<Candidate>& cands,
                                                std::size_t max_combos, std::uint64_t seed);

/// Scalar values of a combination at one global size. Lossy casts are reported in `cast_log`.
std::vector<double> bind_combo(const KernelSignature& sig, const SymbolicCombo& combo, std::int64_t gsize,
                               std::vector<std::string>* cast_log = nullptr);

/// symbolic_combinations bound at `gsize`, duplicates dropped.
std::vector<std::vector<double>> scalar_combinations(const KernelSignature& sig, std::int64_t gsize,
                                                     const std::vector<Candidate>& cands, std::size_t max_combos,
                                                     std::uint64_t seed, std::vector<std::string>* cast_log = nullptr);

struct MemAnalysisOptions {
  ProbePolicy policy;
  std::vector<Candidate> cands = default_candidates();
  std::size_t max_combos = 100;
  std::uint64_t seed = 0;
};

/// Verdict on one scalar combination.
struct ComboOutcome {
  std::vector<double> scalar_values;
  std::optional<InputSetting> setting;  // set when the combination is kept
  std::string reason;                   // error code name when rejected
  std::string detail;
};

/// Memory-analysis input selection for one kernel. A "gsize" candidate follows the
/// global size of each probe, so guards written against the global size are probed
/// at every size. Probe results are cached per combination.
class MemAnalyzer {
 public:
  MemAnalyzer(InstrumentedKernel ik, Executor& exec, MemAnalysisOptions opts);

  const InstrumentedKernel& instrumented() const { return ik_; }

  /// Probes, fits and validates one combination for the target (gsize, lsize).
  ComboOutcome evaluate(const SymbolicCombo& combo, std::int64_t gsize, std::int64_t lsize);
  /// Same, with every scalar fixed to a literal value.
  ComboOutcome evaluate(const std::vector<double>& scalar_values, std::int64_t gsize, std::int64_t lsize);

  std::vector<SymbolicCombo> combinations() const;

  /// Evaluates every combination for the target.
  std::vector<ComboOutcome> analyze(std::int64_t gsize, std::int64_t lsize);

  /// Visits the combinations in a seeded order and returns the first one kept.
  std::optional<InputSetting> first_valid(std::int64_t gsize, std::int64_t lsize, std::uint64_t seed,
                                          std::vector<ComboOutcome>* rejected = nullptr);

  /// Fitted models of a kept combination (empty when rejected); for diagnostics.
  std::vector<AffineSizeModel> models_for(const SymbolicCombo& combo);
  std::vector<AffineSizeModel> models_for(const std::vector<double>& scalar_values);

 private:
  struct Fit {
    std::vector<AffineSizeModel> models;  // per hook slot
    std::string reason;
    std::string detail;
  };
  const Fit& fit(const SymbolicCombo& combo);

  InstrumentedKernel ik_;
  Executor& exec_;
  MemAnalysisOptions opts_;
  std::map<std::vector<std::pair<bool, double>>, Fit> cache_;
};

/// Every kept InputSetting for the target setting.
std::vector<InputSetting> memory_analysis_inputs(std::string_view source, const KernelSignature& sig,
                                                 std::int64_t gsize, std::int64_t lsize, Executor& exec,
                                                 const MemAnalysisOptions& opts = {});

}  // namespace clperf
