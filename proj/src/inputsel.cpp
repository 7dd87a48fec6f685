#include "clperf/inputsel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "clperf/error.hpp"
#include "clperf/exec.hpp"
#include "clperf/rng.hpp"

namespace clperf {

// ---- Rational ----

Rational::Rational(std::int64_t n, std::int64_t d) { *this = from_wide(n, d); }

Rational Rational::from_wide(__int128 n, __int128 d) {
  if (d == 0) throw Error(ErrorCode::DegenerateFit, "zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  __int128 a = n < 0 ? -n : n;
  __int128 b = d;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    n /= a;
    d /= a;
  }
  constexpr __int128 lim = std::numeric_limits<std::int64_t>::max();
  if (n > lim || n < -lim || d > lim) throw Error(ErrorCode::Overflow, "rational overflow");
  Rational r;
  r.num_ = static_cast<std::int64_t>(n);
  r.den_ = static_cast<std::int64_t>(d);
  return r;
}

Rational operator+(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                             static_cast<__int128>(a.den_) * b.den_);
}

Rational operator-(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.den_ - static_cast<__int128>(b.num_) * a.den_,
                             static_cast<__int128>(a.den_) * b.den_);
}

Rational operator*(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
}

Rational operator/(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
}

std::int64_t Rational::ceil() const {
  const std::int64_t q = num_ / den_;
  return (num_ % den_ > 0) ? q + 1 : q;
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

// ---- provenance ----

std::string_view to_string(Provenance p) { return p == Provenance::Simple ? "simple" : "mem_analysis"; }

Provenance provenance_from_string(std::string_view s) {
  if (s == "simple") return Provenance::Simple;
  if (s == "mem_analysis" || s == "mem") return Provenance::MemAnalysis;
  throw Error(ErrorCode::InvalidArgument, "unknown provenance '" + std::string(s) + "'");
}

// ---- simple strategy ----

double cast_scalar(double value, std::string_view base_type, bool* lossy) {
  const std::string_view t = canonical_scalar(base_type);
  double out = value;
  if (t == "float" || t == "half") {
    out = static_cast<float>(value);
  } else if (t == "double") {
    out = value;
  } else {
    const auto i = static_cast<std::int64_t>(std::trunc(value));
    if (t == "char") out = static_cast<std::int8_t>(i);
    else if (t == "uchar") out = static_cast<std::uint8_t>(i);
    else if (t == "short") out = static_cast<std::int16_t>(i);
    else if (t == "ushort") out = static_cast<std::uint16_t>(i);
    else if (t == "int") out = static_cast<std::int32_t>(i);
    else if (t == "uint") out = static_cast<std::uint32_t>(i);
    else if (t == "long") out = static_cast<double>(i);
    else if (t == "ulong") out = static_cast<double>(static_cast<std::uint64_t>(i));
    else if (t == "bool") out = i != 0;
  }
  if (lossy) *lossy = out != value;
  return out;
}

InputSetting simple_inputs(const KernelSignature& sig, std::int64_t gsize, std::int64_t lsize) {
  if (gsize < 1) throw Error(ErrorCode::InvalidArgument, "gsize must be positive");
  InputSetting s;
  s.provenance = Provenance::Simple;
  for (const auto& a : sig.args) {
    if (a.is_array) {
      s.array_sizes.push_back(a.qualifier == Qualifier::Local && lsize > 0 ? lsize : gsize);
    } else {
      s.scalar_values.push_back(cast_scalar(static_cast<double>(gsize), a.base_type));
    }
  }
  return s;
}

// ---- affine fit ----

AffineSizeModel fit_affine(std::pair<std::int64_t, std::int64_t> p1, std::pair<std::int64_t, std::int64_t> p2) {
  if (p1.first == p2.first) throw Error(ErrorCode::DegenerateFit, "probe gsizes are equal");
  AffineSizeModel m;
  m.c = Rational(p2.second - p1.second, p2.first - p1.first);
  m.d = Rational(p1.second) - m.c * Rational(p1.first);
  return m;
}

std::int64_t predict_size(const AffineSizeModel& m, std::int64_t gsize) {
  const std::int64_t v = (m.c * Rational(gsize) + m.d).ceil();
  if (v <= 0) {
    throw Error(ErrorCode::NonPositiveSize, "predicted size " + std::to_string(v) + " at gsize " +
                                                std::to_string(gsize) + " (c=" + m.c.str() + ", d=" + m.d.str() + ")");
  }
  return v;
}

// ---- candidates ----

std::vector<Candidate> parse_candidates(std::string_view text) {
  std::vector<Candidate> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "gsize") {
      out.push_back({true, 0});
    } else if (!item.empty()) {
      double v = 0;
      const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size()) {
        throw Error(ErrorCode::ConfigError, "bad candidate '" + std::string(item) + "'");
      }
      out.push_back({false, v});
    }
    pos = comma + 1;
  }
  if (out.empty()) throw Error(ErrorCode::ConfigError, "empty candidate list");
  return out;
}

std::vector<Candidate> default_candidates() {
  return {{false, 1}, {false, 4}, {true, 0}, {false, 16}, {false, 32}, {false, 256}};
}

std::vector<SymbolicCombo> symbolic_combinations(const KernelSignature& sig, const std::vector<Candidate>& cands,
                                                std::size_t max_combos, std::uint64_t seed) {
  const auto scalars = scalars_of(sig);
  const std::size_t n = scalars.size();
  // Distinct candidates per scalar: literals compared after casting, "gsize" kept once.
  std::vector<std::vector<Candidate>> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : cands) {
      Candidate v = c;
      if (!c.is_gsize) v.value = cast_scalar(c.value, scalars[i].base_type);
      if (std::find(values[i].begin(), values[i].end(), v) == values[i].end()) values[i].push_back(v);
    }
  }
  // Size of the Cartesian product, saturating.
  std::uint64_t total = 1;
  bool big = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t k = values[i].size();
    if (k == 0) return {};
    if (total > std::numeric_limits<std::uint64_t>::max() / k) {
      big = true;
      break;
    }
    total *= k;
  }
  std::vector<std::uint64_t> picks;
  if (!big && total <= max_combos) {
    picks.resize(total);
    std::iota(picks.begin(), picks.end(), 0);
  } else {
    if (big) total = std::numeric_limits<std::uint64_t>::max();
    // Floyd's algorithm: max_combos distinct indices in [0, total).
    Rng rng(seed);
    std::set<std::uint64_t> chosen;
    for (std::uint64_t j = total - max_combos; j < total; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    picks.assign(chosen.begin(), chosen.end());
  }
  std::vector<SymbolicCombo> out;
  out.reserve(picks.size());
  for (std::uint64_t idx : picks) {
    SymbolicCombo combo(n);
    // Mixed-radix digits, last scalar varies fastest.
    for (std::size_t i = n; i-- > 0;) {
      const std::uint64_t k = values[i].size();
      combo[i] = values[i][idx % k];
      idx /= k;
    }
    out.push_back(std::move(combo));
  }
  return out;
}

std::vector<double> bind_combo(const KernelSignature& sig, const SymbolicCombo& combo, std::int64_t gsize,
                               std::vector<std::string>* cast_log) {
  const auto scalars = scalars_of(sig);
  if (combo.size() != scalars.size()) throw Error(ErrorCode::InvalidArgument, "combination does not match the signature");
  std::vector<double> out;
  for (std::size_t i = 0; i < combo.size(); ++i) {
    const double raw = combo[i].is_gsize ? static_cast<double>(gsize) : combo[i].value;
    bool lossy = false;
    out.push_back(cast_scalar(raw, scalars[i].base_type, &lossy));
    if (lossy && cast_log) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), raw);
      cast_log->push_back(scalars[i].name + ": " + std::string(buf, res.ptr) + " cast to " + scalars[i].type_name());
    }
  }
  return out;
}

std::vector<std::vector<double>> scalar_combinations(const KernelSignature& sig, std::int64_t gsize,
                                                     const std::vector<Candidate>& cands, std::size_t max_combos,
                                                     std::uint64_t seed, std::vector<std::string>* cast_log) {
  std::vector<std::vector<double>> out;
  std::set<std::vector<double>> seen;
  for (const auto& combo : symbolic_combinations(sig, cands, max_combos, seed)) {
    auto bound = bind_combo(sig, combo, gsize, cast_log);
    if (seen.insert(bound).second) out.push_back(std::move(bound));
  }
  return out;
}

// ---- memory-analysis strategy ----

MemAnalyzer::MemAnalyzer(InstrumentedKernel ik, Executor& exec, MemAnalysisOptions opts)
    : ik_(std::move(ik)), exec_(exec), opts_(std::move(opts)) {}

namespace {

std::int64_t size_of(const AccessExtent& e) { return e.accessed ? e.max_index + 1 : 0; }

}  // namespace

namespace {

SymbolicCombo literal_combo(const std::vector<double>& values) {
  SymbolicCombo c;
  for (double v : values) c.push_back({false, v});
  return c;
}

std::vector<std::pair<bool, double>> combo_key(const SymbolicCombo& c) {
  std::vector<std::pair<bool, double>> k;
  for (const auto& x : c) k.emplace_back(x.is_gsize, x.is_gsize ? 0.0 : x.value);
  return k;
}

}  // namespace

const MemAnalyzer::Fit& MemAnalyzer::fit(const SymbolicCombo& combo) {
  const auto key = combo_key(combo);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  Fit f;
  const std::uint64_t data_seed = derive_seed(opts_.seed, "probe-data");
  const auto& pol = opts_.policy;
  auto probe = [&](ProbePoint p) {
    return probe_once(ik_, bind_combo(ik_.sig, combo, p.gsize), p, pol, exec_, data_seed);
  };
  try {
    const auto first = probe(pol.first);
    const auto second = probe(pol.second);
    const auto third = probe(pol.validation);
    for (std::size_t i = 0; i < first.size(); ++i) {
      const auto& e1 = first[i];
      const auto& e2 = second[i];
      AffineSizeModel m;
      if (!e1.accessed && !e2.accessed) {
        // Never touched: a single element keeps the buffer valid.
        m.c = Rational(0);
        m.d = Rational(1);
      } else if (e1.accessed != e2.accessed) {
        throw Error(ErrorCode::NonAffine, "array " + std::to_string(e1.array_position) +
                                              " is accessed under one probe only");
      } else {
        m = fit_affine({pol.first.gsize, size_of(e1)}, {pol.second.gsize, size_of(e2)});
      }
      m.array_position = ik_.hook_layout[i].array_position;
      // Third probe: the model must predict the held-out size exactly.
      const std::int64_t observed = third[i].accessed ? size_of(third[i]) : 1;
      const std::int64_t predicted = (m.c * Rational(pol.validation.gsize) + m.d).ceil();
      if (predicted != observed) {
        throw Error(ErrorCode::NonAffine, "array " + std::to_string(m.array_position) + ": predicted " +
                                              std::to_string(predicted) + " but observed " +
                                              std::to_string(observed) + " at gsize " +
                                              std::to_string(pol.validation.gsize));
      }
      f.models.push_back(m);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProbeRuntimeFailure) throw;
    f.models.clear();
    f.reason = std::string(to_string(e.code()));
    f.detail = e.what();
  }
  return cache_.emplace(key, std::move(f)).first->second;
}

ComboOutcome MemAnalyzer::evaluate(const SymbolicCombo& combo, std::int64_t gsize, std::int64_t lsize) {
  ComboOutcome out;
  out.scalar_values = bind_combo(ik_.sig, combo, gsize);
  const Fit& f = fit(combo);
  if (!f.reason.empty()) {
    out.reason = f.reason;
    out.detail = f.detail;
    return out;
  }
  const auto arrays = arrays_of(ik_.sig);
  InputSetting s;
  s.provenance = Provenance::MemAnalysis;
  s.scalar_values = out.scalar_values;
  s.array_sizes.assign(arrays.size(), gsize);
  for (std::size_t p = 0; p < arrays.size(); ++p) {
    if (arrays[p].qualifier == Qualifier::Local) s.array_sizes[p] = lsize;
  }
  try {
    for (const auto& m : f.models) {
      s.array_sizes[static_cast<std::size_t>(m.array_position)] = predict_size(m, gsize);
    }
  } catch (const Error& e) {
    out.reason = std::string(to_string(e.code()));
    out.detail = e.what();
    return out;
  }
  out.setting = std::move(s);
  return out;
}

ComboOutcome MemAnalyzer::evaluate(const std::vector<double>& scalar_values, std::int64_t gsize, std::int64_t lsize) {
  return evaluate(literal_combo(scalar_values), gsize, lsize);
}

std::vector<SymbolicCombo> MemAnalyzer::combinations() const {
  return symbolic_combinations(ik_.sig, opts_.cands, opts_.max_combos, derive_seed(opts_.seed, "combos"));
}

std::vector<ComboOutcome> MemAnalyzer::analyze(std::int64_t gsize, std::int64_t lsize) {
  std::vector<ComboOutcome> out;
  std::set<std::vector<double>> seen;
  for (const auto& combo : combinations()) {
    ComboOutcome o = evaluate(combo, gsize, lsize);
    // A literal equal to the target gsize binds to the same values as "gsize"; keep the first.
    if (seen.insert(o.scalar_values).second) out.push_back(std::move(o));
  }
  return out;
}

std::optional<InputSetting> MemAnalyzer::first_valid(std::int64_t gsize, std::int64_t lsize, std::uint64_t seed,
                                                     std::vector<ComboOutcome>* rejected) {
  auto combos = combinations();
  Rng rng(seed);
  rng.shuffle(combos.begin(), combos.end());
  for (const auto& combo : combos) {
    ComboOutcome o = evaluate(combo, gsize, lsize);
    if (o.setting) return o.setting;
    if (rejected) rejected->push_back(std::move(o));
  }
  return std::nullopt;
}

std::vector<AffineSizeModel> MemAnalyzer::models_for(const SymbolicCombo& combo) { return fit(combo).models; }

std::vector<AffineSizeModel> MemAnalyzer::models_for(const std::vector<double>& scalar_values) {
  return fit(literal_combo(scalar_values)).models;
}

std::vector<InputSetting> memory_analysis_inputs(std::string_view source, const KernelSignature& sig,
                                                 std::int64_t gsize, std::int64_t lsize, Executor& exec,
                                                 const MemAnalysisOptions& opts) {
  MemAnalyzer an(instrument_array_hooks(source, sig), exec, opts);
  std::vector<InputSetting> out;
  for (auto& o : an.analyze(gsize, lsize)) {
    if (o.setting) out.push_back(std::move(*o.setting));
  }
  return out;
}

}  // namespace clperf
