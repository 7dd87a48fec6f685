#include "clperf/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "clperf/corpus.hpp"
#include "clperf/error.hpp"
#include "clperf/inputsel.hpp"
#include "clperf/meminstr.hpp"
#include "clperf/promptds.hpp"
#include "clperf/rng.hpp"

namespace clperf {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary file so a failed stage never leaves a partial output.
void write_text(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

template <class F>
void for_each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    f(line);
  }
}

ojson parse_json(std::string_view text, const std::string& what) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::string exec_note(const ExecSetting& e) {
  return "gsize=" + std::to_string(e.gsize) + " lsize=" + std::to_string(e.lsize);
}

ojson args_json(const KernelSignature& sig) {
  ojson a = ojson::array();
  for (const auto& x : sig.args) {
    a.push_back({{"position", x.position},
                 {"name", x.name},
                 {"qualifier", to_string(x.qualifier)},
                 {"base_type", x.base_type},
                 {"is_array", x.is_array},
                 {"vector_width", x.vector_width}});
  }
  return a;
}

KernelSignature sig_from_json(const std::string& entry, const ojson& a) {
  KernelSignature sig;
  sig.entry_name = entry;
  for (const auto& x : a) {
    ArgSpec s;
    s.position = x.at("position").get<int>();
    s.name = x.at("name").get<std::string>();
    s.qualifier = qualifier_from_string(x.at("qualifier").get<std::string>());
    s.base_type = x.at("base_type").get<std::string>();
    s.is_array = x.at("is_array").get<bool>();
    s.vector_width = x.at("vector_width").get<int>();
    sig.args.push_back(std::move(s));
  }
  return sig;
}

ojson config_json(const LaunchConfig& c) {
  ojson j;
  j["kernel_id"] = c.kernel_id;
  j["lsize"] = c.exec.lsize;
  j["n_wg"] = c.exec.n_wg;
  j["gsize"] = c.exec.gsize;
  j["regime"] = to_string(c.exec.regime);
  j["scalar_values"] = c.input.scalar_values;
  j["array_sizes"] = c.input.array_sizes;
  j["provenance"] = to_string(c.input.provenance);
  j["data_seed"] = c.data_seed;
  return j;
}

LaunchConfig config_from(const ojson& j) {
  LaunchConfig c;
  c.kernel_id = j.at("kernel_id").get<std::string>();
  c.exec.lsize = j.at("lsize").get<std::int64_t>();
  c.exec.n_wg = j.at("n_wg").get<std::int64_t>();
  c.exec.gsize = j.at("gsize").get<std::int64_t>();
  c.exec.regime = regime_from_string(j.at("regime").get<std::string>());
  c.input.scalar_values = j.at("scalar_values").get<std::vector<double>>();
  c.input.array_sizes = j.at("array_sizes").get<std::vector<std::int64_t>>();
  c.input.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  c.data_seed = j.at("data_seed").get<std::uint64_t>();
  return c;
}

std::vector<LaunchConfig> read_configs(const fs::path& file) {
  std::vector<LaunchConfig> out;
  for_each_line(read_text(file), [&](const std::string& line) {
    try {
      out.push_back(config_from(parse_json(line, file.string())));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, file.string() + ": " + e.what());
    }
  });
  return out;
}

struct SettingLine {
  std::string kernel_id;
  ExecSetting exec;
};

std::vector<SettingLine> read_settings(const fs::path& file) {
  std::vector<SettingLine> out;
  for_each_line(read_text(file), [&](const std::string& line) {
    const ojson j = parse_json(line, file.string());
    SettingLine s;
    s.kernel_id = j.at("kernel_id").get<std::string>();
    s.exec.lsize = j.at("lsize").get<std::int64_t>();
    s.exec.n_wg = j.at("n_wg").get<std::int64_t>();
    s.exec.gsize = j.at("gsize").get<std::int64_t>();
    s.exec.regime = regime_from_string(j.at("regime").get<std::string>());
    out.push_back(std::move(s));
  });
  return out;
}

std::string file_safe(std::string id) {
  for (char& c : id) {
    if (c == ':' || c == '/' || c == '\\') c = '_';
  }
  return id;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace

// ---- config ----

std::string_view to_string(Strategy s) { return s == Strategy::Simple ? "simple" : "mem"; }

Strategy strategy_from_string(std::string_view s) {
  if (s == "simple") return Strategy::Simple;
  if (s == "mem") return Strategy::Mem;
  throw Error(ErrorCode::ConfigError, "unknown strategy '" + std::string(s) + "'");
}

void PipelineConfig::validate() const {
  device.validate();
  if (max_combos < 1) throw Error(ErrorCode::ConfigError, "max_combos must be positive");
  if (lsizes_per_kernel < 1) throw Error(ErrorCode::ConfigError, "lsizes_per_kernel must be positive");
  if (total < 20) throw Error(ErrorCode::ConfigError, "total must be at least 20");
  if (reps < 1) throw Error(ErrorCode::ConfigError, "reps must be positive");
  if (per_gap < 0 || refine_rounds < 0) throw Error(ErrorCode::ConfigError, "per_gap and refine_rounds must be >= 0");
  if (budget <= 0) throw Error(ErrorCode::ConfigError, "budget must be positive");
  if (!(ratio > 0 && ratio < 1)) throw Error(ErrorCode::ConfigError, "ratio must be in (0, 1)");
  if (jobs < 1) throw Error(ErrorCode::ConfigError, "jobs must be positive");
  if (!(opencl.timeout_s > 0)) throw Error(ErrorCode::ConfigError, "timeout_s must be positive");
  if (plot_by != "gsize" && plot_by != "n_wg") throw Error(ErrorCode::ConfigError, "plot_by must be gsize or n_wg");
  if (gsize_list_lsize < 1) throw Error(ErrorCode::ConfigError, "gsize_list_lsize must be positive");
}

std::uint64_t PipelineConfig::require_seed() const {
  if (!seed) throw Error(ErrorCode::ConfigError, "an explicit seed is required");
  return *seed;
}

DeviceProfile load_device_profile(const fs::path& file) {
  const ojson j = parse_json(read_text(file), file.string());
  DeviceProfile d;
  for (const auto& [k, v] : j.items()) {
    if (k == "n_sm") d.n_sm = v.get<std::int64_t>();
    else if (k == "warp_size") d.warp_size = v.get<std::int64_t>();
    else if (k == "max_local_size") d.max_local_size = v.get<std::int64_t>();
    else if (k == "full_util_k") d.full_util_k = v.get<std::int64_t>();
    else throw Error(ErrorCode::ConfigError, "unknown device profile key '" + k + "'");
  }
  d.validate();
  return d;
}

PipelineConfig config_from_json(std::string_view json_text, const fs::path& base_dir) {
  const ojson j = parse_json(json_text, "config");
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  PipelineConfig c;
  auto need_path = [&](const std::string& key, const ojson& v) {
    const fs::path p = resolve(base_dir, v.get<std::string>());
    if (!fs::exists(p)) throw Error(ErrorCode::ConfigError, key + " does not exist: " + p.string());
    return p;
  };
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "corpus") c.corpus = need_path(k, v);
      else if (k == "output_dir") c.output_dir = resolve(base_dir, v.get<std::string>());
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "device_profile") {
        if (v.is_string()) {
          c.device = load_device_profile(need_path(k, v));
        } else {
          c.device = {};
          for (const auto& [dk, dv] : v.items()) {
            if (dk == "n_sm") c.device.n_sm = dv.get<std::int64_t>();
            else if (dk == "warp_size") c.device.warp_size = dv.get<std::int64_t>();
            else if (dk == "max_local_size") c.device.max_local_size = dv.get<std::int64_t>();
            else if (dk == "full_util_k") c.device.full_util_k = dv.get<std::int64_t>();
            else throw Error(ErrorCode::ConfigError, "unknown device profile key '" + dk + "'");
          }
        }
      } else if (k == "strategy") c.strategy = strategy_from_string(v.get<std::string>());
      else if (k == "cands") c.cands = v.get<std::string>();
      else if (k == "max_combos") c.max_combos = v.get<std::size_t>();
      else if (k == "gsize_list") c.gsize_list = need_path(k, v);
      else if (k == "gsize_list_lsize") c.gsize_list_lsize = v.get<std::int64_t>();
      else if (k == "lsizes_per_kernel") c.lsizes_per_kernel = v.get<int>();
      else if (k == "total") c.total = v.get<std::int64_t>();
      else if (k == "backend") c.backend = backend_from_string(v.get<std::string>());
      else if (k == "synthetic") {
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "alpha") c.synthetic.alpha = sv.get<double>();
          else if (sk == "beta") c.synthetic.beta = sv.get<double>();
          else if (sk == "w0") c.synthetic.w0 = sv.get<double>();
          else if (sk == "w_lane") c.synthetic.w_lane = sv.get<double>();
          else if (sk == "w_elem") c.synthetic.w_elem = sv.get<double>();
          else throw Error(ErrorCode::ConfigError, "unknown synthetic model key '" + sk + "'");
        }
      } else if (k == "opencl") {
        for (const auto& [ok, ov] : v.items()) {
          if (ok == "platform") c.opencl.platform = ov.get<int>();
          else if (ok == "device") c.opencl.device = ov.get<int>();
          else if (ok == "warmup_runs") c.opencl.warmup_runs = ov.get<int>();
          else if (ok == "library") c.opencl.library = ov.get<std::string>();
          else throw Error(ErrorCode::ConfigError, "unknown opencl key '" + ok + "'");
        }
      } else if (k == "reps") c.reps = v.get<int>();
      else if (k == "timeout_s") c.opencl.timeout_s = v.get<double>();
      else if (k == "per_gap") c.per_gap = v.get<int>();
      else if (k == "refine_rounds") c.refine_rounds = v.get<int>();
      else if (k == "budget") c.budget = v.get<std::int64_t>();
      else if (k == "ratio") c.ratio = v.get<double>();
      else if (k == "split_seed") c.split_seed = v.get<std::uint64_t>();
      else if (k == "jobs") c.jobs = v.get<int>();
      else if (k == "dump_instrumented") c.dump_instrumented = resolve(base_dir, v.get<std::string>());
      else if (k == "predictions") c.predictions = need_path(k, v);
      else if (k == "plot_by") c.plot_by = v.get<std::string>();
      else if (k == "plot_out") c.plot_out = resolve(base_dir, v.get<std::string>());
      else throw Error(ErrorCode::ConfigError, "unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& file) {
  return config_from_json(read_text(file), fs::absolute(file).parent_path());
}

// ---- stage plumbing ----

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Analyze: return "analyze";
    case Stage::Sample: return "sample";
    case Stage::Gen: return "gen";
    case Stage::Run: return "run";
    case Stage::Refine: return "refine";
    case Stage::Emit: return "emit";
    case Stage::Split: return "split";
    case Stage::Eval: return "eval";
    case Stage::Plot: return "plot";
  }
  return "ingest";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::Ingest, Stage::Analyze, Stage::Sample, Stage::Gen, Stage::Run, Stage::Refine, Stage::Emit,
                   Stage::Split, Stage::Eval, Stage::Plot}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(s) + "'");
}

const std::vector<Stage>& dataset_stages() {
  static const std::vector<Stage> s = {Stage::Ingest, Stage::Analyze, Stage::Sample, Stage::Gen,
                                       Stage::Run,    Stage::Refine,  Stage::Emit,   Stage::Split};
  return s;
}

StagePlan plan_stage(Stage s, const PipelineConfig& cfg) {
  StagePlan p{s, {}, {}};
  const std::string ex = "exclusions/" + std::string(to_string(s)) + ".jsonl";
  switch (s) {
    case Stage::Ingest:
      p.inputs = {cfg.corpus.string()};
      p.outputs = {"corpus.jsonl", ex};
      break;
    case Stage::Analyze:
      p.inputs = {"corpus.jsonl"};
      p.outputs = {"analysis.jsonl", ex};
      if (!cfg.dump_instrumented.empty()) p.outputs.push_back(cfg.dump_instrumented.string());
      break;
    case Stage::Sample:
      p.inputs = {"analysis.jsonl"};
      p.outputs = {"settings.jsonl", ex};
      break;
    case Stage::Gen:
      p.inputs = {"analysis.jsonl", cfg.gsize_list.empty() ? std::string("settings.jsonl") : cfg.gsize_list.string()};
      p.outputs = {"configs.jsonl", ex};
      break;
    case Stage::Run:
      p.inputs = {"analysis.jsonl", "configs.jsonl"};
      p.outputs = {"runs.jsonl", ex};
      break;
    case Stage::Refine:
      p.inputs = {"analysis.jsonl", "runs.jsonl"};
      p.outputs = {"refined.jsonl", ex};
      break;
    case Stage::Emit:
      p.inputs = {"analysis.jsonl", "refined.jsonl"};
      p.outputs = {"emitted.jsonl", "emitted.meta.json", ex};
      break;
    case Stage::Split:
      p.inputs = {"emitted.jsonl", "emitted.meta.json"};
      p.outputs = {"dataset.jsonl", "dataset.meta.json"};
      break;
    case Stage::Eval:
      p.inputs = {"dataset.jsonl", cfg.predictions.string()};
      p.outputs = {"eval.json"};
      break;
    case Stage::Plot:
      p.inputs = {"dataset.jsonl", cfg.predictions.string()};
      p.outputs = {cfg.plot_out.empty() ? std::string("plot.csv") : cfg.plot_out.string()};
      break;
  }
  return p;
}

std::string report_json(const StageReport& r) {
  ojson j;
  j["stage"] = to_string(r.stage);
  j["produced"] = r.produced;
  j["excluded"] = r.excluded;
  j["outputs"] = r.outputs;
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j.dump();
}

void write_exclusions(const fs::path& file, const std::vector<Exclusion>& xs) {
  std::string out;
  for (const auto& x : xs) {
    ojson j;
    j["stage"] = x.stage;
    j["kernel_id"] = x.kernel_id;
    j["reason"] = x.reason;
    j["detail"] = x.detail;
    out += j.dump();
    out += '\n';
  }
  write_text(file, out);
}

std::vector<Exclusion> read_exclusions(const fs::path& file) {
  std::vector<Exclusion> out;
  for_each_line(read_text(file), [&](const std::string& line) {
    const ojson j = parse_json(line, file.string());
    out.push_back({j.at("stage").get<std::string>(), j.at("kernel_id").get<std::string>(),
                   j.at("reason").get<std::string>(), j.at("detail").get<std::string>()});
  });
  return out;
}

std::vector<AnalyzedKernel> read_analysis(const fs::path& file) {
  std::vector<AnalyzedKernel> out;
  for_each_line(read_text(file), [&](const std::string& line) {
    const ojson j = parse_json(line, file.string());
    AnalyzedKernel k;
    k.kernel_id = j.at("kernel_id").get<std::string>();
    k.entry_name = j.at("entry_name").get<std::string>();
    k.source = j.at("source").get<std::string>();
    k.flags = j.at("flags").get<std::vector<std::string>>();
    k.sig = sig_from_json(k.entry_name, j.at("args"));
    out.push_back(std::move(k));
  });
  return out;
}

std::string run_record_json(const RunRecord& r) {
  ojson j = config_json(r.cfg);
  j["mean_time_us"] = r.m.mean_time_us;
  j["repetitions"] = r.m.repetitions;
  j["backend"] = r.m.backend;
  j["cv"] = r.m.cv;
  j["noisy"] = r.m.noisy;
  j["refined"] = r.refined;
  j["run_times_us"] = r.m.run_times_us;
  return j.dump();
}

RunRecord run_record_from_json(std::string_view line) {
  const ojson j = parse_json(line, "run record");
  RunRecord r;
  try {
    r.cfg = config_from(j);
    r.m.mean_time_us = j.at("mean_time_us").get<double>();
    r.m.repetitions = j.at("repetitions").get<int>();
    r.m.backend = j.at("backend").get<std::string>();
    r.m.cv = j.at("cv").get<double>();
    r.m.noisy = j.at("noisy").get<bool>();
    r.m.run_times_us = j.at("run_times_us").get<std::vector<double>>();
    r.refined = j.at("refined").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("run record: ") + e.what());
  }
  return r;
}

std::vector<RunRecord> read_runs(const fs::path& file) {
  std::vector<RunRecord> out;
  for_each_line(read_text(file), [&](const std::string& line) { out.push_back(run_record_from_json(line)); });
  return out;
}

std::unique_ptr<Executor> make_executor(const PipelineConfig& cfg) {
  if (cfg.backend == BackendKind::OpenCl) return make_opencl_executor(opencl_options_from_env(cfg.opencl));
  return std::make_unique<SyntheticExecutor>(cfg.device, cfg.synthetic);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---- input generation ----

struct InputGenerator::Impl {
  const AnalyzedKernel& kernel;
  Strategy strategy;
  std::unique_ptr<MemAnalyzer> analyzer;
  std::string fallback;
};

InputGenerator::InputGenerator(const AnalyzedKernel& k, const PipelineConfig& cfg, Executor& exec)
    : impl_(std::make_unique<Impl>(Impl{k, cfg.strategy, nullptr, {}})) {
  if (cfg.strategy == Strategy::Mem) {
    MemAnalysisOptions o;
    o.cands = parse_candidates(cfg.cands);
    o.max_combos = cfg.max_combos;
    o.seed = derive_seed(cfg.require_seed(), "mem:" + k.kernel_id);
    try {
      impl_->analyzer = std::make_unique<MemAnalyzer>(instrument_array_hooks(k.source, k.sig), exec, o);
    } catch (const Error& e) {
      // An array that escapes into a helper cannot be traced; such kernels use simple inputs.
      if (e.code() != ErrorCode::AliasEscape) throw;
      impl_->strategy = Strategy::Simple;
      impl_->fallback = e.what();
    }
  }
}

const std::string& InputGenerator::fallback_reason() const { return impl_->fallback; }

InputGenerator::~InputGenerator() = default;

InputSetting InputGenerator::inputs_for(const ExecSetting& e, std::uint64_t choice_seed) {
  if (impl_->strategy == Strategy::Simple) return simple_inputs(impl_->kernel.sig, e.gsize, e.lsize);
  std::vector<ComboOutcome> rejected;
  auto s = impl_->analyzer->first_valid(e.gsize, e.lsize, choice_seed, &rejected);
  if (s) return *s;
  std::map<std::string, int> reasons;
  for (const auto& r : rejected) ++reasons[r.reason];
  std::string detail = exec_note(e) + ":";
  for (const auto& [reason, n] : reasons) detail += " " + reason + " x" + std::to_string(n);
  if (rejected.empty()) detail += " no scalar combinations";
  throw Error(ErrorCode::NoValidInput, detail);
}

// ---- refinement ----

std::vector<RunRecord> refine_group(const std::vector<RunRecord>& group, int per_gap, int rounds,
                                    const DeviceProfile& dev,
                                    const std::function<std::optional<RunRecord>(std::int64_t)>& measure,
                                    std::vector<std::string>* notes) {
  std::vector<RunRecord> all = group;
  std::vector<RunRecord> added;
  auto note = [&](const std::string& s) {
    if (notes) notes->push_back(s);
  };
  for (int round = 0; round < rounds && per_gap > 0; ++round) {
    std::vector<double> times;
    std::vector<TimedPoint> points;
    for (const auto& r : all) {
      times.push_back(r.m.mean_time_us);
      points.push_back({r.cfg.exec.n_wg, r.m.mean_time_us});
    }
    std::vector<TimeGap> gaps;
    try {
      gaps = iqr_missing_ranges(times);
    } catch (const Error& e) {
      note(e.what());
      break;
    }
    if (gaps.empty()) break;
    std::vector<std::int64_t> fresh;
    try {
      fresh = refine_samples(points, gaps, per_gap, max_workgroups(dev));
    } catch (const Error& e) {
      note(std::string("refinement skipped: ") + e.what());
      break;
    }
    if (fresh.empty()) break;
    for (std::int64_t n : fresh) {
      if (auto r = measure(n)) {
        r->refined = true;
        all.push_back(*r);
        added.push_back(std::move(*r));
      }
    }
  }
  return added;
}

// ---- stages ----

namespace {

fs::path out_path(const PipelineConfig& cfg, const std::string& rel) { return cfg.output_dir / rel; }

void require_inputs(const PipelineConfig& cfg, const StagePlan& plan) {
  for (const auto& in : plan.inputs) {
    const fs::path p = fs::path(in).is_absolute() ? fs::path(in) : out_path(cfg, in);
    if (in.empty() || !fs::exists(p)) {
      throw Error(ErrorCode::MissingStageInput,
                  std::string(to_string(plan.stage)) + " needs " + (in.empty() ? std::string("an input path") : p.string()));
    }
  }
}

fs::path exclusions_file(const PipelineConfig& cfg, Stage s) {
  return out_path(cfg, "exclusions/" + std::string(to_string(s)) + ".jsonl");
}

StageReport stage_ingest(const PipelineConfig& cfg) {
  IngestResult r = ingest_path(cfg.corpus);
  std::vector<std::string> lines;
  for (const auto& k : r.kernels) {
    ojson j;
    j["kernel_id"] = k.kernel_id;
    j["entry_name"] = k.entry_name;
    j["dimensionality"] = k.dimensionality;
    j["flags"] = k.flags;
    j["normalized_text"] = k.normalized_text;
    lines.push_back(j.dump());
  }
  write_text(out_path(cfg, "corpus.jsonl"), join_lines(lines));
  write_exclusions(exclusions_file(cfg, Stage::Ingest), r.exclusions);
  return {Stage::Ingest, r.kernels.size(), r.exclusions.size(), {"corpus.jsonl"}, {}};
}

StageReport stage_analyze(const PipelineConfig& cfg) {
  std::vector<std::string> lines;
  std::vector<Exclusion> xs;
  const fs::path corpus = out_path(cfg, "corpus.jsonl");
  for_each_line(read_text(corpus), [&](const std::string& line) {
    const ojson j = parse_json(line, corpus.string());
    const std::string id = j.at("kernel_id").get<std::string>();
    const std::string entry = j.at("entry_name").get<std::string>();
    const std::string text = j.at("normalized_text").get<std::string>();
    const int dim = j.at("dimensionality").get<int>();
    if (dim != 1) {
      xs.push_back(make_exclusion("analyze", id, ErrorCode::Unsupported,
                                  "dimensionality " + std::to_string(dim) + " kernels are filtered"));
      return;
    }
    try {
      const KernelSignature sig = parse_signature(text, entry);
      if (cfg.strategy == Strategy::Mem) {
        // Kernels whose arrays escape are kept; gen falls back to simple inputs for them.
        try {
          const InstrumentedKernel ik = instrument_array_hooks(text, sig);
          if (!cfg.dump_instrumented.empty()) {
            write_text(cfg.dump_instrumented / (file_safe(id) + ".cl"), ik.text);
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::AliasEscape) throw;
        }
      }
      ojson o;
      o["kernel_id"] = id;
      o["entry_name"] = entry;
      o["flags"] = j.at("flags");
      o["args"] = args_json(sig);
      o["source"] = text;
      lines.push_back(o.dump());
    } catch (const Error& e) {
      xs.push_back(make_exclusion("analyze", id, e));
    }
  });
  write_text(out_path(cfg, "analysis.jsonl"), join_lines(lines));
  write_exclusions(exclusions_file(cfg, Stage::Analyze), xs);
  StageReport rep{Stage::Analyze, lines.size(), xs.size(), {"analysis.jsonl"}, {}};
  if (!cfg.dump_instrumented.empty()) rep.outputs.push_back(cfg.dump_instrumented.string());
  return rep;
}

StageReport stage_sample(const PipelineConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  const auto kernels = read_analysis(out_path(cfg, "analysis.jsonl"));
  std::vector<std::string> lines;
  std::vector<Exclusion> xs;
  std::vector<std::int64_t> choices;
  for (std::int64_t l = cfg.device.warp_size; l <= cfg.device.max_local_size; l += cfg.device.warp_size) {
    choices.push_back(l);
  }
  for (const auto& k : kernels) {
    std::vector<std::int64_t> ls = choices;
    Rng rng(derive_seed(seed, "lsize:" + k.kernel_id));
    rng.shuffle(ls.begin(), ls.end());
    ls.resize(std::min(ls.size(), static_cast<std::size_t>(cfg.lsizes_per_kernel)));
    std::sort(ls.begin(), ls.end());
    for (std::int64_t lsize : ls) {
      const auto counts = sample_workgroup_counts(cfg.device, cfg.total,
                                                  derive_seed(seed, "nwg:" + k.kernel_id, static_cast<std::uint64_t>(lsize)));
      for (std::int64_t n : counts) {
        try {
          const ExecSetting e = make_exec_setting(n, lsize, cfg.device);
          ojson j;
          j["kernel_id"] = k.kernel_id;
          j["lsize"] = e.lsize;
          j["n_wg"] = e.n_wg;
          j["gsize"] = e.gsize;
          j["regime"] = to_string(e.regime);
          lines.push_back(j.dump());
        } catch (const Error& e) {
          xs.push_back(make_exclusion("sample", k.kernel_id, e));
        }
      }
    }
  }
  write_text(out_path(cfg, "settings.jsonl"), join_lines(lines));
  write_exclusions(exclusions_file(cfg, Stage::Sample), xs);
  return {Stage::Sample, lines.size(), xs.size(), {"settings.jsonl"}, {}};
}

std::vector<SettingLine> settings_from_gsize_list(const PipelineConfig& cfg, const std::vector<AnalyzedKernel>& ks) {
  std::vector<ExecSetting> targets;
  std::istringstream in(read_text(cfg.gsize_list));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    std::int64_t g = 0;
    std::int64_t l = cfg.gsize_list_lsize;
    if (!(ls >> g)) throw Error(ErrorCode::ConfigError, "bad gsize list line '" + line + "'");
    ls >> l;
    if (g <= 0 || l <= 0 || g % l != 0) {
      throw Error(ErrorCode::ConfigError, "gsize " + std::to_string(g) + " is not a positive multiple of " +
                                              std::to_string(l));
    }
    targets.push_back(make_exec_setting(g / l, l, cfg.device));
  }
  std::vector<SettingLine> out;
  for (const auto& k : ks) {
    for (const auto& t : targets) out.push_back({k.kernel_id, t});
  }
  return out;
}

StageReport stage_gen(const PipelineConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  const auto kernels = read_analysis(out_path(cfg, "analysis.jsonl"));
  const auto settings = cfg.gsize_list.empty() ? read_settings(out_path(cfg, "settings.jsonl"))
                                               : settings_from_gsize_list(cfg, kernels);
  std::map<std::string, std::vector<ExecSetting>> by_kernel;
  for (const auto& s : settings) by_kernel[s.kernel_id].push_back(s.exec);

  auto exec = make_executor(cfg);
  std::vector<std::vector<std::string>> lines(kernels.size());
  std::vector<std::vector<Exclusion>> xs(kernels.size());
  std::vector<std::string> fallbacks(kernels.size());
  const int jobs = cfg.backend == BackendKind::OpenCl ? 1 : cfg.jobs;
  parallel_for(kernels.size(), jobs, [&](std::size_t ki) {
    const auto& k = kernels[ki];
    auto it = by_kernel.find(k.kernel_id);
    if (it == by_kernel.end()) return;
    try {
      InputGenerator gen(k, cfg, *exec);
      if (!gen.fallback_reason().empty()) {
        fallbacks[ki] = k.kernel_id + ": simple inputs (" + gen.fallback_reason() + ")";
      }
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        const ExecSetting& e = it->second[i];
        try {
          LaunchConfig c;
          c.kernel_id = k.kernel_id;
          c.exec = e;
          c.input = gen.inputs_for(e, derive_seed(seed, "choice:" + k.kernel_id, i));
          c.data_seed = derive_seed(seed, "data:" + k.kernel_id, i);
          lines[ki].push_back(config_json(c).dump());
        } catch (const Error& err) {
          if (err.code() != ErrorCode::NoValidInput) throw;
          xs[ki].push_back(make_exclusion("gen", k.kernel_id, err));
        }
      }
    } catch (const Error& err) {
      lines[ki].clear();
      xs[ki].push_back(make_exclusion("gen", k.kernel_id, err));
    }
  });
  std::vector<std::string> all;
  std::vector<Exclusion> all_x;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    all.insert(all.end(), lines[i].begin(), lines[i].end());
    all_x.insert(all_x.end(), xs[i].begin(), xs[i].end());
  }
  write_text(out_path(cfg, "configs.jsonl"), join_lines(all));
  write_exclusions(exclusions_file(cfg, Stage::Gen), all_x);
  StageReport rep{Stage::Gen, all.size(), all_x.size(), {"configs.jsonl"}, {}};
  for (const auto& f : fallbacks) {
    if (!f.empty()) rep.notes.push_back(f);
  }
  return rep;
}

KernelCode code_of(const AnalyzedKernel& k) { return {k.kernel_id, k.entry_name, k.source, k.sig}; }

std::map<std::string, const AnalyzedKernel*> index_kernels(const std::vector<AnalyzedKernel>& ks) {
  std::map<std::string, const AnalyzedKernel*> m;
  for (const auto& k : ks) m[k.kernel_id] = &k;
  return m;
}

StageReport stage_run(const PipelineConfig& cfg) {
  const auto kernels = read_analysis(out_path(cfg, "analysis.jsonl"));
  const auto by_id = index_kernels(kernels);
  const auto configs = read_configs(out_path(cfg, "configs.jsonl"));
  auto exec = make_executor(cfg);
  std::vector<std::string> lines(configs.size());
  std::vector<std::optional<Exclusion>> xs(configs.size());
  const int jobs = cfg.backend == BackendKind::OpenCl ? 1 : cfg.jobs;
  parallel_for(configs.size(), jobs, [&](std::size_t i) {
    const auto& c = configs[i];
    auto it = by_id.find(c.kernel_id);
    if (it == by_id.end()) {
      xs[i] = make_exclusion("run", c.kernel_id, ErrorCode::MissingStageInput, "kernel not in analysis.jsonl");
      return;
    }
    try {
      RunRecord r{c, exec->run_kernel(code_of(*it->second), c, cfg.reps), false};
      lines[i] = run_record_json(r);
    } catch (const Error& e) {
      xs[i] = make_exclusion("run", c.kernel_id, e.code(), exec_note(c.exec) + ": " + e.what());
    }
  });
  std::vector<std::string> kept;
  std::vector<Exclusion> all_x;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (xs[i]) all_x.push_back(*xs[i]);
    else kept.push_back(lines[i]);
  }
  write_text(out_path(cfg, "runs.jsonl"), join_lines(kept));
  write_exclusions(exclusions_file(cfg, Stage::Run), all_x);
  return {Stage::Run, kept.size(), all_x.size(), {"runs.jsonl"}, {}};
}

StageReport stage_refine(const PipelineConfig& cfg) {
  const std::uint64_t seed = cfg.require_seed();
  const auto kernels = read_analysis(out_path(cfg, "analysis.jsonl"));
  const auto by_id = index_kernels(kernels);
  const auto runs = read_runs(out_path(cfg, "runs.jsonl"));

  std::vector<std::pair<std::string, std::int64_t>> keys;
  std::map<std::pair<std::string, std::int64_t>, std::vector<RunRecord>> groups;
  for (const auto& r : runs) {
    const auto key = std::make_pair(r.cfg.kernel_id, r.cfg.exec.lsize);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(r);
  }
  auto exec = make_executor(cfg);
  std::vector<std::vector<RunRecord>> added(keys.size());
  std::vector<std::vector<Exclusion>> xs(keys.size());
  const int jobs = cfg.backend == BackendKind::OpenCl ? 1 : cfg.jobs;
  parallel_for(keys.size(), jobs, [&](std::size_t gi) {
    const auto& [kid, lsize] = keys[gi];
    auto it = by_id.find(kid);
    if (it == by_id.end()) return;
    const AnalyzedKernel& k = *it->second;
    try {
      InputGenerator gen(k, cfg, *exec);
      const std::string label = "refine:" + kid + ":" + std::to_string(lsize);
      auto measure = [&](std::int64_t n_wg) -> std::optional<RunRecord> {
        try {
          LaunchConfig c;
          c.kernel_id = kid;
          c.exec = make_exec_setting(n_wg, lsize, cfg.device);
          c.input = gen.inputs_for(c.exec, derive_seed(seed, label + ":choice", static_cast<std::uint64_t>(n_wg)));
          c.data_seed = derive_seed(seed, label + ":data", static_cast<std::uint64_t>(n_wg));
          return RunRecord{c, exec->run_kernel(code_of(k), c, cfg.reps), true};
        } catch (const Error& e) {
          if (e.code() == ErrorCode::ProbeRuntimeFailure) throw;
          xs[gi].push_back(make_exclusion("refine", kid, e.code(), "n_wg=" + std::to_string(n_wg) + ": " + e.what()));
          return std::nullopt;
        }
      };
      std::vector<std::string> notes;
      added[gi] = refine_group(groups[keys[gi]], cfg.per_gap, cfg.refine_rounds, cfg.device, measure, &notes);
      for (const auto& n : notes) {
        xs[gi].push_back({"refine", kid, "refinement_note", "lsize=" + std::to_string(lsize) + ": " + n});
      }
    } catch (const Error& e) {
      xs[gi].push_back(make_exclusion("refine", kid, e));
    }
  });
  std::vector<std::string> lines;
  for (const auto& r : runs) lines.push_back(run_record_json(r));
  std::size_t n_added = 0;
  std::vector<Exclusion> all_x;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (const auto& r : added[i]) lines.push_back(run_record_json(r));
    n_added += added[i].size();
    all_x.insert(all_x.end(), xs[i].begin(), xs[i].end());
  }
  write_text(out_path(cfg, "refined.jsonl"), join_lines(lines));
  write_exclusions(exclusions_file(cfg, Stage::Refine), all_x);
  StageReport rep{Stage::Refine, lines.size(), all_x.size(), {"refined.jsonl"}, {}};
  rep.notes.push_back(std::to_string(n_added) + " refined configurations added");
  return rep;
}

StageReport stage_emit(const PipelineConfig& cfg) {
  const auto kernels = read_analysis(out_path(cfg, "analysis.jsonl"));
  const auto by_id = index_kernels(kernels);
  const auto runs = read_runs(out_path(cfg, "refined.jsonl"));
  std::vector<PromptRecord> recs;
  std::vector<Exclusion> xs;
  DatasetMetadata meta;
  for (const auto& r : runs) {
    auto it = by_id.find(r.cfg.kernel_id);
    if (it == by_id.end()) {
      xs.push_back(make_exclusion("emit", r.cfg.kernel_id, ErrorCode::MissingStageInput, "kernel not in analysis.jsonl"));
      continue;
    }
    if (r.m.mean_time_us < kMinTimeUs) {
      ++meta.excluded_too_fast;
      xs.push_back({"emit", r.cfg.kernel_id, "below_timer_resolution",
                    exec_note(r.cfg.exec) + ": " + format_number(r.m.mean_time_us) + " us"});
      continue;
    }
    PromptRecord p;
    p.kernel_id = r.cfg.kernel_id;
    p.prompt = render_prompt(it->second->source, render_arg_descs(it->second->sig, r.cfg.input), r.cfg.exec.gsize,
                             r.cfg.exec.lsize);
    p.time_us = r.m.mean_time_us;
    p.target_log2 = to_target(p.time_us);
    p.gsize = r.cfg.exec.gsize;
    p.lsize = r.cfg.exec.lsize;
    p.n_wg = r.cfg.exec.n_wg;
    p.regime = r.cfg.exec.regime;
    p.provenance = r.cfg.input.provenance;
    p.data_seed = r.cfg.data_seed;
    recs.push_back(std::move(p));
  }
  auto filtered = length_filter(std::move(recs), cfg.budget);
  for (const auto& d : filtered.discarded) {
    ++meta.excluded_over_budget;
    xs.push_back({"emit", d.kernel_id, "over_token_budget",
                  "estimate " + std::to_string(token_estimate(d.prompt)) + " > " + std::to_string(cfg.budget)});
  }
  const DatasetMetadata counts = summarize_dataset(filtered.kept);
  meta.records = counts.records;
  meta.kernels = counts.kernels;
  meta.budget = cfg.budget;
  write_text(out_path(cfg, "emitted.jsonl"), to_jsonl(filtered.kept));
  write_text(out_path(cfg, "emitted.meta.json"), metadata_json(meta));
  write_exclusions(exclusions_file(cfg, Stage::Emit), xs);
  return {Stage::Emit, filtered.kept.size(), xs.size(), {"emitted.jsonl", "emitted.meta.json"}, {}};
}

StageReport stage_split(const PipelineConfig& cfg) {
  const std::uint64_t seed = cfg.split_seed ? *cfg.split_seed : cfg.require_seed();
  auto recs = parse_jsonl(read_text(out_path(cfg, "emitted.jsonl")));
  const ojson prev = parse_json(read_text(out_path(cfg, "emitted.meta.json")), "emitted.meta.json");
  recs = split_train_val(std::move(recs), cfg.ratio, seed);
  DatasetMetadata meta = summarize_dataset(recs);
  meta.excluded_too_fast = prev.at("excluded").at("below_timer_resolution").get<std::size_t>();
  meta.excluded_over_budget = prev.at("excluded").at("over_token_budget").get<std::size_t>();
  meta.budget = prev.at("token_budget").get<std::int64_t>();
  write_text(out_path(cfg, "dataset.jsonl"), to_jsonl(recs));
  write_text(out_path(cfg, "dataset.meta.json"), metadata_json(meta));
  StageReport rep{Stage::Split, recs.size(), 0, {"dataset.jsonl", "dataset.meta.json"}, {}};
  rep.notes.push_back(std::to_string(meta.train_kernels) + " train kernels, " + std::to_string(meta.val_kernels) +
                      " val kernels");
  return rep;
}

std::vector<PredictionPair> load_pairs(const PipelineConfig& cfg) {
  const auto dataset = parse_jsonl(read_text(out_path(cfg, "dataset.jsonl")));
  return join_predictions(read_text(cfg.predictions), dataset);
}

StageReport stage_eval(const PipelineConfig& cfg) {
  const auto pairs = load_pairs(cfg);
  ojson j;
  auto mape_of = [&](std::optional<Split> which) -> std::optional<double> {
    std::vector<double> p, t;
    for (const auto& x : pairs) {
      if (which && x.split != *which) continue;
      p.push_back(x.pred_time_us);
      t.push_back(x.time_us);
    }
    if (p.empty()) return std::nullopt;
    return mape(p, t);
  };
  StageReport rep{Stage::Eval, pairs.size(), 0, {"eval.json"}, {}};
  j["predictions"] = pairs.size();
  for (auto [name, which] : {std::pair<const char*, std::optional<Split>>{"all", std::nullopt},
                             {"train", Split::Train},
                             {"val", Split::Val}}) {
    if (auto m = mape_of(which)) {
      j["mape_" + std::string(name)] = *m;
      rep.notes.push_back(std::string("MAPE ") + name + " = " + format_number(*m) + "%");
    }
  }
  write_text(out_path(cfg, "eval.json"), j.dump(2) + "\n");
  return rep;
}

std::string svg_scatter(const std::vector<PredictionPair>& pairs, bool by_gsize) {
  const double W = 640, H = 420, M = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto xval = [&](const PredictionPair& p) {
    return std::log10(static_cast<double>(std::max<std::int64_t>(1, by_gsize ? p.gsize : p.n_wg)));
  };
  for (const auto& p : pairs) {
    xmin = std::min(xmin, xval(p));
    xmax = std::max(xmax, xval(p));
    for (double t : {p.pred_time_us, p.time_us}) {
      if (t > 0) {
        ymin = std::min(ymin, std::log10(t));
        ymax = std::max(ymax, std::log10(t));
      }
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
  auto sy = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">log10 "
    << (by_gsize ? "gsize" : "n_wg") << "</text>\n";
  s << "<text x=\"12\" y=\"" << H / 2 << "\" transform=\"rotate(-90 12 " << H / 2
    << ")\" text-anchor=\"middle\">log10 time (us)</text>\n";
  for (const auto& p : pairs) {
    if (p.time_us > 0) {
      s << "<circle cx=\"" << sx(xval(p)) << "\" cy=\"" << sy(std::log10(p.time_us))
        << "\" r=\"2.5\" fill=\"blue\"/>\n";
    }
    if (p.pred_time_us > 0) {
      s << "<circle cx=\"" << sx(xval(p)) << "\" cy=\"" << sy(std::log10(p.pred_time_us))
        << "\" r=\"2.5\" fill=\"red\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

StageReport stage_plot(const PipelineConfig& cfg) {
  auto pairs = load_pairs(cfg);
  const bool by_gsize = cfg.plot_by == "gsize";
  std::stable_sort(pairs.begin(), pairs.end(), [&](const PredictionPair& a, const PredictionPair& b) {
    return by_gsize ? a.gsize < b.gsize : a.n_wg < b.n_wg;
  });
  const fs::path out = cfg.plot_out.empty() ? out_path(cfg, "plot.csv") : cfg.plot_out;
  if (out.extension() == ".svg") {
    write_text(out, svg_scatter(pairs, by_gsize));
  } else {
    std::string csv = cfg.plot_by + ",kernel_id,pred_time_us,time_us,split\n";
    for (const auto& p : pairs) {
      csv += std::to_string(by_gsize ? p.gsize : p.n_wg) + "," + p.kernel_id + "," + format_number(p.pred_time_us) +
             "," + format_number(p.time_us) + "," + std::string(to_string(p.split)) + "\n";
    }
    write_text(out, csv);
  }
  return {Stage::Plot, pairs.size(), 0, {out.string()}, {}};
}

}  // namespace

StageReport run_stage(Stage s, const PipelineConfig& cfg) {
  if (cfg.output_dir.empty()) throw Error(ErrorCode::ConfigError, "output_dir is not set");
  require_inputs(cfg, plan_stage(s, cfg));
  fs::create_directories(cfg.output_dir);
  switch (s) {
    case Stage::Ingest: return stage_ingest(cfg);
    case Stage::Analyze: return stage_analyze(cfg);
    case Stage::Sample: return stage_sample(cfg);
    case Stage::Gen: return stage_gen(cfg);
    case Stage::Run: return stage_run(cfg);
    case Stage::Refine: return stage_refine(cfg);
    case Stage::Emit: return stage_emit(cfg);
    case Stage::Split: return stage_split(cfg);
    case Stage::Eval: return stage_eval(cfg);
    case Stage::Plot: return stage_plot(cfg);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown stage");
}

}  // namespace clperf
