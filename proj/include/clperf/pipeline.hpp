#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clperf/exclusion.hpp"
#include "clperf/exec.hpp"
#include "clperf/launchsample.hpp"
#include "clperf/sigparse.hpp"

namespace clperf {

enum class Strategy { Simple, Mem };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct PipelineConfig {
  std::filesystem::path corpus;      // directory of .cl files or a manifest
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;  // required by every randomized stage
  DeviceProfile device;

  Strategy strategy = Strategy::Mem;
  std::string cands = "1,4,gsize,16,32,256";
  std::size_t max_combos = 100;
  std::filesystem::path gsize_list;  // optional: "gsize [lsize]" per line, replaces sampled settings
  std::int64_t gsize_list_lsize = 64;

  int lsizes_per_kernel = 1;
  std::int64_t total = 200;  // n_wg samples per (kernel, lsize)

  BackendKind backend = BackendKind::Synthetic;
  SyntheticModel synthetic;
  OpenClOptions opencl;
  int reps = 100;

  int per_gap = 10;
  int refine_rounds = 3;

  std::int64_t budget = 2048;
  double ratio = 0.9;
  std::optional<std::uint64_t> split_seed;  // defaults to seed

  int jobs = 1;
  std::filesystem::path dump_instrumented;
  std::filesystem::path predictions;
  std::string plot_by = "gsize";
  std::filesystem::path plot_out;

  /// Throws Error(ConfigError) when a field is out of range.
  void validate() const;
  std::uint64_t require_seed() const;
};

/// Reads a JSON config. Relative paths resolve against the config file's directory.
/// Throws Error(ConfigError) for unknown keys, bad values or missing paths.
PipelineConfig load_config(const std::filesystem::path& file);
PipelineConfig config_from_json(std::string_view json_text, const std::filesystem::path& base_dir);

DeviceProfile load_device_profile(const std::filesystem::path& file);

enum class Stage { Ingest, Analyze, Sample, Gen, Run, Refine, Emit, Split, Eval, Plot };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// ingest, analyze, sample, gen, run, refine, emit, split: the dataset-producing chain.
const std::vector<Stage>& dataset_stages();

struct StagePlan {
  Stage stage;
  std::vector<std::string> inputs;   // relative to output_dir, or absolute
  std::vector<std::string> outputs;  // relative to output_dir
};

StagePlan plan_stage(Stage s, const PipelineConfig& cfg);

struct StageReport {
  Stage stage;
  std::size_t produced = 0;
  std::size_t excluded = 0;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
};

std::string report_json(const StageReport& r);

/// Runs one stage. Throws Error(MissingStageInput) when an input file is absent;
/// per-kernel and per-record failures are written to exclusions/<stage>.jsonl.
StageReport run_stage(Stage s, const PipelineConfig& cfg);

/// Executor for `cfg.backend`.
std::unique_ptr<Executor> make_executor(const PipelineConfig& cfg);

void write_exclusions(const std::filesystem::path& file, const std::vector<Exclusion>& xs);
std::vector<Exclusion> read_exclusions(const std::filesystem::path& file);

/// Kernels kept by the analyze stage.
struct AnalyzedKernel {
  std::string kernel_id;
  std::string entry_name;
  std::string source;  // normalized text
  KernelSignature sig;
  std::vector<std::string> flags;
};

std::vector<AnalyzedKernel> read_analysis(const std::filesystem::path& file);

/// One measured launch configuration.
struct RunRecord {
  LaunchConfig cfg;
  Measurement m;
  bool refined = false;
};

std::string run_record_json(const RunRecord& r);
RunRecord run_record_from_json(std::string_view line);
std::vector<RunRecord> read_runs(const std::filesystem::path& file);

/// Finds input settings for one kernel at a list of execution settings. Under the
/// memory-analysis strategy, a kernel whose arrays escape into helper functions
/// falls back to simple inputs.
class InputGenerator {
 public:
  InputGenerator(const AnalyzedKernel& k, const PipelineConfig& cfg, Executor& exec);
  ~InputGenerator();

  /// Why memory analysis was replaced by simple inputs, or empty.
  const std::string& fallback_reason() const;

  /// Throws Error(NoValidInput) when no scalar combination is valid, and lets
  /// Error(ProbeRuntimeFailure) propagate.
  InputSetting inputs_for(const ExecSetting& e, std::uint64_t choice_seed);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Adds refined runs to one (kernel, lsize) group until no gap remains or the round
/// limit is hit. `measure(n_wg)` returns the run record for a new n_wg, or nullopt
/// when that configuration was excluded.
std::vector<RunRecord> refine_group(const std::vector<RunRecord>& group, int per_gap, int rounds,
                                    const DeviceProfile& dev,
                                    const std::function<std::optional<RunRecord>(std::int64_t)>& measure,
                                    std::vector<std::string>* notes = nullptr);

/// Applies `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace clperf
