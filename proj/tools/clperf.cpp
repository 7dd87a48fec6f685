// Command-line driver for the dataset pipeline.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "clperf/error.hpp"
#include "clperf/pipeline.hpp"

namespace fs = std::filesystem;
using namespace clperf;

namespace {

struct Flags {
  std::string config;
  std::string corpus;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::optional<int> jobs;
  bool dry_run = false;
  std::string dump_instrumented;
  std::string device_profile;
  std::optional<std::int64_t> total;
  std::string strategy;
  std::string gsize_list;
  std::string cands;
  std::optional<std::size_t> max_combos;
  std::optional<int> reps;
  std::optional<double> timeout_s;
  std::optional<int> per_gap;
  std::optional<std::int64_t> budget;
  std::optional<double> ratio;
  std::optional<std::uint64_t> split_seed;
  std::string pred;
  std::string plot_by;
  std::string plot_out;
};

PipelineConfig build_config(const Flags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  auto existing = [&](const std::string& what, const std::string& p) {
    const fs::path path = fs::absolute(p);
    if (!fs::exists(path)) throw Error(ErrorCode::ConfigError, what + " does not exist: " + path.string());
    return path;
  };
  if (!f.corpus.empty()) c.corpus = existing("corpus", f.corpus);
  if (!f.output_dir.empty()) c.output_dir = fs::absolute(f.output_dir);
  if (f.seed) c.seed = f.seed;
  if (!f.backend.empty()) c.backend = backend_from_string(f.backend);
  if (f.jobs) c.jobs = *f.jobs;
  if (!f.dump_instrumented.empty()) c.dump_instrumented = fs::absolute(f.dump_instrumented);
  if (!f.device_profile.empty()) c.device = load_device_profile(existing("device profile", f.device_profile));
  if (f.total) c.total = *f.total;
  if (!f.strategy.empty()) c.strategy = strategy_from_string(f.strategy);
  if (!f.gsize_list.empty()) c.gsize_list = existing("gsize list", f.gsize_list);
  if (!f.cands.empty()) c.cands = f.cands;
  if (f.max_combos) c.max_combos = *f.max_combos;
  if (f.reps) c.reps = *f.reps;
  if (f.timeout_s) c.opencl.timeout_s = *f.timeout_s;
  if (f.per_gap) c.per_gap = *f.per_gap;
  if (f.budget) c.budget = *f.budget;
  if (f.ratio) c.ratio = *f.ratio;
  if (f.split_seed) c.split_seed = f.split_seed;
  if (!f.pred.empty()) c.predictions = existing("predictions", f.pred);
  if (!f.plot_by.empty()) c.plot_by = f.plot_by;
  if (!f.plot_out.empty()) c.plot_out = fs::absolute(f.plot_out);
  c.validate();
  return c;
}

void print_plan(const PipelineConfig& cfg, Stage s) {
  const StagePlan p = plan_stage(s, cfg);
  nlohmann::ordered_json j;
  j["stage"] = to_string(s);
  j["inputs"] = p.inputs;
  j["outputs"] = p.outputs;
  j["output_dir"] = cfg.output_dir.string();
  std::cout << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OpenCL kernel performance dataset pipeline"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON pipeline config");
  app.add_option("--corpus", f.corpus, "directory of .cl files or a manifest");
  app.add_option("--output-dir", f.output_dir, "directory for stage outputs");
  app.add_option("--seed", f.seed, "pipeline seed");
  app.add_option("--backend", f.backend, "synthetic or opencl");
  app.add_option("--jobs", f.jobs, "worker threads within a stage");
  app.add_flag("--dry-run", f.dry_run, "print the stage plan and exit");
  app.add_option("--dump-instrumented", f.dump_instrumented, "write instrumented kernels to this directory");

  std::vector<std::pair<CLI::App*, std::vector<Stage>>> commands;
  auto add = [&](const std::string& name, const std::string& help, std::vector<Stage> stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    commands.emplace_back(sub, std::move(stages));
    return sub;
  };
  add("ingest", "normalize the corpus and classify dimensionality", {Stage::Ingest});
  add("analyze", "parse signatures and instrument kernels", {Stage::Analyze});
  auto* sample = add("sample", "sample launch settings per kernel", {Stage::Sample});
  sample->add_option("--device-profile", f.device_profile, "device profile JSON");
  sample->add_option("--total", f.total, "n_wg samples per (kernel, lsize)");
  sample->add_option("--seed", f.seed, "pipeline seed");
  auto* gen = add("gen", "select kernel inputs for every setting", {Stage::Gen});
  gen->add_option("--strategy", f.strategy, "simple or mem");
  gen->add_option("--gsize-list", f.gsize_list, "file of target gsizes, one per line");
  gen->add_option("--cands", f.cands, "scalar candidates, e.g. 1,4,gsize,16,32,256");
  gen->add_option("--max-combos", f.max_combos, "cap on scalar combinations per kernel");
  auto* run = add("run", "measure every launch configuration", {Stage::Run});
  run->add_option("--backend", f.backend, "synthetic or opencl");
  run->add_option("--reps", f.reps, "timed repetitions per configuration");
  run->add_option("--timeout-s", f.timeout_s, "per-run wall-clock cap");
  auto* refine = add("refine", "fill sparse execution-time ranges", {Stage::Refine});
  refine->add_option("--per-gap", f.per_gap, "new configurations per gap");
  auto* emit = add("emit", "render prompt records", {Stage::Emit});
  emit->add_option("--budget", f.budget, "token budget per prompt");
  auto* split = add("split", "kernel-disjoint train/validation split", {Stage::Split});
  split->add_option("--ratio", f.ratio, "train share of kernels");
  split->add_option("--seed", f.split_seed, "split seed");
  auto* eval = add("eval", "MAPE of a predictions file", {Stage::Eval});
  eval->add_option("--pred", f.pred, "predictions JSONL")->required();
  auto* plot = add("plot", "predicted-vs-target scatter data", {Stage::Plot});
  plot->add_option("--pred", f.pred, "predictions JSONL")->required();
  plot->add_option("--by", f.plot_by, "gsize or n_wg");
  plot->add_option("--out", f.plot_out, "output .csv or .svg");
  add("all", "ingest through split", dataset_stages());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const PipelineConfig cfg = build_config(f);
    for (const auto& [sub, stages] : commands) {
      if (!sub->parsed()) continue;
      for (Stage s : stages) {
        if (f.dry_run) {
          print_plan(cfg, s);
          continue;
        }
        const StageReport r = run_stage(s, cfg);
        std::cout << report_json(r) << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "clperf: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "clperf: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
