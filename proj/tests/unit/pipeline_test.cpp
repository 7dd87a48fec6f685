#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "clperf/error.hpp"
#include "clperf/exec.hpp"
#include "clperf/pipeline.hpp"
#include "clperf/promptds.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace clperf;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("clperf_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

fs::path make_corpus(const fs::path& dir, const std::vector<std::string>& fixture_files) {
  fs::create_directories(dir);
  for (const auto& f : fixture_files) fs::copy_file(fixtures::path(f), dir / fs::path(f).filename());
  return dir;
}

PipelineConfig base_config(const fs::path& corpus, const fs::path& out) {
  PipelineConfig c;
  c.corpus = corpus;
  c.output_dir = out;
  c.seed = 7;
  c.total = 40;
  c.reps = 3;
  return c;
}

void run_all(const PipelineConfig& cfg) {
  for (Stage s : dataset_stages()) run_stage(s, cfg);
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

const std::vector<std::string> kThree = {"kernels/affine/bc_saxpy.cl", "kernels/affine/os_stride.cl",
                                         "kernels/affine/cx_vec4.cl"};

}  // namespace

TEST(Pipeline, RecordCountFromConfigArithmetic) {
  TempDir t("count");
  auto cfg = base_config(make_corpus(t.path() / "corpus", kThree), t.path() / "out");
  cfg.per_gap = 0;
  cfg.lsizes_per_kernel = 2;
  run_all(cfg);
  const auto ds = parse_jsonl(fixtures::read_file(t.path() / "out/dataset.jsonl"));
  std::size_t excluded = 0;
  for (const char* st : {"gen", "run", "emit"}) excluded += read_exclusions(t.path() / "out/exclusions" / (std::string(st) + ".jsonl")).size();
  EXPECT_EQ(ds.size() + excluded, 3u * 2u * 40u);
  EXPECT_EQ(excluded, 0u);
  for (const auto& r : ds) {
    EXPECT_EQ(r.gsize, r.n_wg * r.lsize);
    EXPECT_EQ(r.provenance, Provenance::MemAnalysis);
    EXPECT_NE(r.split, Split::None);
    EXPECT_DOUBLE_EQ(r.target_log2, std::log2(r.time_us));
  }
}

TEST(Pipeline, DeterministicAcrossRunsAndJobs) {
  TempDir t("determinism");
  const auto corpus = make_corpus(t.path() / "corpus", kThree);
  auto a = base_config(corpus, t.path() / "a");
  auto b = base_config(corpus, t.path() / "b");
  b.jobs = 3;
  run_all(a);
  run_all(b);
  for (const char* f : {"settings.jsonl", "configs.jsonl", "runs.jsonl", "refined.jsonl", "dataset.jsonl",
                        "dataset.meta.json"}) {
    EXPECT_EQ(fixtures::read_file(t.path() / "a" / f), fixtures::read_file(t.path() / "b" / f)) << f;
  }
  auto c = base_config(corpus, t.path() / "c");
  c.seed = 8;
  run_all(c);
  EXPECT_NE(fixtures::read_file(t.path() / "a/dataset.jsonl"), fixtures::read_file(t.path() / "c/dataset.jsonl"));
}

TEST(Pipeline, StageRerunIsIdempotent) {
  TempDir t("idem");
  const auto cfg = base_config(make_corpus(t.path() / "corpus", kThree), t.path() / "out");
  run_all(cfg);
  const std::string before = fixtures::read_file(t.path() / "out/emitted.jsonl");
  run_stage(Stage::Emit, cfg);
  EXPECT_EQ(fixtures::read_file(t.path() / "out/emitted.jsonl"), before);
}

TEST(Pipeline, MissingStageInput) {
  TempDir t("missing");
  const auto cfg = base_config(make_corpus(t.path() / "corpus", kThree), t.path() / "out");
  run_stage(Stage::Ingest, cfg);
  run_stage(Stage::Analyze, cfg);
  try {
    run_stage(Stage::Run, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingStageInput);
  }
}

TEST(Pipeline, StageGraphIsOrdered) {
  PipelineConfig cfg;
  cfg.output_dir = "/nonexistent/out";
  std::set<std::string> produced;
  for (Stage s : dataset_stages()) {
    const auto plan = plan_stage(s, cfg);
    for (const auto& in : plan.inputs) {
      if (!fs::path(in).is_absolute() && !in.empty()) EXPECT_TRUE(produced.count(in)) << to_string(s) << " " << in;
    }
    for (const auto& o : plan.outputs) produced.insert(o);
  }
  EXPECT_FALSE(fs::exists(cfg.output_dir));
}

TEST(Pipeline, ExclusionsAndFallback) {
  TempDir t("exclusions");
  const auto corpus = make_corpus(t.path() / "corpus", {"kernels/affine/bc_saxpy.cl", "kernels/other/nonaffine_square.cl",
                                                        "kernels/other/escape_call.cl"});
  {
    std::ofstream(corpus / "two_d.cl") << "__kernel void t(__global float* a) { a[get_global_id(1)] = 0.0f; }\n";
    std::ofstream(corpus / "bad_type.cl") << "typedef struct { int x; } P;\n__kernel void s(__global P* p) { }\n";
  }
  const auto cfg = base_config(corpus, t.path() / "out");
  const auto gen_report = [&] {
    for (Stage s : {Stage::Ingest, Stage::Analyze, Stage::Sample}) run_stage(s, cfg);
    return run_stage(Stage::Gen, cfg);
  }();
  const auto analyze_x = read_exclusions(t.path() / "out/exclusions/analyze.jsonl");
  std::set<std::string> reasons;
  for (const auto& x : analyze_x) reasons.insert(x.reason);
  EXPECT_TRUE(reasons.count("unsupported"));       // two-dimensional
  EXPECT_TRUE(reasons.count("unsupported_type"));  // struct parameter
  const auto gen_x = read_exclusions(t.path() / "out/exclusions/gen.jsonl");
  ASSERT_FALSE(gen_x.empty());
  for (const auto& x : gen_x) {
    EXPECT_EQ(x.kernel_id, "nonaffine_square::square_index");
    EXPECT_EQ(x.reason, "no_valid_input");
    EXPECT_NE(x.detail.find("non_affine"), std::string::npos);
  }
  ASSERT_EQ(gen_report.notes.size(), 1u);
  EXPECT_NE(gen_report.notes[0].find("escape_call"), std::string::npos);
  run_stage(Stage::Run, cfg);
  run_stage(Stage::Refine, cfg);
  run_stage(Stage::Emit, cfg);
  std::set<std::string> prov;
  for (const auto& r : parse_jsonl(fixtures::read_file(t.path() / "out/emitted.jsonl"))) {
    prov.insert(r.kernel_id + "=" + std::string(to_string(r.provenance)));
  }
  EXPECT_TRUE(prov.count("escape_call::escape=simple"));
  EXPECT_TRUE(prov.count("bc_saxpy::saxpy=mem_analysis"));
}

TEST(Pipeline, EmitDropsFastAndLongRecords) {
  TempDir t("emitfilter");
  auto cfg = base_config(make_corpus(t.path() / "corpus", kThree), t.path() / "out");
  cfg.synthetic = SyntheticModel{0.01, 0.0, 1.0, 0.0, 0.0};  // one wave takes 0.01 us
  cfg.per_gap = 0;
  cfg.budget = 120;  // only the shortest prompt fits
  for (Stage s : {Stage::Ingest, Stage::Analyze, Stage::Sample, Stage::Gen, Stage::Run, Stage::Refine}) run_stage(s, cfg);
  const auto rep = run_stage(Stage::Emit, cfg);
  const auto xs = read_exclusions(t.path() / "out/exclusions/emit.jsonl");
  std::size_t fast = 0, longp = 0;
  for (const auto& x : xs) {
    fast += x.reason == "below_timer_resolution";
    longp += x.reason == "over_token_budget";
  }
  EXPECT_GT(fast, 0u);
  EXPECT_GT(longp, 0u);
  EXPECT_EQ(rep.produced + xs.size(), line_count(t.path() / "out/refined.jsonl"));
  for (const auto& r : parse_jsonl(fixtures::read_file(t.path() / "out/emitted.jsonl"))) {
    EXPECT_GE(r.time_us, kMinTimeUs);
    EXPECT_LE(token_estimate(r.prompt), 120);
  }
  const std::string meta = fixtures::read_file(t.path() / "out/emitted.meta.json");
  EXPECT_NE(meta.find("\"below_timer_resolution\": " + std::to_string(fast)), std::string::npos);
}

TEST(Pipeline, EvalAndPlot) {
  TempDir t("eval");
  auto cfg = base_config(make_corpus(t.path() / "corpus", kThree), t.path() / "out");
  run_all(cfg);
  const auto ds = parse_jsonl(fixtures::read_file(t.path() / "out/dataset.jsonl"));
  std::string preds;
  std::vector<double> p, y;
  for (const auto& r : ds) {
    preds += "{\"pred_time_us\": " + format_number(r.time_us * 1.1) + "}\n";
    p.push_back(r.time_us * 1.1);
    y.push_back(r.time_us);
  }
  fixtures::write_file(t.path() / "pred.jsonl", preds);
  cfg.predictions = t.path() / "pred.jsonl";
  run_stage(Stage::Eval, cfg);
  const std::string ev = fixtures::read_file(t.path() / "out/eval.json");
  const auto j = ev.find("\"mape_all\": ");
  ASSERT_NE(j, std::string::npos);
  EXPECT_NEAR(std::stod(ev.substr(j + 12)), mape(p, y), 1e-9);
  EXPECT_NEAR(mape(p, y), 10.0, 1e-9);
  run_stage(Stage::Plot, cfg);
  EXPECT_EQ(line_count(t.path() / "out/plot.csv"), ds.size() + 1);
  cfg.plot_by = "n_wg";
  cfg.plot_out = t.path() / "scatter.svg";
  run_stage(Stage::Plot, cfg);
  const std::string svg = fixtures::read_file(t.path() / "scatter.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("red"), std::string::npos);
  EXPECT_NE(svg.find("blue"), std::string::npos);
}

TEST(Pipeline, GsizeListReplacesSampling) {
  TempDir t("gsizelist");
  auto cfg = base_config(make_corpus(t.path() / "corpus", kThree), t.path() / "out");
  fixtures::write_file(t.path() / "gsizes.txt", "1024\n4096 128\n\n2048 256\n");
  cfg.gsize_list = t.path() / "gsizes.txt";
  for (Stage s : {Stage::Ingest, Stage::Analyze, Stage::Sample, Stage::Gen}) run_stage(s, cfg);
  EXPECT_EQ(line_count(t.path() / "out/configs.jsonl"), 3u * 3u);
}

TEST(Config, LoadValidateAndResolve) {
  TempDir t("config");
  make_corpus(t.path() / "corpus", kThree);
  fixtures::write_file(t.path() / "dev.json", R"({"n_sm": 40, "warp_size": 64, "max_local_size": 512, "full_util_k": 80})");
  fixtures::write_file(t.path() / "run.json",
                       R"({"corpus": "corpus", "output_dir": "out", "seed": 3, "device_profile": "dev.json",
                           "strategy": "simple", "total": 100, "backend": "synthetic", "ratio": 0.8})");
  const auto c = load_config(t.path() / "run.json");
  EXPECT_EQ(c.corpus, t.path() / "corpus");
  EXPECT_EQ(c.output_dir, t.path() / "out");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.device.n_sm, 40);
  EXPECT_EQ(c.device.full_util_k, 80);
  EXPECT_EQ(c.strategy, Strategy::Simple);
  EXPECT_EQ(c.total, 100);
  auto code = [&](const std::string& text) {
    try {
      config_from_json(text, t.path());
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code(R"({"corpus": "corpus", "colour": 1})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"corpus": "nowhere"})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"corpus": "corpus", "ratio": 1.5})"), ErrorCode::ConfigError);
  EXPECT_EQ(code(R"({"corpus": "corpus", "strategy": "magic"})"), ErrorCode::ConfigError);
  PipelineConfig noseed;
  noseed.output_dir = t.path() / "x";
  noseed.corpus = t.path() / "corpus";
  run_stage(Stage::Ingest, noseed);
  run_stage(Stage::Analyze, noseed);
  EXPECT_THROW(run_stage(Stage::Sample, noseed), Error);
}

TEST(Refine, SkewedGroupFillsDeciles) {
  DeviceProfile dev;
  SyntheticExecutor ex(dev, {});
  const auto k = fixtures::load("kernels/affine/bc_triad.cl");
  const KernelCode code{"triad", k.entry, k.source, k.sig};
  auto measure = [&](std::int64_t n) -> std::optional<RunRecord> {
    RunRecord r;
    r.cfg.kernel_id = "triad";
    r.cfg.exec = make_exec_setting(n, fixtures::kSkewedLsize, dev);
    r.cfg.input = simple_inputs(k.sig, r.cfg.exec.gsize, fixtures::kSkewedLsize);
    r.m = ex.run_kernel(code, r.cfg, 1);
    return r;
  };
  std::vector<RunRecord> group;
  for (auto n : fixtures::skewed_group_n_wg()) group.push_back(*measure(n));
  std::vector<std::string> notes;
  const auto added = refine_group(group, 10, 3, dev, measure, &notes);
  ASSERT_FALSE(added.empty());
  for (const auto& r : added) {
    EXPECT_TRUE(r.refined);
    EXPECT_GE(r.cfg.exec.n_wg, 1);
    EXPECT_LE(r.cfg.exec.n_wg, max_workgroups(dev));
  }
  std::vector<double> times;
  for (const auto& r : group) times.push_back(r.m.mean_time_us);
  for (const auto& r : added) times.push_back(r.m.mean_time_us);
  for (int c : oracle::decile_counts(times)) EXPECT_GT(c, 0);
}

TEST(Refine, SingularGroupLeavesNote) {
  DeviceProfile dev;
  std::vector<RunRecord> group;
  for (int i = 0; i < 20; ++i) {
    RunRecord r;
    r.cfg.exec = make_exec_setting(i < 19 ? 5 : 6, 64, dev);
    r.m.mean_time_us = i < 19 ? 1.0 : 1000.0;
    group.push_back(r);
  }
  std::vector<std::string> notes;
  auto measure = [](std::int64_t) -> std::optional<RunRecord> { return std::nullopt; };
  const auto added = refine_group(group, 5, 3, dev, measure, &notes);
  EXPECT_TRUE(added.empty());
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (int h : hits) EXPECT_EQ(h, 1);
}
