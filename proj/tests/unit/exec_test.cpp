#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "clperf/error.hpp"
#include "clperf/exec.hpp"
#include "fixtures.hpp"

using namespace clperf;

namespace {

LaunchConfig config_for(const fixtures::Kernel& k, std::int64_t n_wg, std::int64_t lsize) {
  LaunchConfig c;
  c.kernel_id = k.entry;
  c.exec = make_exec_setting(n_wg, lsize);
  c.input = simple_inputs(k.sig, c.exec.gsize, lsize);
  c.data_seed = 1;
  return c;
}

KernelCode code_for(const fixtures::Kernel& k) { return {k.entry, k.entry, k.source, k.sig}; }

}  // namespace

TEST(Synthetic, HandEvaluatedModel) {
  // t = 1.0 * ceil(n_wg / 80) * 1 + 0.5
  SyntheticExecutor ex(DeviceProfile{}, SyntheticModel{1.0, 0.5, 1.0, 0.0, 0.0});
  const auto k = fixtures::load("kernels/affine/bc_triad.cl");
  EXPECT_DOUBLE_EQ(ex.run_kernel(code_for(k), config_for(k, 1, 64), 10).mean_time_us, 1.5);
  EXPECT_DOUBLE_EQ(ex.run_kernel(code_for(k), config_for(k, 80, 64), 10).mean_time_us, 1.5);
  EXPECT_DOUBLE_EQ(ex.run_kernel(code_for(k), config_for(k, 81, 64), 10).mean_time_us, 2.5);
}

TEST(Synthetic, WorkTermUsesLsizeAndSizes) {
  SyntheticExecutor ex(DeviceProfile{}, SyntheticModel{2.0, 0.25, 1.0, 0.01, 0.5});
  const auto k = fixtures::load("kernels/affine/bc_triad.cl");
  const auto c = config_for(k, 100, 128);
  // Three arrays of gsize elements: w = 1 + 0.01 * 128 + 0.5 * 3.
  const double w = 1.0 + 0.01 * 128 + 0.5 * 3;
  EXPECT_NEAR(ex.run_kernel(code_for(k), c, 1).mean_time_us, 2.0 * 2 * w + 0.25, 1e-12);
}

TEST(Synthetic, SingleRepAndDeterminism) {
  SyntheticExecutor ex;
  const auto k = fixtures::load("kernels/affine/bc_saxpy.cl");
  const auto c = config_for(k, 333, 96);
  const auto one = ex.run_kernel(code_for(k), c, 1);
  const auto many = ex.run_kernel(code_for(k), c, 100);
  EXPECT_EQ(one.repetitions, 1);
  EXPECT_EQ(one.mean_time_us, one.run_times_us[0]);
  EXPECT_EQ(one.mean_time_us, many.mean_time_us);
  EXPECT_EQ(many.run_times_us.size(), 100u);
  EXPECT_EQ(many.backend, "synthetic");
  EXPECT_EQ(many.cv, 0.0);
}

TEST(Synthetic, RegimeShape) {
  SyntheticExecutor ex;
  const auto k = fixtures::load("kernels/affine/bc_triad.cl");
  const double idle = ex.run_kernel(code_for(k), config_for(k, 1, 64), 1).mean_time_us;
  for (std::int64_t n = 2; n <= 80; ++n) {
    EXPECT_EQ(ex.run_kernel(code_for(k), config_for(k, n, 64), 1).mean_time_us, idle) << n;
  }
  // Past one wave the time rises at every wave boundary and never falls.
  double prev = idle;
  for (std::int64_t n = 81; n <= 1600; ++n) {
    const double t = ex.run_kernel(code_for(k), config_for(k, n, 64), 1).mean_time_us;
    EXPECT_GE(t, prev) << n;
    if ((n - 1) % 80 == 0) EXPECT_GT(t, prev) << n;
    prev = t;
  }
}

TEST(Synthetic, RejectsMismatchedConfigs) {
  SyntheticExecutor ex;
  const auto k = fixtures::load("kernels/affine/bc_triad.cl");
  auto c = config_for(k, 10, 64);
  c.exec.gsize += 1;
  EXPECT_THROW(ex.run_kernel(code_for(k), c, 1), Error);
  c = config_for(k, 10, 64);
  c.input.array_sizes.pop_back();
  EXPECT_THROW(ex.run_kernel(code_for(k), c, 1), Error);
  EXPECT_THROW(ex.run_kernel(code_for(k), config_for(k, 10, 64), 0), Error);
}

TEST(SummarizeRuns, MeanCvAndNoisyFlag) {
  const auto m = summarize_runs({1, 2, 3, 4}, "opencl");
  EXPECT_DOUBLE_EQ(m.mean_time_us, 2.5);
  EXPECT_NEAR(m.cv, std::sqrt(5.0 / 3.0) / 2.5, 1e-12);
  EXPECT_TRUE(m.noisy);
  const auto q = summarize_runs({10, 10.1, 9.9}, "opencl");
  EXPECT_FALSE(q.noisy);
  double sum = 0;
  for (double t : q.run_times_us) sum += t;
  EXPECT_DOUBLE_EQ(q.mean_time_us, sum / 3);
  EXPECT_THROW(summarize_runs({}, "x"), Error);
}

TEST(ProbeRun, StrideAndBoundary) {
  SyntheticExecutor ex;
  {
    const auto k = fixtures::load("kernels/affine/os_stride.cl");
    const auto ik = instrument_array_hooks(k.source, k.sig);
    LaunchConfig c;
    c.exec = make_exec_setting(1, 4);
    c.input.scalar_values = {1, 2};
    c.input.array_sizes = {64, 64};
    const auto e = ex.probe_run(ik, c);
    ASSERT_EQ(e.size(), 2u);
    EXPECT_EQ(e[0].min_index, 1);
    EXPECT_EQ(e[0].max_index, 7);
  }
  {
    const auto k = fixtures::load("kernels/affine/bc_early_return.cl");
    const auto ik = instrument_array_hooks(k.source, k.sig);
    LaunchConfig c;
    c.exec = make_exec_setting(2, 64);
    c.input.scalar_values = {128, 2};
    c.input.array_sizes = std::vector<std::int64_t>(arrays_of(k.sig).size(), 256);
    const auto e = ex.probe_run(ik, c);
    EXPECT_EQ(e[0].min_index, 0);
    EXPECT_EQ(e[0].max_index, 127);
    c.input.scalar_values = {0, 2};
    EXPECT_FALSE(ex.probe_run(ik, c)[0].accessed);
  }
}

TEST(ArrayData, ReproducibleAndInRange) {
  ArgSpec f{0, "a", Qualifier::Global, "float", true, 4};
  ArgSpec i{1, "b", Qualifier::Global, "int", true, 1};
  std::vector<double> x, y, z;
  generate_array_data(f, 10, 100, 5, [&](std::int64_t, double v) { x.push_back(v); });
  generate_array_data(f, 10, 100, 5, [&](std::int64_t, double v) { y.push_back(v); });
  generate_array_data(i, 1000, 100, 6, [&](std::int64_t, double v) { z.push_back(v); });
  EXPECT_EQ(x.size(), 40u);
  EXPECT_EQ(x, y);
  for (double v : x) EXPECT_TRUE(v >= 0 && v < 1);
  for (double v : z) EXPECT_TRUE(v >= 0 && v < 100 && v == std::floor(v));
  EXPECT_NE(arg_data_seed(1, 0), arg_data_seed(1, 1));
}

TEST(Backend, FromString) {
  EXPECT_EQ(backend_from_string("synthetic"), BackendKind::Synthetic);
  EXPECT_EQ(backend_from_string("opencl"), BackendKind::OpenCl);
  EXPECT_THROW(backend_from_string("cuda"), Error);
}

TEST(OpenClSmoke, TriadKernel) {
  const char* flag = std::getenv("CLPERF_OPENCL_SMOKE");
  if (flag == nullptr || std::string(flag) != "1") GTEST_SKIP() << "set CLPERF_OPENCL_SMOKE=1 to run on a device";
  auto ex = make_opencl_executor(opencl_options_from_env());
  const auto k = fixtures::load("kernels/affine/bc_triad.cl");
  const auto m = ex->run_kernel(code_for(k), config_for(k, 4096, 256), 100);
  EXPECT_GT(m.mean_time_us, 0);
  EXPECT_LT(m.cv, 0.25);
  EXPECT_EQ(m.backend, "opencl");
}

TEST(OpenCl, MissingLibraryIsLaunchError) {
  OpenClOptions o;
  o.library = "/nonexistent/libOpenCL.so";
  try {
    make_opencl_executor(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LaunchError);
  }
}
