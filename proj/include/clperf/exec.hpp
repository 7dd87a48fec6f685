#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "clperf/inputsel.hpp"
#include "clperf/launchsample.hpp"
#include "clperf/meminstr.hpp"
#include "clperf/sigparse.hpp"

namespace clperf {

/// Kernel inputs plus execution settings: one launch configuration.
struct LaunchConfig {
  std::string kernel_id;
  InputSetting input;
  ExecSetting exec;
  std::uint64_t data_seed = 0;
};

/// Kernel text handed to a backend.
struct KernelCode {
  std::string kernel_id;
  std::string entry_name;
  std::string source;
  KernelSignature sig;
};

struct Measurement {
  double mean_time_us = 0;
  int repetitions = 0;
  std::string backend;
  std::vector<double> run_times_us;
  double cv = 0;  // sample standard deviation / mean
  bool noisy = false;
};

inline constexpr double kNoisyCv = 0.25;

/// Mean, coefficient of variation and noisy flag of per-run times.
Measurement summarize_runs(std::vector<double> run_times_us, std::string backend);

/// Fills an array argument with reproducible random data: floats uniform in [0, 1),
/// integers uniform in [0, gsize). `sink(flat_index, value)` receives count * width values.
void generate_array_data(const ArgSpec& arg, std::int64_t count, std::int64_t gsize, std::uint64_t seed,
                         const std::function<void(std::int64_t, double)>& sink);

/// Seed for one argument's data within a launch.
std::uint64_t arg_data_seed(std::uint64_t data_seed, int position);

class Executor {
 public:
  virtual ~Executor() = default;
  virtual std::string_view backend() const = 0;

  /// Mean device time over `reps` runs. Throws Error(CompileError | LaunchError | Timeout | OutOfMemory).
  virtual Measurement run_kernel(const KernelCode& code, const LaunchConfig& cfg, int reps) = 0;

  /// Runs an instrumented kernel once and reads back the extent buffer, one entry per hook slot.
  virtual std::vector<AccessExtent> probe_run(const InstrumentedKernel& ik, const LaunchConfig& cfg) = 0;
};

/// t = alpha * ceil(n_wg / n_sm) * w + beta, w = w0 + w_lane * lsize + w_elem * sum(array sizes) / gsize.
struct SyntheticModel {
  double alpha = 1.0;
  double beta = 0.5;
  double w0 = 1.0;
  double w_lane = 0.0;
  double w_elem = 0.0;
};

struct InterpreterLimits {
  std::int64_t step_limit = 400'000'000;
};

/// Deterministic timing model plus CPU interpretation for probes.
class SyntheticExecutor : public Executor {
 public:
  explicit SyntheticExecutor(DeviceProfile dev = {}, SyntheticModel model = {}, InterpreterLimits limits = {});
  ~SyntheticExecutor() override;

  std::string_view backend() const override { return "synthetic"; }
  Measurement run_kernel(const KernelCode& code, const LaunchConfig& cfg, int reps) override;
  std::vector<AccessExtent> probe_run(const InstrumentedKernel& ik, const LaunchConfig& cfg) override;

  double model_time_us(const LaunchConfig& cfg) const;
  const SyntheticModel& model() const { return model_; }

 private:
  struct Cache;
  DeviceProfile dev_;
  SyntheticModel model_;
  InterpreterLimits limits_;
  std::unique_ptr<Cache> cache_;
};

struct OpenClOptions {
  int platform = 0;
  int device = 0;
  double timeout_s = 10.0;
  int warmup_runs = 1;
  std::string library;  // empty: the system libOpenCL
};

/// Platform and device indices from CLPERF_PLATFORM / CLPERF_DEVICE when set.
OpenClOptions opencl_options_from_env(OpenClOptions base = {});

/// Real device backend. Throws Error(LaunchError) when no OpenCL runtime or device is available.
std::unique_ptr<Executor> make_opencl_executor(const OpenClOptions& opts);

enum class BackendKind { Synthetic, OpenCl };
BackendKind backend_from_string(std::string_view s);

}  // namespace clperf
