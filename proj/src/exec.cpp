#include "clperf/exec.hpp"

#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <numeric>

#include "clperf/error.hpp"
#include "clperf/interp.hpp"
#include "clperf/rng.hpp"

namespace clperf {

Measurement summarize_runs(std::vector<double> run_times_us, std::string backend) {
  if (run_times_us.empty()) throw Error(ErrorCode::InvalidArgument, "no runs to summarize");
  Measurement m;
  m.backend = std::move(backend);
  m.repetitions = static_cast<int>(run_times_us.size());
  const double n = static_cast<double>(run_times_us.size());
  m.mean_time_us = std::accumulate(run_times_us.begin(), run_times_us.end(), 0.0) / n;
  if (run_times_us.size() > 1 && m.mean_time_us > 0) {
    double ss = 0;
    for (double t : run_times_us) ss += (t - m.mean_time_us) * (t - m.mean_time_us);
    m.cv = std::sqrt(ss / (n - 1)) / m.mean_time_us;
  }
  m.noisy = m.cv > kNoisyCv;
  m.run_times_us = std::move(run_times_us);
  return m;
}

std::uint64_t arg_data_seed(std::uint64_t data_seed, int position) {
  return derive_seed(data_seed, "arg", static_cast<std::uint64_t>(position));
}

void generate_array_data(const ArgSpec& arg, std::int64_t count, std::int64_t gsize, std::uint64_t seed,
                         const std::function<void(std::int64_t, double)>& sink) {
  Rng rng(seed);
  const std::int64_t n = count * arg.vector_width;
  if (is_float_type(arg.base_type)) {
    for (std::int64_t i = 0; i < n; ++i) sink(i, rng.uniform());
  } else {
    const auto hi = static_cast<std::uint64_t>(std::max<std::int64_t>(gsize, 1));
    for (std::int64_t i = 0; i < n; ++i) sink(i, static_cast<double>(rng.below(hi)));
  }
}

BackendKind backend_from_string(std::string_view s) {
  if (s == "synthetic") return BackendKind::Synthetic;
  if (s == "opencl") return BackendKind::OpenCl;
  throw Error(ErrorCode::ConfigError, "unknown backend '" + std::string(s) + "'");
}

OpenClOptions opencl_options_from_env(OpenClOptions base) {
  if (const char* p = std::getenv("CLPERF_PLATFORM")) base.platform = std::atoi(p);
  if (const char* d = std::getenv("CLPERF_DEVICE")) base.device = std::atoi(d);
  return base;
}

// ---- synthetic backend ----

struct SyntheticExecutor::Cache {
  std::mutex mu;
  std::map<std::string, std::shared_ptr<const interp::Program>> programs;
};

SyntheticExecutor::SyntheticExecutor(DeviceProfile dev, SyntheticModel model, InterpreterLimits limits)
    : dev_(dev), model_(model), limits_(limits), cache_(std::make_unique<Cache>()) {}

SyntheticExecutor::~SyntheticExecutor() = default;

double SyntheticExecutor::model_time_us(const LaunchConfig& cfg) const {
  const ExecSetting& e = cfg.exec;
  double total_elems = 0;
  for (auto s : cfg.input.array_sizes) total_elems += static_cast<double>(s);
  const double w = model_.w0 + model_.w_lane * static_cast<double>(e.lsize) +
                   model_.w_elem * total_elems / static_cast<double>(e.gsize);
  const double waves = static_cast<double>((e.n_wg + dev_.n_sm - 1) / dev_.n_sm);
  return model_.alpha * waves * w + model_.beta;
}

Measurement SyntheticExecutor::run_kernel(const KernelCode& code, const LaunchConfig& cfg, int reps) {
  if (reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be at least 1");
  const ExecSetting& e = cfg.exec;
  if (e.lsize <= 0 || e.gsize != e.n_wg * e.lsize) {
    throw Error(ErrorCode::LaunchError, "gsize must equal n_wg * lsize");
  }
  if (cfg.input.array_sizes.size() != arrays_of(code.sig).size() ||
      cfg.input.scalar_values.size() != scalars_of(code.sig).size()) {
    throw Error(ErrorCode::LaunchError, "input setting does not match the kernel signature");
  }
  const double t = model_time_us(cfg);
  if (!(t > 0)) throw Error(ErrorCode::LaunchError, "synthetic model produced a non-positive time");
  return summarize_runs(std::vector<double>(static_cast<std::size_t>(reps), t), "synthetic");
}

std::vector<AccessExtent> SyntheticExecutor::probe_run(const InstrumentedKernel& ik, const LaunchConfig& cfg) {
  std::shared_ptr<const interp::Program> prog;
  {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->programs.find(ik.text);
    if (it == cache_->programs.end()) {
      try {
        prog = std::make_shared<const interp::Program>(interp::Program::compile(ik.text));
      } catch (const Error& err) {
        throw Error(ErrorCode::CompileError, err.what());
      }
      cache_->programs.emplace(ik.text, prog);
    } else {
      prog = it->second;
    }
  }
  const auto& sig = ik.sig;
  interp::Memory mem;
  std::vector<interp::ArgValue> args;
  std::size_t ai = 0;
  std::size_t si = 0;
  for (const auto& a : sig.args) {
    if (a.is_array) {
      const std::int64_t count = cfg.input.array_sizes.at(ai++);
      if (a.qualifier == Qualifier::Local) {
        args.push_back(interp::ArgValue::local(count));
        continue;
      }
      const interp::Type t = interp::parse_type_name(canonical_scalar(a.base_type));
      if (a.vector_width > 4) throw Error(ErrorCode::Unsupported, "vector width above 4");
      const int id = mem.add(t.scalar, a.vector_width, interp::Space::Global, count);
      auto& buf = mem.buffers[static_cast<std::size_t>(id)];
      generate_array_data(a, count, cfg.exec.gsize, arg_data_seed(cfg.data_seed, a.position),
                          [&](std::int64_t i, double v) { buf.set_f(i / a.vector_width, v, i % a.vector_width); });
      args.push_back(interp::ArgValue::buf(id));
    } else {
      args.push_back(interp::ArgValue::scalar(cfg.input.scalar_values.at(si++)));
    }
  }
  const int slots = ik.slot_count();
  const int ext = mem.add(interp::Scalar::Int, 1, interp::Space::Global, 2 * slots);
  for (int s = 0; s < slots; ++s) {
    mem.buffers[static_cast<std::size_t>(ext)].set_i(2 * s, kExtentInitMin);
    mem.buffers[static_cast<std::size_t>(ext)].set_i(2 * s + 1, 0);
  }
  args.push_back(interp::ArgValue::buf(ext));
  args.push_back(interp::ArgValue::scalar(slots));

  interp::LaunchOptions opts;
  opts.global_size = cfg.exec.gsize;
  opts.local_size = cfg.exec.lsize;
  opts.bounds = interp::BoundsPolicy::Tolerant;
  opts.step_limit = limits_.step_limit;
  try {
    prog->launch(ik.entry_name, mem, args, opts);
  } catch (const Error& err) {
    if (err.code() == ErrorCode::Timeout) throw;
    throw Error(ErrorCode::LaunchError, err.what());
  }
  std::vector<AccessExtent> out;
  const auto& eb = mem.buffers[static_cast<std::size_t>(ext)];
  for (const auto& h : ik.hook_layout) {
    AccessExtent e;
    e.array_position = h.array_position;
    e.min_index = eb.get_i(2 * h.slot);
    e.max_index = eb.get_i(2 * h.slot + 1);
    e.accessed = e.min_index <= e.max_index;
    out.push_back(e);
  }
  return out;
}

}  // namespace clperf
