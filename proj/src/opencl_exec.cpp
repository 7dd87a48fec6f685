// OpenCL backend. The runtime is loaded with dlopen, so no OpenCL headers or link-time
// dependency are needed; the few entry points used are declared here.
#include <dlfcn.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <thread>

#include "clperf/error.hpp"
#include "clperf/exec.hpp"

namespace clperf {

namespace {

using cl_int = std::int32_t;
using cl_uint = std::uint32_t;
using cl_ulong = std::uint64_t;
using cl_bitfield = cl_ulong;
using cl_platform_id = struct _cl_platform_id*;
using cl_device_id = struct _cl_device_id*;
using cl_context = struct _cl_context*;
using cl_command_queue = struct _cl_command_queue*;
using cl_program = struct _cl_program*;
using cl_kernel = struct _cl_kernel*;
using cl_mem = struct _cl_mem*;
using cl_event = struct _cl_event*;

constexpr cl_int CL_SUCCESS = 0;
constexpr cl_int CL_COMPLETE = 0;
constexpr cl_int CL_BUILD_PROGRAM_FAILURE = -11;
constexpr cl_bitfield CL_DEVICE_TYPE_ALL = 0xFFFFFFFF;
constexpr cl_bitfield CL_MEM_READ_WRITE = 1 << 0;
constexpr cl_bitfield CL_MEM_COPY_HOST_PTR = 1 << 5;
constexpr cl_bitfield CL_QUEUE_PROFILING_ENABLE = 1 << 1;
constexpr cl_uint CL_PROGRAM_BUILD_LOG = 0x1183;
constexpr cl_uint CL_EVENT_COMMAND_EXECUTION_STATUS = 0x11D3;
constexpr cl_uint CL_PROFILING_COMMAND_START = 0x1282;
constexpr cl_uint CL_PROFILING_COMMAND_END = 0x1283;

struct Api {
  void* lib = nullptr;
  cl_int (*GetPlatformIDs)(cl_uint, cl_platform_id*, cl_uint*);
  cl_int (*GetDeviceIDs)(cl_platform_id, cl_bitfield, cl_uint, cl_device_id*, cl_uint*);
  cl_context (*CreateContext)(const std::intptr_t*, cl_uint, const cl_device_id*, void*, void*, cl_int*);
  cl_command_queue (*CreateCommandQueue)(cl_context, cl_device_id, cl_bitfield, cl_int*);
  cl_program (*CreateProgramWithSource)(cl_context, cl_uint, const char**, const std::size_t*, cl_int*);
  cl_int (*BuildProgram)(cl_program, cl_uint, const cl_device_id*, const char*, void*, void*);
  cl_int (*GetProgramBuildInfo)(cl_program, cl_device_id, cl_uint, std::size_t, void*, std::size_t*);
  cl_kernel (*CreateKernel)(cl_program, const char*, cl_int*);
  cl_mem (*CreateBuffer)(cl_context, cl_bitfield, std::size_t, void*, cl_int*);
  cl_int (*SetKernelArg)(cl_kernel, cl_uint, std::size_t, const void*);
  cl_int (*EnqueueNDRangeKernel)(cl_command_queue, cl_kernel, cl_uint, const std::size_t*, const std::size_t*,
                                 const std::size_t*, cl_uint, const cl_event*, cl_event*);
  cl_int (*EnqueueReadBuffer)(cl_command_queue, cl_mem, cl_uint, std::size_t, std::size_t, void*, cl_uint,
                              const cl_event*, cl_event*);
  cl_int (*GetEventInfo)(cl_event, cl_uint, std::size_t, void*, std::size_t*);
  cl_int (*GetEventProfilingInfo)(cl_event, cl_uint, std::size_t, void*, std::size_t*);
  cl_int (*Flush)(cl_command_queue);
  cl_int (*Finish)(cl_command_queue);
  cl_int (*ReleaseMemObject)(cl_mem);
  cl_int (*ReleaseKernel)(cl_kernel);
  cl_int (*ReleaseProgram)(cl_program);
  cl_int (*ReleaseCommandQueue)(cl_command_queue);
  cl_int (*ReleaseContext)(cl_context);
  cl_int (*ReleaseEvent)(cl_event);
};

template <class F>
void bind(void* lib, F& fn, const char* name) {
  void* p = dlsym(lib, name);
  if (!p) throw Error(ErrorCode::LaunchError, std::string("OpenCL runtime lacks ") + name);
  fn = reinterpret_cast<F>(p);
}

Api load_api(const std::string& path) {
  Api api;
  const char* candidates[] = {"libOpenCL.so.1", "libOpenCL.so"};
  if (!path.empty()) {
    api.lib = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
  } else {
    for (const char* c : candidates) {
      if ((api.lib = dlopen(c, RTLD_NOW | RTLD_LOCAL))) break;
    }
  }
  if (!api.lib) throw Error(ErrorCode::LaunchError, "cannot load the OpenCL runtime");
  bind(api.lib, api.GetPlatformIDs, "clGetPlatformIDs");
  bind(api.lib, api.GetDeviceIDs, "clGetDeviceIDs");
  bind(api.lib, api.CreateContext, "clCreateContext");
  bind(api.lib, api.CreateCommandQueue, "clCreateCommandQueue");
  bind(api.lib, api.CreateProgramWithSource, "clCreateProgramWithSource");
  bind(api.lib, api.BuildProgram, "clBuildProgram");
  bind(api.lib, api.GetProgramBuildInfo, "clGetProgramBuildInfo");
  bind(api.lib, api.CreateKernel, "clCreateKernel");
  bind(api.lib, api.CreateBuffer, "clCreateBuffer");
  bind(api.lib, api.SetKernelArg, "clSetKernelArg");
  bind(api.lib, api.EnqueueNDRangeKernel, "clEnqueueNDRangeKernel");
  bind(api.lib, api.EnqueueReadBuffer, "clEnqueueReadBuffer");
  bind(api.lib, api.GetEventInfo, "clGetEventInfo");
  bind(api.lib, api.GetEventProfilingInfo, "clGetEventProfilingInfo");
  bind(api.lib, api.Flush, "clFlush");
  bind(api.lib, api.Finish, "clFinish");
  bind(api.lib, api.ReleaseMemObject, "clReleaseMemObject");
  bind(api.lib, api.ReleaseKernel, "clReleaseKernel");
  bind(api.lib, api.ReleaseProgram, "clReleaseProgram");
  bind(api.lib, api.ReleaseCommandQueue, "clReleaseCommandQueue");
  bind(api.lib, api.ReleaseContext, "clReleaseContext");
  bind(api.lib, api.ReleaseEvent, "clReleaseEvent");
  return api;
}

ErrorCode map_error(cl_int err) {
  if (err == -4 || err == -5 || err == -6) return ErrorCode::OutOfMemory;
  return ErrorCode::LaunchError;
}

void check(cl_int err, const char* what) {
  if (err != CL_SUCCESS) throw Error(map_error(err), std::string(what) + " failed with OpenCL error " + std::to_string(err));
}

std::uint16_t float_to_half(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  const std::uint32_t sign = (x >> 16) & 0x8000;
  const int exp = static_cast<int>((x >> 23) & 0xFF) - 127 + 15;
  const std::uint32_t mant = x & 0x7FFFFF;
  if (exp <= 0) return static_cast<std::uint16_t>(sign);
  if (exp >= 31) return static_cast<std::uint16_t>(sign | 0x7C00);
  return static_cast<std::uint16_t>(sign | (static_cast<std::uint32_t>(exp) << 10) | (mant >> 13));
}

int scalar_size(std::string_view t) {
  if (t == "char" || t == "uchar" || t == "bool") return 1;
  if (t == "short" || t == "ushort" || t == "half") return 2;
  if (t == "long" || t == "ulong" || t == "double") return 8;
  return 4;
}

// Writes one value of scalar type `t` at `dst`.
void store_value(std::string_view t, double v, unsigned char* dst) {
  auto put = [dst](auto x) { std::memcpy(dst, &x, sizeof(x)); };
  if (t == "float") put(static_cast<float>(v));
  else if (t == "double") put(v);
  else if (t == "half") put(float_to_half(static_cast<float>(v)));
  else if (t == "char") put(static_cast<std::int8_t>(v));
  else if (t == "uchar" || t == "bool") put(static_cast<std::uint8_t>(v));
  else if (t == "short") put(static_cast<std::int16_t>(v));
  else if (t == "ushort") put(static_cast<std::uint16_t>(v));
  else if (t == "int") put(static_cast<std::int32_t>(v));
  else if (t == "uint") put(static_cast<std::uint32_t>(v));
  else if (t == "long") put(static_cast<std::int64_t>(v));
  else put(static_cast<std::uint64_t>(v));
}

// Vectors of width 3 occupy four lanes in memory.
int storage_lanes(int width) { return width == 3 ? 4 : width; }

class OpenClExecutor : public Executor {
 public:
  explicit OpenClExecutor(const OpenClOptions& opts) : opts_(opts), api_(load_api(opts.library)) {
    cl_uint np = 0;
    check(api_.GetPlatformIDs(0, nullptr, &np), "clGetPlatformIDs");
    if (np == 0 || opts.platform < 0 || static_cast<cl_uint>(opts.platform) >= np) {
      throw Error(ErrorCode::LaunchError, "OpenCL platform " + std::to_string(opts.platform) + " not available");
    }
    std::vector<cl_platform_id> platforms(np);
    check(api_.GetPlatformIDs(np, platforms.data(), nullptr), "clGetPlatformIDs");
    cl_uint nd = 0;
    check(api_.GetDeviceIDs(platforms[static_cast<std::size_t>(opts.platform)], CL_DEVICE_TYPE_ALL, 0, nullptr, &nd),
          "clGetDeviceIDs");
    if (nd == 0 || opts.device < 0 || static_cast<cl_uint>(opts.device) >= nd) {
      throw Error(ErrorCode::LaunchError, "OpenCL device " + std::to_string(opts.device) + " not available");
    }
    std::vector<cl_device_id> devices(nd);
    check(api_.GetDeviceIDs(platforms[static_cast<std::size_t>(opts.platform)], CL_DEVICE_TYPE_ALL, nd,
                            devices.data(), nullptr),
          "clGetDeviceIDs");
    device_ = devices[static_cast<std::size_t>(opts.device)];
    cl_int err = 0;
    ctx_ = api_.CreateContext(nullptr, 1, &device_, nullptr, nullptr, &err);
    check(err, "clCreateContext");
    queue_ = api_.CreateCommandQueue(ctx_, device_, CL_QUEUE_PROFILING_ENABLE, &err);
    check(err, "clCreateCommandQueue");
  }

  ~OpenClExecutor() override {
    for (auto& [key, p] : programs_) {
      api_.ReleaseKernel(p.second);
      api_.ReleaseProgram(p.first);
    }
    if (queue_) api_.ReleaseCommandQueue(queue_);
    if (ctx_) api_.ReleaseContext(ctx_);
  }

  std::string_view backend() const override { return "opencl"; }

  Measurement run_kernel(const KernelCode& code, const LaunchConfig& cfg, int reps) override {
    if (reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be at least 1");
    cl_kernel k = kernel_for(code.source, code.entry_name);
    Buffers bufs(api_);
    set_args(k, code.sig, cfg, bufs, 0);
    for (int i = 0; i < opts_.warmup_runs; ++i) launch(k, cfg);
    std::vector<double> times;
    for (int r = 0; r < reps; ++r) times.push_back(launch(k, cfg));
    return summarize_runs(std::move(times), "opencl");
  }

  std::vector<AccessExtent> probe_run(const InstrumentedKernel& ik, const LaunchConfig& cfg) override {
    cl_kernel k = kernel_for(ik.text, ik.entry_name);
    Buffers bufs(api_);
    const cl_uint next = set_args(k, ik.sig, cfg, bufs, 0);
    const int slots = ik.slot_count();
    std::vector<std::int32_t> ext(static_cast<std::size_t>(2 * slots));
    for (int s = 0; s < slots; ++s) {
      ext[static_cast<std::size_t>(2 * s)] = kExtentInitMin;
      ext[static_cast<std::size_t>(2 * s + 1)] = 0;
    }
    cl_mem eb = bufs.create(ctx_, ext.size() * sizeof(std::int32_t), ext.data());
    check(api_.SetKernelArg(k, next, sizeof(cl_mem), &eb), "clSetKernelArg");
    const cl_int ns = slots;
    check(api_.SetKernelArg(k, next + 1, sizeof(cl_int), &ns), "clSetKernelArg");
    launch(k, cfg);
    check(api_.EnqueueReadBuffer(queue_, eb, 1, 0, ext.size() * sizeof(std::int32_t), ext.data(), 0, nullptr,
                                 nullptr),
          "clEnqueueReadBuffer");
    std::vector<AccessExtent> out;
    for (const auto& h : ik.hook_layout) {
      AccessExtent e;
      e.array_position = h.array_position;
      e.min_index = ext[static_cast<std::size_t>(2 * h.slot)];
      e.max_index = ext[static_cast<std::size_t>(2 * h.slot + 1)];
      e.accessed = e.min_index <= e.max_index;
      out.push_back(e);
    }
    return out;
  }

 private:
  struct Buffers {
    explicit Buffers(const Api& a) : api(a) {}
    ~Buffers() {
      for (cl_mem m : mems) api.ReleaseMemObject(m);
    }
    cl_mem create(cl_context ctx, std::size_t bytes, void* host) {
      cl_int err = 0;
      cl_mem m = api.CreateBuffer(ctx, CL_MEM_READ_WRITE | (host ? CL_MEM_COPY_HOST_PTR : 0), bytes, host, &err);
      check(err, "clCreateBuffer");
      mems.push_back(m);
      return m;
    }
    const Api& api;
    std::vector<cl_mem> mems;
  };

  cl_kernel kernel_for(const std::string& source, const std::string& entry) {
    const std::string key = entry + '\0' + source;
    if (auto it = programs_.find(key); it != programs_.end()) return it->second.second;
    cl_int err = 0;
    const char* text = source.c_str();
    const std::size_t len = source.size();
    cl_program prog = api_.CreateProgramWithSource(ctx_, 1, &text, &len, &err);
    check(err, "clCreateProgramWithSource");
    err = api_.BuildProgram(prog, 1, &device_, "", nullptr, nullptr);
    if (err != CL_SUCCESS) {
      std::size_t log_len = 0;
      api_.GetProgramBuildInfo(prog, device_, CL_PROGRAM_BUILD_LOG, 0, nullptr, &log_len);
      std::string log(log_len, '\0');
      api_.GetProgramBuildInfo(prog, device_, CL_PROGRAM_BUILD_LOG, log_len, log.data(), nullptr);
      api_.ReleaseProgram(prog);
      if (err == CL_BUILD_PROGRAM_FAILURE || err == -42 /* invalid build options */ || err == -43) {
        throw Error(ErrorCode::CompileError, log);
      }
      throw Error(map_error(err), "clBuildProgram failed with OpenCL error " + std::to_string(err) + "\n" + log);
    }
    cl_kernel k = api_.CreateKernel(prog, entry.c_str(), &err);
    if (err != CL_SUCCESS) {
      api_.ReleaseProgram(prog);
      check(err, "clCreateKernel");
    }
    programs_.emplace(key, std::make_pair(prog, k));
    return k;
  }

  cl_uint set_args(cl_kernel k, const KernelSignature& sig, const LaunchConfig& cfg, Buffers& bufs, cl_uint first) {
    std::size_t ai = 0;
    std::size_t si = 0;
    cl_uint idx = first;
    for (const auto& a : sig.args) {
      const std::string_view t = canonical_scalar(a.base_type);
      const int elem = scalar_size(t);
      const int lanes = storage_lanes(a.vector_width);
      if (a.is_array) {
        const std::int64_t count = cfg.input.array_sizes.at(ai++);
        const std::size_t bytes = static_cast<std::size_t>(count) * static_cast<std::size_t>(elem * lanes);
        if (a.qualifier == Qualifier::Local) {
          check(api_.SetKernelArg(k, idx++, bytes, nullptr), "clSetKernelArg");
          continue;
        }
        std::vector<unsigned char> host(bytes);
        generate_array_data(a, count, cfg.exec.gsize, arg_data_seed(cfg.data_seed, a.position),
                            [&](std::int64_t i, double v) {
                              const std::int64_t e = i / a.vector_width;
                              const std::int64_t l = i % a.vector_width;
                              store_value(t, v, host.data() + (e * lanes + l) * elem);
                            });
        cl_mem m = bufs.create(ctx_, bytes, host.data());
        check(api_.SetKernelArg(k, idx++, sizeof(cl_mem), &m), "clSetKernelArg");
      } else {
        const double v = cfg.input.scalar_values.at(si++);
        std::vector<unsigned char> bytes(static_cast<std::size_t>(elem * lanes));
        for (int l = 0; l < a.vector_width; ++l) store_value(t, v, bytes.data() + l * elem);
        check(api_.SetKernelArg(k, idx++, bytes.size(), bytes.data()), "clSetKernelArg");
      }
    }
    return idx;
  }

  // One timed launch; returns device time in microseconds.
  double launch(cl_kernel k, const LaunchConfig& cfg) {
    const std::size_t global = static_cast<std::size_t>(cfg.exec.gsize);
    const std::size_t local = static_cast<std::size_t>(cfg.exec.lsize);
    cl_event ev = nullptr;
    check(api_.EnqueueNDRangeKernel(queue_, k, 1, nullptr, &global, &local, 0, nullptr, &ev),
          "clEnqueueNDRangeKernel");
    api_.Flush(queue_);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(opts_.timeout_s);
    cl_int status = 1;
    while (true) {
      check(api_.GetEventInfo(ev, CL_EVENT_COMMAND_EXECUTION_STATUS, sizeof(status), &status, nullptr),
            "clGetEventInfo");
      if (status <= CL_COMPLETE) break;
      if (std::chrono::steady_clock::now() > deadline) {
        api_.ReleaseEvent(ev);
        throw Error(ErrorCode::Timeout, "kernel exceeded " + std::to_string(opts_.timeout_s) + " s");
      }
      std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
    if (status < 0) {
      api_.ReleaseEvent(ev);
      throw Error(map_error(status), "kernel execution failed with OpenCL error " + std::to_string(status));
    }
    cl_ulong start = 0, end = 0;
    check(api_.GetEventProfilingInfo(ev, CL_PROFILING_COMMAND_START, sizeof(start), &start, nullptr),
          "clGetEventProfilingInfo");
    check(api_.GetEventProfilingInfo(ev, CL_PROFILING_COMMAND_END, sizeof(end), &end, nullptr),
          "clGetEventProfilingInfo");
    api_.ReleaseEvent(ev);
    return static_cast<double>(end - start) / 1000.0;
  }

  OpenClOptions opts_;
  Api api_;
  cl_device_id device_ = nullptr;
  cl_context ctx_ = nullptr;
  cl_command_queue queue_ = nullptr;
  std::map<std::string, std::pair<cl_program, cl_kernel>> programs_;
};

}  // namespace

std::unique_ptr<Executor> make_opencl_executor(const OpenClOptions& opts) {
  return std::make_unique<OpenClExecutor>(opts);
}

}  // namespace clperf
