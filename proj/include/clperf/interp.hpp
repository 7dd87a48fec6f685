#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace clperf::interp {

/// A CPU interpreter for a subset of OpenCL C, used to run kernels without a device.
///
/// Supported: scalar and 2/3/4-wide vector arithmetic, pointers into buffers with
/// pointer arithmetic, private/local arrays, program-scope constants, helper
/// functions, object-like #define macros, the common math/integer builtins,
/// 32-bit atomics and vload/vstore. Work-items run one after another in
/// global-id order, so barriers are no-ops; values that flow between work-items
/// through local memory are not faithful, but index arithmetic is.

enum class Scalar : std::uint8_t { Bool, Char, UChar, Short, UShort, Int, UInt, Long, ULong, Half, Float, Double, Void };
enum class Space : std::uint8_t { Private, Global, Local, Constant };

struct Type {
  Scalar scalar = Scalar::Int;
  std::uint8_t width = 1;
  bool pointer = false;
  Space space = Space::Private;

  bool operator==(const Type&) const = default;
};

bool is_float(Scalar s);
bool is_unsigned(Scalar s);
int scalar_bytes(Scalar s);
/// Parses an OpenCL type name such as "float4", "uint" or "size_t".
Type parse_type_name(std::string_view name);

union Lane {
  std::int64_t i;
  double f;
};

/// A typed device buffer; element k, lane j lives at data[k * width + j].
struct Buffer {
  Scalar scalar = Scalar::Float;
  int width = 1;
  Space space = Space::Global;
  std::int64_t count = 0;
  std::vector<Lane> data;

  double get_f(std::int64_t k, int lane = 0) const;
  std::int64_t get_i(std::int64_t k, int lane = 0) const;
  void set_f(std::int64_t k, double v, int lane = 0);
  void set_i(std::int64_t k, std::int64_t v, int lane = 0);
};

/// Buffers visible to a launch. Host buffers keep their ids across launches.
struct Memory {
  std::vector<Buffer> buffers;

  int add(Scalar scalar, int width, Space space, std::int64_t count);
};

/// A kernel argument set by the host.
struct ArgValue {
  enum class Kind { Buffer, Scalar, LocalCount } kind = Kind::Scalar;
  int buffer = -1;
  double value = 0;             // scalar arguments, converted to the parameter type
  std::int64_t local_count = 0;  // elements for local pointer arguments

  static ArgValue buf(int id) { return {Kind::Buffer, id, 0, 0}; }
  static ArgValue scalar(double v) { return {Kind::Scalar, -1, v, 0}; }
  static ArgValue local(std::int64_t n) { return {Kind::LocalCount, -1, 0, n}; }
};

/// Notified of every element access to a host buffer, before the bounds check.
class AccessObserver {
 public:
  virtual ~AccessObserver() = default;
  virtual void on_access(int buffer, std::int64_t index, bool is_write) = 0;
};

enum class BoundsPolicy {
  Strict,    // out-of-bounds access throws Error(OutOfBounds)
  Tolerant,  // reads yield zero, writes are dropped, violations are counted
};

struct LaunchOptions {
  std::int64_t global_size = 1;
  std::int64_t local_size = 1;
  BoundsPolicy bounds = BoundsPolicy::Strict;
  std::int64_t step_limit = 2'000'000'000;  // statements; exceeding it throws Error(Timeout)
  AccessObserver* observer = nullptr;
};

struct LaunchStats {
  std::int64_t steps = 0;
  std::int64_t bounds_violations = 0;
};

struct ProgramImpl;

/// A parsed translation unit. Compilation throws Error(ParseError) or Error(Unsupported).
class Program {
 public:
  static Program compile(std::string_view source);

  bool has_kernel(std::string_view name) const;
  /// Parameter types of a kernel, in order.
  std::vector<Type> kernel_params(std::string_view name) const;

  LaunchStats launch(std::string_view kernel, Memory& mem, const std::vector<ArgValue>& args,
                     const LaunchOptions& opts) const;

 private:
  std::shared_ptr<const ProgramImpl> impl_;
};

}  // namespace clperf::interp
