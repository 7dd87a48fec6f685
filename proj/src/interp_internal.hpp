#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "clperf/interp.hpp"

namespace clperf::interp {

enum class NK : std::uint8_t {
  // expressions
  IntLit,
  FloatLit,
  Local,    // a = slot
  Global,   // a = program-scope slot
  Unary,    // op, kids[0]
  Binary,   // op, kids[0], kids[1]
  Logical,  // op (&& or ||), short-circuit
  Assign,   // op ("=" or compound), kids[0] lvalue, kids[1]
  Ternary,
  Index,     // kids[0][kids[1]]
  Call,      // a = function index
  Builtin,   // a = builtin id, b = vector width for vload/vstore
  Cast,      // type, kids[0]
  VecLit,    // type, kids
  Swizzle,   // kids[0], lanes
  Comma,
  // statements
  Block,
  Decl,      // type, a = slot, kids[0] optional init, arr_len >= 0 for arrays
  ExprStmt,
  If,
  For,       // kids: init (may be null), cond (may be null), step (may be null), body
  While,
  DoWhile,
  Break,
  Continue,
  Return,
  Empty,
};

enum class Op : std::uint8_t {
  None,
  Add, Sub, Mul, Div, Mod, Shl, Shr, BitAnd, BitOr, BitXor,
  Lt, Gt, Le, Ge, Eq, Ne,
  LogAnd, LogOr,
  Neg, Plus, Not, BitNot, PreInc, PreDec, PostInc, PostDec, Deref, AddrOf,
};

struct Node {
  NK kind = NK::Empty;
  Op op = Op::None;
  Type type;                 // literal / cast / declaration type
  std::int64_t a = 0;        // slot, function index, builtin id, int literal
  std::int64_t b = 0;
  double f = 0;              // float literal
  std::int64_t arr_len = -1; // declared array length
  std::vector<std::uint8_t> lanes;  // swizzle lanes
  std::vector<std::unique_ptr<Node>> kids;
  int line = 0;
};

struct Function {
  std::string name;
  bool is_kernel = false;
  Type ret;
  std::vector<Type> params;
  int nslots = 0;
  std::unique_ptr<Node> body;  // null for prototypes
};

struct GlobalVar {
  std::string name;
  Type type;
  std::int64_t arr_len = -1;
  std::vector<std::unique_ptr<Node>> init;  // scalar: one element; arrays: initializer list
};

struct ProgramImpl {
  std::vector<Function> functions;
  std::vector<GlobalVar> globals;
  std::map<std::string, int, std::less<>> function_index;
};

enum class BuiltinId : int {
  GetGlobalId, GetLocalId, GetGroupId, GetGlobalSize, GetLocalSize, GetNumGroups, GetWorkDim, GetGlobalOffset,
  Barrier,
  Sqrt, Rsqrt, Exp, Exp2, Log, Log2, Log10, Sin, Cos, Tan, Fabs, Floor, Ceil, Round, Trunc, Atan, Tanh,
  Pow, Fmin, Fmax, Fmod, Atan2, Hypot,
  Mad, Fma, Clamp, Mix,
  Abs, Min, Max, Mul24, Mad24, Sign,
  Dot, Length,
  AtomicAdd, AtomicSub, AtomicXchg, AtomicMin, AtomicMax, AtomicAnd, AtomicOr, AtomicXor, AtomicInc, AtomicDec,
  AtomicCmpxchg,
  VLoad, VStore,
  Convert,  // type carried on the node
};

}  // namespace clperf::interp
