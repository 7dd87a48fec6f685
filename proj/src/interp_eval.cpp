#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_map>

#include "clperf/error.hpp"
#include "interp_internal.hpp"

namespace clperf::interp {

namespace {

std::int64_t wrap(std::int64_t v, Scalar s) {
  switch (s) {
    case Scalar::Bool: return v != 0;
    case Scalar::Char: return static_cast<std::int8_t>(v);
    case Scalar::UChar: return static_cast<std::uint8_t>(v);
    case Scalar::Short: return static_cast<std::int16_t>(v);
    case Scalar::UShort: return static_cast<std::uint16_t>(v);
    case Scalar::Int: return static_cast<std::int32_t>(v);
    case Scalar::UInt: return static_cast<std::uint32_t>(v);
    default: return v;
  }
}

double round_float(double f, Scalar s) { return (s == Scalar::Float || s == Scalar::Half) ? static_cast<float>(f) : f; }

std::int64_t float_to_int(double f) {
  if (std::isnan(f)) return 0;
  if (f >= 9.2233720368547758e18) return std::numeric_limits<std::int64_t>::max();
  if (f <= -9.2233720368547758e18) return std::numeric_limits<std::int64_t>::min();
  return static_cast<std::int64_t>(f);
}

double int_to_float(std::int64_t i, Scalar s) {
  return s == Scalar::ULong ? static_cast<double>(static_cast<std::uint64_t>(i)) : static_cast<double>(i);
}

Scalar promote(Scalar s) {
  switch (s) {
    case Scalar::Bool:
    case Scalar::Char:
    case Scalar::UChar:
    case Scalar::Short:
    case Scalar::UShort: return Scalar::Int;
    case Scalar::Half: return Scalar::Float;
    default: return s;
  }
}

Scalar common_scalar(Scalar a, Scalar b) {
  a = promote(a);
  b = promote(b);
  if (a == Scalar::Double || b == Scalar::Double) return Scalar::Double;
  if (a == Scalar::Float || b == Scalar::Float) return Scalar::Float;
  if (a == b) return a;
  if (a == Scalar::ULong || b == Scalar::ULong) return Scalar::ULong;
  if (a == Scalar::Long || b == Scalar::Long) return Scalar::Long;
  return Scalar::UInt;  // int with uint
}

Scalar mask_scalar(Scalar s) {
  switch (scalar_bytes(s)) {
    case 1: return Scalar::Char;
    case 2: return Scalar::Short;
    case 8: return Scalar::Long;
    default: return Scalar::Int;
  }
}

struct Value {
  Type type;
  std::int32_t buf = -1;
  Lane v[4] = {};

  bool is_ptr() const { return type.pointer; }
  int width() const { return type.width; }
  std::int64_t idx() const { return v[0].i; }
};

Value make_int(Scalar s, std::int64_t i) {
  Value r;
  r.type = Type{s};
  r.v[0].i = wrap(i, s);
  return r;
}

Value make_float(Scalar s, double f) {
  Value r;
  r.type = Type{s};
  r.v[0].f = round_float(f, s);
  return r;
}

double lane_f(const Value& x, int l) {
  return is_float(x.type.scalar) ? x.v[l].f : int_to_float(x.v[l].i, x.type.scalar);
}

std::int64_t lane_i(const Value& x, int l) {
  return is_float(x.type.scalar) ? float_to_int(x.v[l].f) : x.v[l].i;
}

Value convert(const Value& x, const Type& t) {
  if (t.pointer) {
    Value r = x;
    if (!x.is_ptr()) {
      if (lane_i(x, 0) != 0) throw Error(ErrorCode::Unsupported, "integer to pointer conversion");
      r.buf = -1;
      r.v[0].i = 0;
    }
    r.type = t;
    return r;
  }
  if (x.is_ptr()) throw Error(ErrorCode::Unsupported, "pointer to value conversion");
  if (t.scalar == Scalar::Void) return Value{};
  Value r;
  r.type = Type{t.scalar, t.width, false, Space::Private};
  if (x.width() != 1 && x.width() != t.width) {
    throw Error(ErrorCode::Unsupported, "vector width mismatch in conversion");
  }
  for (int l = 0; l < t.width; ++l) {
    const int sl = x.width() == 1 ? 0 : l;
    if (is_float(t.scalar)) {
      r.v[l].f = round_float(lane_f(x, sl), t.scalar);
    } else {
      r.v[l].i = wrap(lane_i(x, sl), t.scalar);
    }
  }
  return r;
}

bool truthy(const Value& x) {
  if (x.is_ptr()) return x.buf >= 0;
  return is_float(x.type.scalar) ? x.v[0].f != 0.0 : x.v[0].i != 0;
}

std::int64_t int_op(Op op, std::int64_t x, std::int64_t y, Scalar s) {
  const auto ux = static_cast<std::uint64_t>(x);
  const auto uy = static_cast<std::uint64_t>(y);
  const bool u64 = s == Scalar::ULong;
  const int bits = scalar_bytes(s) * 8;
  switch (op) {
    case Op::Add: return wrap(static_cast<std::int64_t>(ux + uy), s);
    case Op::Sub: return wrap(static_cast<std::int64_t>(ux - uy), s);
    case Op::Mul: return wrap(static_cast<std::int64_t>(ux * uy), s);
    case Op::Div:
      if (y == 0) return 0;
      if (u64) return static_cast<std::int64_t>(ux / uy);
      if (x == std::numeric_limits<std::int64_t>::min() && y == -1) return x;
      return wrap(x / y, s);
    case Op::Mod:
      if (y == 0) return 0;
      if (u64) return static_cast<std::int64_t>(ux % uy);
      if (y == -1) return 0;
      return wrap(x % y, s);
    case Op::Shl: return wrap(static_cast<std::int64_t>(ux << (uy & static_cast<unsigned>(bits - 1))), s);
    case Op::Shr:
      if (is_unsigned(s)) {
        const std::uint64_t base = u64 ? ux : static_cast<std::uint64_t>(wrap(x, s));
        return wrap(static_cast<std::int64_t>(base >> (uy & static_cast<unsigned>(bits - 1))), s);
      }
      return wrap(x >> (uy & static_cast<unsigned>(bits - 1)), s);
    case Op::BitAnd: return wrap(x & y, s);
    case Op::BitOr: return wrap(x | y, s);
    case Op::BitXor: return wrap(x ^ y, s);
    case Op::Lt: return u64 ? ux < uy : x < y;
    case Op::Gt: return u64 ? ux > uy : x > y;
    case Op::Le: return u64 ? ux <= uy : x <= y;
    case Op::Ge: return u64 ? ux >= uy : x >= y;
    case Op::Eq: return x == y;
    case Op::Ne: return x != y;
    default: throw Error(ErrorCode::Unsupported, "invalid integer operator");
  }
}

double float_op(Op op, double x, double y) {
  switch (op) {
    case Op::Add: return x + y;
    case Op::Sub: return x - y;
    case Op::Mul: return x * y;
    case Op::Div: return x / y;
    case Op::Mod: return std::fmod(x, y);
    case Op::Lt: return x < y;
    case Op::Gt: return x > y;
    case Op::Le: return x <= y;
    case Op::Ge: return x >= y;
    case Op::Eq: return x == y;
    case Op::Ne: return x != y;
    default: throw Error(ErrorCode::Unsupported, "invalid floating-point operator");
  }
}

bool is_comparison(Op op) {
  return op == Op::Lt || op == Op::Gt || op == Op::Le || op == Op::Ge || op == Op::Eq || op == Op::Ne;
}

Value binary_values(Op op, const Value& a, const Value& b) {
  // Pointer arithmetic.
  if (a.is_ptr() || b.is_ptr()) {
    if (a.is_ptr() && b.is_ptr()) {
      if (op == Op::Sub) return make_int(Scalar::Long, a.idx() - b.idx());
      if (is_comparison(op)) {
        const bool same = a.buf == b.buf;
        return make_int(Scalar::Int, int_op(op, same ? a.idx() : a.buf, same ? b.idx() : b.buf, Scalar::Long));
      }
      throw Error(ErrorCode::Unsupported, "invalid pointer operation");
    }
    const Value& p = a.is_ptr() ? a : b;
    const Value& n = a.is_ptr() ? b : a;
    if (is_comparison(op)) {
      return make_int(Scalar::Int, int_op(op, a.is_ptr() ? (a.buf >= 0) : lane_i(a, 0),
                                          b.is_ptr() ? (b.buf >= 0) : lane_i(b, 0), Scalar::Long));
    }
    Value r = p;
    if (op == Op::Add) {
      r.v[0].i = p.idx() + lane_i(n, 0);
    } else if (op == Op::Sub && a.is_ptr()) {
      r.v[0].i = p.idx() - lane_i(n, 0);
    } else {
      throw Error(ErrorCode::Unsupported, "invalid pointer operation");
    }
    return r;
  }
  const int wa = a.width();
  const int wb = b.width();
  if (wa != wb && wa != 1 && wb != 1) throw Error(ErrorCode::Unsupported, "vector width mismatch");
  const int w = std::max(wa, wb);
  Scalar s;
  if (op == Op::Shl || op == Op::Shr) {
    s = promote(a.type.scalar);
  } else if (wa > 1 && wb == 1) {
    s = a.type.scalar;
  } else if (wb > 1 && wa == 1) {
    s = b.type.scalar;
  } else {
    s = common_scalar(a.type.scalar, b.type.scalar);
  }
  const bool cmp = is_comparison(op);
  Value r;
  r.type = Type{cmp ? (w == 1 ? Scalar::Int : mask_scalar(s)) : s, static_cast<std::uint8_t>(w)};
  for (int l = 0; l < w; ++l) {
    const int la = wa == 1 ? 0 : l;
    const int lb = wb == 1 ? 0 : l;
    if (is_float(s)) {
      if (op == Op::Shl || op == Op::Shr || op == Op::BitAnd || op == Op::BitOr || op == Op::BitXor) {
        throw Error(ErrorCode::Unsupported, "bitwise operator on floating-point operand");
      }
      const double res = float_op(op, lane_f(a, la), lane_f(b, lb));
      if (cmp) {
        r.v[l].i = res != 0 ? (w == 1 ? 1 : -1) : 0;
      } else {
        r.v[l].f = round_float(res, s);
      }
    } else {
      Scalar sb = (op == Op::Shl || op == Op::Shr) ? promote(b.type.scalar) : s;
      const std::int64_t x = wrap(lane_i(a, la), s);
      const std::int64_t y = wrap(lane_i(b, lb), sb);
      const std::int64_t res = int_op(op, x, y, s);
      r.v[l].i = cmp ? (res != 0 ? (w == 1 ? 1 : -1) : 0) : res;
    }
  }
  return r;
}

Value unary_math(BuiltinId id, const Value& x) {
  const Scalar s = is_float(x.type.scalar) ? x.type.scalar : Scalar::Float;
  Value r;
  r.type = Type{s, x.type.width};
  for (int l = 0; l < x.width(); ++l) {
    const double f = lane_f(x, l);
    double y = 0;
    switch (id) {
      case BuiltinId::Sqrt: y = std::sqrt(f); break;
      case BuiltinId::Rsqrt: y = 1.0 / std::sqrt(f); break;
      case BuiltinId::Exp: y = std::exp(f); break;
      case BuiltinId::Exp2: y = std::exp2(f); break;
      case BuiltinId::Log: y = std::log(f); break;
      case BuiltinId::Log2: y = std::log2(f); break;
      case BuiltinId::Log10: y = std::log10(f); break;
      case BuiltinId::Sin: y = std::sin(f); break;
      case BuiltinId::Cos: y = std::cos(f); break;
      case BuiltinId::Tan: y = std::tan(f); break;
      case BuiltinId::Fabs: y = std::fabs(f); break;
      case BuiltinId::Floor: y = std::floor(f); break;
      case BuiltinId::Ceil: y = std::ceil(f); break;
      case BuiltinId::Round: y = std::round(f); break;
      case BuiltinId::Trunc: y = std::trunc(f); break;
      case BuiltinId::Atan: y = std::atan(f); break;
      case BuiltinId::Tanh: y = std::tanh(f); break;
      case BuiltinId::Sign: y = f > 0 ? 1.0 : f < 0 ? -1.0 : 0.0; break;
      default: throw Error(ErrorCode::Unsupported, "builtin");
    }
    r.v[l].f = round_float(y, s);
  }
  return r;
}

// Element type shared by a set of builtin operands: widest width, common scalar.
Type combine_types(const std::vector<Value>& xs, bool force_float) {
  Type t{xs[0].type.scalar, 1};
  Scalar vec_scalar = Scalar::Void;
  for (const auto& x : xs) {
    if (x.is_ptr()) throw Error(ErrorCode::Unsupported, "pointer operand to math builtin");
    if (x.width() > 1) {
      if (t.width > 1 && t.width != x.width()) throw Error(ErrorCode::Unsupported, "vector width mismatch");
      t.width = x.type.width;
      vec_scalar = x.type.scalar;
    }
  }
  if (vec_scalar != Scalar::Void) {
    t.scalar = vec_scalar;
  } else {
    t.scalar = xs[0].type.scalar;
    for (std::size_t i = 1; i < xs.size(); ++i) t.scalar = common_scalar(t.scalar, xs[i].type.scalar);
    if (!is_float(t.scalar) && scalar_bytes(t.scalar) < 4 && xs.size() > 1) t.scalar = promote(t.scalar);
  }
  if (force_float && !is_float(t.scalar)) t.scalar = Scalar::Float;
  return t;
}

class Executor {
 public:
  Executor(const ProgramImpl& prog, Memory& mem, const LaunchOptions& opts)
      : prog_(prog), mem_(mem), opts_(opts), host_count_(static_cast<int>(mem.buffers.size())) {
    stack_.resize(1 << 16);
  }

  LaunchStats run(const Function& kernel, const std::vector<ArgValue>& args) {
    if (opts_.local_size <= 0 || opts_.global_size <= 0 || opts_.global_size % opts_.local_size != 0) {
      throw Error(ErrorCode::InvalidArgument, "global size must be a positive multiple of the local size");
    }
    if (args.size() != kernel.params.size()) {
      throw Error(ErrorCode::InvalidArgument, "kernel " + kernel.name + " expects " +
                                                  std::to_string(kernel.params.size()) + " arguments, got " +
                                                  std::to_string(args.size()));
    }
    init_globals();
    const std::size_t mark_globals = scratch_.size();

    std::vector<const Node*> local_decls;
    collect_local_decls(kernel.body.get(), local_decls);

    std::vector<Value> arg_values(args.size());
    std::vector<std::size_t> local_args;
    for (std::size_t i = 0; i < args.size(); ++i) {
      const Type& pt = kernel.params[i];
      const ArgValue& av = args[i];
      if (pt.pointer) {
        if (av.kind == ArgValue::Kind::LocalCount) {
          local_args.push_back(i);
          continue;
        }
        if (av.kind != ArgValue::Kind::Buffer || av.buffer < 0 || av.buffer >= host_count_) {
          throw Error(ErrorCode::InvalidArgument, "argument " + std::to_string(i) + " needs a buffer");
        }
        if (mem_.buffers[av.buffer].scalar != pt.scalar) {
          throw Error(ErrorCode::InvalidArgument, "argument " + std::to_string(i) + " buffer type mismatch");
        }
        Value p;
        p.type = pt;
        p.buf = av.buffer;
        arg_values[i] = p;
      } else {
        if (av.kind != ArgValue::Kind::Scalar) {
          throw Error(ErrorCode::InvalidArgument, "argument " + std::to_string(i) + " needs a scalar");
        }
        Value x = is_float(pt.scalar) ? make_float(Scalar::Double, av.value)
                                      : make_int(Scalar::Long, float_to_int(std::nearbyint(av.value)));
        arg_values[i] = convert(x, pt);
      }
    }

    const std::int64_t groups = opts_.global_size / opts_.local_size;
    for (std::int64_t g = 0; g < groups; ++g) {
      scratch_.resize(mark_globals);
      local_map_.clear();
      for (std::size_t i : local_args) {
        const Type& pt = kernel.params[i];
        Value p;
        p.type = pt;
        p.buf = alloc(pt.scalar, pt.width, Space::Local, std::max<std::int64_t>(1, args[i].local_count));
        arg_values[i] = p;
      }
      for (const Node* d : local_decls) {
        local_map_[d] = alloc(d->type.scalar, d->type.width, Space::Local, d->arr_len);
      }
      const std::size_t mark_local = scratch_.size();
      group_ = g;
      for (std::int64_t l = 0; l < opts_.local_size; ++l) {
        scratch_.resize(mark_local);
        private_map_.clear();
        local_id_ = l;
        global_id_ = g * opts_.local_size + l;
        call(kernel, arg_values);
      }
    }
    return stats_;
  }

 private:
  enum class Flow { Normal, Break, Continue, Return };

  struct Ref {
    Value* var = nullptr;
    Value ptr;
    std::int64_t k = 0;
    int lane = -1;
  };

  // ---- memory ----
  int alloc(Scalar s, int width, Space space, std::int64_t count) {
    Buffer b;
    b.scalar = s;
    b.width = width;
    b.space = space;
    b.count = count;
    b.data.assign(static_cast<std::size_t>(count * width), Lane{0});
    scratch_.push_back(std::move(b));
    return host_count_ + static_cast<int>(scratch_.size()) - 1;
  }

  Buffer& buffer(int id) {
    if (id < 0) throw Error(ErrorCode::OutOfBounds, "null pointer dereference");
    return id < host_count_ ? mem_.buffers[id] : scratch_[id - host_count_];
  }

  // Checks access to element k of the pointer's element type; returns the first flat lane or -1.
  std::int64_t locate(const Value& ptr, std::int64_t k, bool is_write) {
    Buffer& b = buffer(ptr.buf);
    const int pw = ptr.type.width;
    if (ptr.type.scalar != b.scalar) throw Error(ErrorCode::Unsupported, "pointer reinterpretation");
    if (opts_.observer && ptr.buf < host_count_) {
      opts_.observer->on_access(ptr.buf, pw == b.width ? k : (k * pw) / b.width, is_write);
    }
    const std::int64_t first = k * pw;
    if (k < 0 || first + pw > b.count * b.width) {
      if (opts_.bounds == BoundsPolicy::Strict) {
        throw Error(ErrorCode::OutOfBounds, std::string(is_write ? "write" : "read") + " at index " +
                                                std::to_string(k) + " of buffer " + std::to_string(ptr.buf) +
                                                " with " + std::to_string(b.count) + " elements");
      }
      ++stats_.bounds_violations;
      return -1;
    }
    return first;
  }

  Value load_elem(const Value& ptr, std::int64_t k) {
    Value r;
    r.type = Type{ptr.type.scalar, ptr.type.width};
    const std::int64_t first = locate(ptr, k, false);
    if (first < 0) return r;
    const Buffer& b = buffer(ptr.buf);
    for (int l = 0; l < ptr.type.width; ++l) r.v[l] = b.data[static_cast<std::size_t>(first + l)];
    return r;
  }

  void store_elem(const Value& ptr, std::int64_t k, const Value& v, int lane) {
    const std::int64_t first = locate(ptr, k, true);
    if (first < 0) return;
    Buffer& b = buffer(ptr.buf);
    if (lane >= 0) {
      const Value c = convert(v, Type{ptr.type.scalar, 1});
      b.data[static_cast<std::size_t>(first + lane)] = c.v[0];
      return;
    }
    const Value c = convert(v, Type{ptr.type.scalar, ptr.type.width});
    for (int l = 0; l < ptr.type.width; ++l) b.data[static_cast<std::size_t>(first + l)] = c.v[l];
  }

  Value load(const Ref& r) {
    Value x = r.var ? *r.var : load_elem(r.ptr, r.k);
    if (r.lane < 0) return x;
    if (r.lane >= x.width()) throw Error(ErrorCode::Unsupported, "swizzle lane out of range");
    Value s;
    s.type = Type{x.type.scalar, 1};
    s.v[0] = x.v[r.lane];
    return s;
  }

  void store(const Ref& r, const Value& v) {
    if (r.var) {
      if (r.lane < 0) {
        *r.var = convert(v, r.var->type);
      } else {
        r.var->v[r.lane] = convert(v, Type{r.var->type.scalar, 1}).v[0];
      }
      return;
    }
    store_elem(r.ptr, r.k, v, r.lane);
  }

  // ---- globals ----
  void init_globals() {
    globals_.resize(prog_.globals.size());
    for (std::size_t i = 0; i < prog_.globals.size(); ++i) {
      const GlobalVar& g = prog_.globals[i];
      if (g.arr_len >= 0) {
        const int id = alloc(g.type.scalar, g.type.width, Space::Constant, g.arr_len);
        Value p;
        p.type = Type{g.type.scalar, g.type.width, true, Space::Constant};
        p.buf = id;
        for (std::size_t e = 0; e < g.init.size() && static_cast<std::int64_t>(e) < g.arr_len; ++e) {
          const Value c = convert(eval(*g.init[e]), Type{g.type.scalar, g.type.width});
          for (int l = 0; l < g.type.width; ++l) scratch_.back().data[e * g.type.width + l] = c.v[l];
        }
        globals_[i] = p;
      } else {
        globals_[i] = g.init.empty() ? convert(make_int(Scalar::Int, 0), g.type) : convert(eval(*g.init[0]), g.type);
      }
    }
  }

  static void collect_local_decls(const Node* n, std::vector<const Node*>& out) {
    if (!n) return;
    if (n->kind == NK::Decl && n->type.space == Space::Local && n->arr_len >= 0 && !n->type.pointer) {
      out.push_back(n);
    }
    for (const auto& k : n->kids) collect_local_decls(k.get(), out);
  }

  // ---- calls ----
  Value call(const Function& fn, const std::vector<Value>& args) {
    if (!fn.body) throw Error(ErrorCode::Unsupported, "function " + fn.name + " has no body");
    if (args.size() != fn.params.size()) throw Error(ErrorCode::ParseError, "wrong argument count for " + fn.name);
    if (sp_ + static_cast<std::size_t>(fn.nslots) > stack_.size()) {
      throw Error(ErrorCode::Unsupported, "call stack too deep");
    }
    Value* saved = frame_;
    const std::size_t saved_sp = sp_;
    frame_ = stack_.data() + sp_;
    sp_ += static_cast<std::size_t>(fn.nslots);
    for (std::size_t i = 0; i < args.size(); ++i) frame_[i] = convert(args[i], fn.params[i]);
    ret_ = Value{};
    const Flow f = exec(*fn.body);
    Value result = f == Flow::Return && fn.ret.scalar != Scalar::Void ? convert(ret_, fn.ret) : Value{};
    frame_ = saved;
    sp_ = saved_sp;
    return result;
  }

  void tick() {
    if (++stats_.steps > opts_.step_limit) {
      throw Error(ErrorCode::Timeout, "step limit of " + std::to_string(opts_.step_limit) + " exceeded");
    }
  }

  // ---- statements ----
  Flow exec(const Node& n) {
    tick();
    switch (n.kind) {
      case NK::Block:
        for (const auto& k : n.kids) {
          const Flow f = exec(*k);
          if (f != Flow::Normal) return f;
        }
        return Flow::Normal;
      case NK::Decl: exec_decl(n); return Flow::Normal;
      case NK::ExprStmt: eval(*n.kids[0]); return Flow::Normal;
      case NK::If:
        if (truthy(eval(*n.kids[0]))) return exec(*n.kids[1]);
        if (n.kids.size() > 2) return exec(*n.kids[2]);
        return Flow::Normal;
      case NK::For: {
        if (n.kids[0]) exec(*n.kids[0]);
        while (true) {
          tick();
          if (n.kids[1] && !truthy(eval(*n.kids[1]))) break;
          const Flow f = exec(*n.kids[3]);
          if (f == Flow::Break) break;
          if (f == Flow::Return) return f;
          if (n.kids[2]) eval(*n.kids[2]);
        }
        return Flow::Normal;
      }
      case NK::While:
        while (true) {
          tick();
          if (!truthy(eval(*n.kids[0]))) break;
          const Flow f = exec(*n.kids[1]);
          if (f == Flow::Break) break;
          if (f == Flow::Return) return f;
        }
        return Flow::Normal;
      case NK::DoWhile:
        while (true) {
          tick();
          const Flow f = exec(*n.kids[0]);
          if (f == Flow::Break) break;
          if (f == Flow::Return) return f;
          if (!truthy(eval(*n.kids[1]))) break;
        }
        return Flow::Normal;
      case NK::Break: return Flow::Break;
      case NK::Continue: return Flow::Continue;
      case NK::Return:
        ret_ = n.kids.empty() ? Value{} : eval(*n.kids[0]);
        return Flow::Return;
      case NK::Empty: return Flow::Normal;
      default: throw Error(ErrorCode::Unsupported, "statement kind");
    }
  }

  void exec_decl(const Node& n) {
    Value& slot = frame_[n.a];
    if (n.arr_len < 0) {
      slot = n.kids.empty() ? convert(make_int(Scalar::Int, 0), n.type) : convert(eval(*n.kids[0]), n.type);
      if (!n.type.pointer) slot.type.space = Space::Private;
      return;
    }
    Value p;
    p.type = Type{n.type.scalar, n.type.width, true, n.type.space == Space::Local ? Space::Local : Space::Private};
    if (n.type.space == Space::Local) {
      p.buf = local_map_.at(&n);
    } else if (auto it = private_map_.find(&n); it != private_map_.end()) {
      p.buf = it->second;
    } else {
      p.buf = alloc(n.type.scalar, n.type.width, Space::Private, n.arr_len);
      private_map_[&n] = p.buf;
    }
    slot = p;
    if (n.b == 1) {
      Buffer& b = buffer(p.buf);
      std::fill(b.data.begin(), b.data.end(), Lane{0});
      for (std::size_t e = 0; e < n.kids.size() && static_cast<std::int64_t>(e) < n.arr_len; ++e) {
        const Value c = convert(eval(*n.kids[e]), Type{n.type.scalar, n.type.width});
        for (int l = 0; l < n.type.width; ++l) buffer(p.buf).data[e * n.type.width + l] = c.v[l];
      }
    }
  }

  // ---- expressions ----
  Ref lvalue(const Node& n) {
    switch (n.kind) {
      case NK::Local: return Ref{&frame_[n.a], {}, 0, -1};
      case NK::Global: return Ref{&globals_[n.a], {}, 0, -1};
      case NK::Index: {
        const Value base = eval(*n.kids[0]);
        if (!base.is_ptr()) throw Error(ErrorCode::Unsupported, "subscript of a non-pointer value");
        const Value idx = eval(*n.kids[1]);
        Ref r;
        r.ptr = base;
        r.k = base.idx() + lane_i(idx, 0);
        return r;
      }
      case NK::Unary:
        if (n.op == Op::Deref) {
          const Value base = eval(*n.kids[0]);
          if (!base.is_ptr()) throw Error(ErrorCode::Unsupported, "dereference of a non-pointer value");
          Ref r;
          r.ptr = base;
          r.k = base.idx();
          return r;
        }
        break;
      case NK::Swizzle: {
        Ref r = lvalue(*n.kids[0]);
        r.lane = n.lanes[0];
        return r;
      }
      default: break;
    }
    throw Error(ErrorCode::Unsupported, "expression is not assignable");
  }

  Value eval(const Node& n) {
    switch (n.kind) {
      case NK::IntLit: return make_int(n.type.scalar, n.a);
      case NK::FloatLit: return make_float(n.type.scalar, n.f);
      case NK::Local: return frame_[n.a];
      case NK::Global: return globals_[n.a];
      case NK::Unary: return eval_unary(n);
      case NK::Binary: return binary_values(n.op, eval(*n.kids[0]), eval(*n.kids[1]));
      case NK::Logical: {
        const bool a = truthy(eval(*n.kids[0]));
        if (n.op == Op::LogAnd && !a) return make_int(Scalar::Int, 0);
        if (n.op == Op::LogOr && a) return make_int(Scalar::Int, 1);
        return make_int(Scalar::Int, truthy(eval(*n.kids[1])) ? 1 : 0);
      }
      case NK::Assign: {
        const Ref r = lvalue(*n.kids[0]);
        Value rhs = eval(*n.kids[1]);
        if (n.op != Op::None) rhs = binary_values(n.op, load(r), rhs);
        store(r, rhs);
        return load_after_store(r, rhs);
      }
      case NK::Ternary: return truthy(eval(*n.kids[0])) ? eval(*n.kids[1]) : eval(*n.kids[2]);
      case NK::Index: return load(lvalue(n));
      case NK::Call: {
        std::vector<Value> args;
        args.reserve(n.kids.size());
        for (const auto& k : n.kids) args.push_back(eval(*k));
        return call(prog_.functions[static_cast<std::size_t>(n.a)], args);
      }
      case NK::Builtin: return eval_builtin(n);
      case NK::Cast: return convert(eval(*n.kids[0]), n.type);
      case NK::VecLit: {
        Value r;
        r.type = Type{n.type.scalar, n.type.width};
        int l = 0;
        for (const auto& k : n.kids) {
          const Value c = eval(*k);
          if (c.is_ptr()) throw Error(ErrorCode::Unsupported, "pointer in vector literal");
          if (n.kids.size() == 1 && c.width() == 1) {
            return convert(c, r.type);
          }
          for (int j = 0; j < c.width(); ++j) {
            if (l >= n.type.width) throw Error(ErrorCode::ParseError, "too many vector literal components");
            Value one;
            one.type = Type{c.type.scalar, 1};
            one.v[0] = c.v[j];
            r.v[l++] = convert(one, Type{n.type.scalar, 1}).v[0];
          }
        }
        if (l != n.type.width) throw Error(ErrorCode::ParseError, "too few vector literal components");
        return r;
      }
      case NK::Swizzle: {
        const Value x = eval(*n.kids[0]);
        if (x.is_ptr()) throw Error(ErrorCode::Unsupported, "member access on pointer");
        std::vector<std::uint8_t> lanes = n.lanes;
        if (n.b != 0) {
          lanes.clear();
          const int half = (x.width() + 1) / 2;
          for (int i = 0; i < half; ++i) {
            const int l = n.b == 1 ? i : n.b == 2 ? half + i : n.b == 3 ? 2 * i : 2 * i + 1;
            lanes.push_back(static_cast<std::uint8_t>(l));
          }
        }
        if (lanes.size() > 4 || lanes.size() == 0) throw Error(ErrorCode::Unsupported, "swizzle width");
        Value r;
        r.type = Type{x.type.scalar, static_cast<std::uint8_t>(lanes.size())};
        for (std::size_t i = 0; i < lanes.size(); ++i) {
          if (lanes[i] >= x.width()) {
            if (x.width() == 3 && lanes[i] == 3) continue;  // padding lane of a 3-vector
            throw Error(ErrorCode::Unsupported, "swizzle lane out of range");
          }
          r.v[i] = x.v[lanes[i]];
        }
        return r;
      }
      case NK::Comma: {
        Value last;
        for (const auto& k : n.kids) last = eval(*k);
        return last;
      }
      default: throw Error(ErrorCode::Unsupported, "expression kind");
    }
  }

  Value load_after_store(const Ref& r, const Value& rhs) {
    if (r.var) return r.lane < 0 ? *r.var : load(r);
    const Type t = r.lane < 0 ? Type{r.ptr.type.scalar, r.ptr.type.width} : Type{r.ptr.type.scalar, 1};
    return convert(rhs, t);
  }

  Value eval_unary(const Node& n) {
    switch (n.op) {
      case Op::Deref: return load(lvalue(n));
      case Op::AddrOf: {
        const Ref r = lvalue(*n.kids[0]);
        if (r.var) throw Error(ErrorCode::Unsupported, "address of a variable");
        Value p = r.ptr;
        p.v[0].i = r.k;
        return p;
      }
      case Op::PreInc:
      case Op::PreDec:
      case Op::PostInc:
      case Op::PostDec: {
        const Ref r = lvalue(*n.kids[0]);
        const Value old = load(r);
        const Value one = make_int(Scalar::Int, 1);
        const Value upd = binary_values((n.op == Op::PreInc || n.op == Op::PostInc) ? Op::Add : Op::Sub, old, one);
        store(r, upd);
        return (n.op == Op::PreInc || n.op == Op::PreDec) ? load_after_store(r, upd) : old;
      }
      default: break;
    }
    const Value x = eval(*n.kids[0]);
    if (x.is_ptr()) {
      if (n.op == Op::Not) return make_int(Scalar::Int, x.buf < 0);
      throw Error(ErrorCode::Unsupported, "invalid pointer operation");
    }
    const Scalar s = x.width() == 1 ? promote(x.type.scalar) : x.type.scalar;
    Value r;
    r.type = Type{s, x.type.width};
    for (int l = 0; l < x.width(); ++l) {
      switch (n.op) {
        case Op::Neg:
          if (is_float(s)) {
            r.v[l].f = -lane_f(x, l);
          } else {
            r.v[l].i = int_op(Op::Sub, 0, lane_i(x, l), s);
          }
          break;
        case Op::Plus: r.v[l] = convert(x, Type{s, x.type.width}).v[l]; break;
        case Op::Not:
          r.type.scalar = x.width() == 1 ? Scalar::Int : mask_scalar(s);
          r.v[l].i = (is_float(s) ? lane_f(x, l) == 0 : lane_i(x, l) == 0) ? (x.width() == 1 ? 1 : -1) : 0;
          break;
        case Op::BitNot:
          if (is_float(s)) throw Error(ErrorCode::Unsupported, "~ on floating-point operand");
          r.v[l].i = wrap(~lane_i(x, l), s);
          break;
        default: throw Error(ErrorCode::Unsupported, "unary operator");
      }
    }
    return r;
  }

  std::int64_t work_item_query(BuiltinId id, std::int64_t dim) const {
    const bool d0 = dim == 0;
    switch (id) {
      case BuiltinId::GetGlobalId: return d0 ? global_id_ : 0;
      case BuiltinId::GetLocalId: return d0 ? local_id_ : 0;
      case BuiltinId::GetGroupId: return d0 ? group_ : 0;
      case BuiltinId::GetGlobalSize: return d0 ? opts_.global_size : 1;
      case BuiltinId::GetLocalSize: return d0 ? opts_.local_size : 1;
      case BuiltinId::GetNumGroups: return d0 ? opts_.global_size / opts_.local_size : 1;
      case BuiltinId::GetGlobalOffset: return 0;
      default: return 0;
    }
  }

  Value atomic(BuiltinId id, const std::vector<Value>& a) {
    if (a.empty() || !a[0].is_ptr()) throw Error(ErrorCode::Unsupported, "atomic on a non-pointer");
    const Value& p = a[0];
    if (is_float(p.type.scalar) || p.type.width != 1) throw Error(ErrorCode::Unsupported, "atomic element type");
    const Value old = load_elem(p, p.idx());
    const Scalar s = p.type.scalar;
    const std::int64_t x = old.v[0].i;
    auto arg = [&](std::size_t i) {
      if (i >= a.size()) throw Error(ErrorCode::ParseError, "missing atomic operand");
      return wrap(lane_i(a[i], 0), s);
    };
    std::int64_t y = x;
    switch (id) {
      case BuiltinId::AtomicAdd: y = int_op(Op::Add, x, arg(1), s); break;
      case BuiltinId::AtomicSub: y = int_op(Op::Sub, x, arg(1), s); break;
      case BuiltinId::AtomicXchg: y = arg(1); break;
      case BuiltinId::AtomicMin: y = int_op(Op::Lt, arg(1), x, s) ? arg(1) : x; break;
      case BuiltinId::AtomicMax: y = int_op(Op::Gt, arg(1), x, s) ? arg(1) : x; break;
      case BuiltinId::AtomicAnd: y = x & arg(1); break;
      case BuiltinId::AtomicOr: y = x | arg(1); break;
      case BuiltinId::AtomicXor: y = x ^ arg(1); break;
      case BuiltinId::AtomicInc: y = int_op(Op::Add, x, 1, s); break;
      case BuiltinId::AtomicDec: y = int_op(Op::Sub, x, 1, s); break;
      case BuiltinId::AtomicCmpxchg: y = x == arg(1) ? arg(2) : x; break;
      default: break;
    }
    store_elem(p, p.idx(), make_int(s, y), -1);
    return old;
  }

  Value eval_builtin(const Node& n) {
    const auto id = static_cast<BuiltinId>(n.a);
    std::vector<Value> a;
    a.reserve(n.kids.size());
    for (const auto& k : n.kids) a.push_back(eval(*k));
    auto need = [&](std::size_t count) {
      if (a.size() != count) throw Error(ErrorCode::ParseError, "wrong number of builtin arguments");
    };
    switch (id) {
      case BuiltinId::GetGlobalId:
      case BuiltinId::GetLocalId:
      case BuiltinId::GetGroupId:
      case BuiltinId::GetGlobalSize:
      case BuiltinId::GetLocalSize:
      case BuiltinId::GetNumGroups:
      case BuiltinId::GetGlobalOffset:
        need(1);
        return make_int(Scalar::ULong, work_item_query(id, lane_i(a[0], 0)));
      case BuiltinId::GetWorkDim: return make_int(Scalar::UInt, 1);
      case BuiltinId::Barrier: return Value{};
      case BuiltinId::Sqrt:
      case BuiltinId::Rsqrt:
      case BuiltinId::Exp:
      case BuiltinId::Exp2:
      case BuiltinId::Log:
      case BuiltinId::Log2:
      case BuiltinId::Log10:
      case BuiltinId::Sin:
      case BuiltinId::Cos:
      case BuiltinId::Tan:
      case BuiltinId::Fabs:
      case BuiltinId::Floor:
      case BuiltinId::Ceil:
      case BuiltinId::Round:
      case BuiltinId::Trunc:
      case BuiltinId::Atan:
      case BuiltinId::Tanh:
      case BuiltinId::Sign:
        need(1);
        return unary_math(id, a[0]);
      case BuiltinId::Pow:
      case BuiltinId::Fmin:
      case BuiltinId::Fmax:
      case BuiltinId::Fmod:
      case BuiltinId::Atan2:
      case BuiltinId::Hypot: {
        need(2);
        const Type t = combine_types(a, true);
        Value r;
        r.type = t;
        for (int l = 0; l < t.width; ++l) {
          const double x = lane_f(a[0], a[0].width() == 1 ? 0 : l);
          const double y = lane_f(a[1], a[1].width() == 1 ? 0 : l);
          double z = 0;
          switch (id) {
            case BuiltinId::Pow: z = std::pow(x, y); break;
            case BuiltinId::Fmin: z = std::fmin(x, y); break;
            case BuiltinId::Fmax: z = std::fmax(x, y); break;
            case BuiltinId::Fmod: z = std::fmod(x, y); break;
            case BuiltinId::Atan2: z = std::atan2(x, y); break;
            default: z = std::hypot(x, y); break;
          }
          r.v[l].f = round_float(z, t.scalar);
        }
        return r;
      }
      case BuiltinId::Mad:
      case BuiltinId::Fma: {
        need(3);
        return binary_values(Op::Add, binary_values(Op::Mul, a[0], a[1]), a[2]);
      }
      case BuiltinId::Mix: {
        need(3);
        return binary_values(Op::Add, a[0], binary_values(Op::Mul, binary_values(Op::Sub, a[1], a[0]), a[2]));
      }
      case BuiltinId::Clamp: {
        need(3);
        const Type t = combine_types({a[0]}, false);
        Value lo = binary_values(Op::Lt, a[0], a[1]);
        Value r = convert(a[0], t);
        for (int l = 0; l < t.width; ++l) {
          const Value x = lane_value(a[0], l, t.scalar);
          const Value lo_v = lane_value(a[1], a[1].width() == 1 ? 0 : l, t.scalar);
          const Value hi_v = lane_value(a[2], a[2].width() == 1 ? 0 : l, t.scalar);
          Value v = truthy(binary_values(Op::Lt, x, lo_v)) ? lo_v : x;
          v = truthy(binary_values(Op::Gt, v, hi_v)) ? hi_v : v;
          r.v[l] = v.v[0];
        }
        (void)lo;
        return r;
      }
      case BuiltinId::Min:
      case BuiltinId::Max: {
        need(2);
        const Type t = combine_types(a, false);
        Value r;
        r.type = t;
        for (int l = 0; l < t.width; ++l) {
          const Value x = lane_value(a[0], a[0].width() == 1 ? 0 : l, t.scalar);
          const Value y = lane_value(a[1], a[1].width() == 1 ? 0 : l, t.scalar);
          const bool pick_y = truthy(binary_values(id == BuiltinId::Min ? Op::Lt : Op::Gt, y, x));
          r.v[l] = (pick_y ? y : x).v[0];
        }
        return r;
      }
      case BuiltinId::Abs: {
        need(1);
        Value r = a[0];
        for (int l = 0; l < r.width(); ++l) {
          if (is_float(r.type.scalar)) {
            r.v[l].f = std::fabs(r.v[l].f);
          } else if (!is_unsigned(r.type.scalar)) {
            r.v[l].i = r.v[l].i < 0 ? int_op(Op::Sub, 0, r.v[l].i, r.type.scalar) : r.v[l].i;
          }
        }
        return r;
      }
      case BuiltinId::Mul24: need(2); return binary_values(Op::Mul, a[0], a[1]);
      case BuiltinId::Mad24: need(3); return binary_values(Op::Add, binary_values(Op::Mul, a[0], a[1]), a[2]);
      case BuiltinId::Dot:
      case BuiltinId::Length: {
        need(id == BuiltinId::Dot ? 2 : 1);
        const Value& x = a[0];
        const Value& y = id == BuiltinId::Dot ? a[1] : a[0];
        const Type t = combine_types(a, true);
        double sum = 0;
        for (int l = 0; l < t.width; ++l) sum += lane_f(x, x.width() == 1 ? 0 : l) * lane_f(y, y.width() == 1 ? 0 : l);
        return make_float(t.scalar, id == BuiltinId::Dot ? sum : std::sqrt(sum));
      }
      case BuiltinId::AtomicAdd:
      case BuiltinId::AtomicSub:
      case BuiltinId::AtomicXchg:
      case BuiltinId::AtomicMin:
      case BuiltinId::AtomicMax:
      case BuiltinId::AtomicAnd:
      case BuiltinId::AtomicOr:
      case BuiltinId::AtomicXor:
      case BuiltinId::AtomicInc:
      case BuiltinId::AtomicDec:
      case BuiltinId::AtomicCmpxchg: return atomic(id, a);
      case BuiltinId::VLoad: {
        need(2);
        const Value& p = a[1];
        if (!p.is_ptr() || p.type.width != 1) throw Error(ErrorCode::Unsupported, "vload from a non-scalar pointer");
        const int w = static_cast<int>(n.b);
        const std::int64_t base = p.idx() + lane_i(a[0], 0) * w;
        Value r;
        r.type = Type{p.type.scalar, static_cast<std::uint8_t>(w)};
        for (int l = 0; l < w; ++l) r.v[l] = load_elem(p, base + l).v[0];
        return r;
      }
      case BuiltinId::VStore: {
        need(3);
        const Value& p = a[2];
        if (!p.is_ptr() || p.type.width != 1) throw Error(ErrorCode::Unsupported, "vstore to a non-scalar pointer");
        const int w = static_cast<int>(n.b);
        if (a[0].width() != w) throw Error(ErrorCode::Unsupported, "vstore width mismatch");
        const std::int64_t base = p.idx() + lane_i(a[1], 0) * w;
        for (int l = 0; l < w; ++l) store_elem(p, base + l, lane_value(a[0], l, a[0].type.scalar), -1);
        return Value{};
      }
      default: throw Error(ErrorCode::Unsupported, "builtin");
    }
  }

  static Value lane_value(const Value& x, int l, Scalar s) {
    Value one;
    one.type = Type{x.type.scalar, 1};
    one.v[0] = x.v[l];
    return convert(one, Type{s, 1});
  }

  const ProgramImpl& prog_;
  Memory& mem_;
  const LaunchOptions& opts_;
  const int host_count_;
  std::vector<Buffer> scratch_;
  std::vector<Value> globals_;
  std::vector<Value> stack_;
  std::size_t sp_ = 0;
  Value* frame_ = nullptr;
  Value ret_;
  std::unordered_map<const Node*, int> local_map_;
  std::unordered_map<const Node*, int> private_map_;
  std::int64_t global_id_ = 0;
  std::int64_t local_id_ = 0;
  std::int64_t group_ = 0;
  LaunchStats stats_;
};

}  // namespace

double Buffer::get_f(std::int64_t k, int lane) const {
  const Lane& x = data.at(static_cast<std::size_t>(k * width + lane));
  return is_float(scalar) ? x.f : int_to_float(x.i, scalar);
}

std::int64_t Buffer::get_i(std::int64_t k, int lane) const {
  const Lane& x = data.at(static_cast<std::size_t>(k * width + lane));
  return is_float(scalar) ? float_to_int(x.f) : x.i;
}

void Buffer::set_f(std::int64_t k, double v, int lane) {
  Lane& x = data.at(static_cast<std::size_t>(k * width + lane));
  if (is_float(scalar)) {
    x.f = round_float(v, scalar);
  } else {
    x.i = wrap(float_to_int(v), scalar);
  }
}

void Buffer::set_i(std::int64_t k, std::int64_t v, int lane) {
  Lane& x = data.at(static_cast<std::size_t>(k * width + lane));
  if (is_float(scalar)) {
    x.f = round_float(int_to_float(v, scalar), scalar);
  } else {
    x.i = wrap(v, scalar);
  }
}

int Memory::add(Scalar scalar, int width, Space space, std::int64_t count) {
  if (count < 0 || width < 1 || width > 4) throw Error(ErrorCode::InvalidArgument, "invalid buffer shape");
  Buffer b;
  b.scalar = scalar;
  b.width = width;
  b.space = space;
  b.count = count;
  b.data.assign(static_cast<std::size_t>(count * width), Lane{0});
  buffers.push_back(std::move(b));
  return static_cast<int>(buffers.size()) - 1;
}

LaunchStats Program::launch(std::string_view kernel, Memory& mem, const std::vector<ArgValue>& args,
                            const LaunchOptions& opts) const {
  auto it = impl_->function_index.find(kernel);
  if (it == impl_->function_index.end() || !impl_->functions[it->second].is_kernel ||
      !impl_->functions[it->second].body) {
    throw Error(ErrorCode::InvalidArgument, "no kernel named " + std::string(kernel));
  }
  Executor ex(*impl_, mem, opts);
  return ex.run(impl_->functions[it->second], args);
}

}  // namespace clperf::interp
