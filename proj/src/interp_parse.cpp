#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "clperf/error.hpp"
#include "clperf/lexer.hpp"
#include "interp_internal.hpp"

namespace clperf::interp {

bool is_float(Scalar s) { return s == Scalar::Half || s == Scalar::Float || s == Scalar::Double; }

bool is_unsigned(Scalar s) {
  return s == Scalar::Bool || s == Scalar::UChar || s == Scalar::UShort || s == Scalar::UInt || s == Scalar::ULong;
}

int scalar_bytes(Scalar s) {
  switch (s) {
    case Scalar::Bool:
    case Scalar::Char:
    case Scalar::UChar: return 1;
    case Scalar::Short:
    case Scalar::UShort:
    case Scalar::Half: return 2;
    case Scalar::Int:
    case Scalar::UInt:
    case Scalar::Float: return 4;
    case Scalar::Long:
    case Scalar::ULong:
    case Scalar::Double: return 8;
    case Scalar::Void: return 0;
  }
  return 0;
}

namespace {

const std::map<std::string, Scalar, std::less<>>& scalar_names() {
  static const std::map<std::string, Scalar, std::less<>> names = {
      {"bool", Scalar::Bool},       {"char", Scalar::Char},      {"uchar", Scalar::UChar},
      {"short", Scalar::Short},     {"ushort", Scalar::UShort},  {"int", Scalar::Int},
      {"uint", Scalar::UInt},       {"long", Scalar::Long},      {"ulong", Scalar::ULong},
      {"half", Scalar::Half},       {"float", Scalar::Float},    {"double", Scalar::Double},
      {"void", Scalar::Void},       {"size_t", Scalar::ULong},   {"ptrdiff_t", Scalar::Long},
      {"intptr_t", Scalar::Long},   {"uintptr_t", Scalar::ULong}};
  return names;
}

// Returns false if `name` is not a type name. Throws Unsupported for 8/16-wide vectors.
bool lookup_type_name(std::string_view name, Type& out) {
  const auto& names = scalar_names();
  if (auto it = names.find(name); it != names.end()) {
    out = Type{it->second, 1, false, Space::Private};
    return true;
  }
  for (const auto& [base, s] : names) {
    if (s == Scalar::Void || s == Scalar::Bool || base.find('_') != std::string::npos) continue;
    if (name.size() <= base.size() || !name.starts_with(base)) continue;
    const std::string_view suffix = name.substr(base.size());
    if (suffix == "2" || suffix == "3" || suffix == "4") {
      out = Type{s, static_cast<std::uint8_t>(suffix[0] - '0'), false, Space::Private};
      return true;
    }
    if (suffix == "8" || suffix == "16") {
      throw Error(ErrorCode::Unsupported, "vector type " + std::string(name) + " is not supported by the interpreter");
    }
  }
  return false;
}

const std::map<std::string, BuiltinId, std::less<>>& builtin_names() {
  static const std::map<std::string, BuiltinId, std::less<>> names = {
      {"get_global_id", BuiltinId::GetGlobalId},
      {"get_local_id", BuiltinId::GetLocalId},
      {"get_group_id", BuiltinId::GetGroupId},
      {"get_global_size", BuiltinId::GetGlobalSize},
      {"get_local_size", BuiltinId::GetLocalSize},
      {"get_num_groups", BuiltinId::GetNumGroups},
      {"get_work_dim", BuiltinId::GetWorkDim},
      {"get_global_offset", BuiltinId::GetGlobalOffset},
      {"barrier", BuiltinId::Barrier},
      {"work_group_barrier", BuiltinId::Barrier},
      {"mem_fence", BuiltinId::Barrier},
      {"read_mem_fence", BuiltinId::Barrier},
      {"write_mem_fence", BuiltinId::Barrier},
      {"sqrt", BuiltinId::Sqrt},
      {"rsqrt", BuiltinId::Rsqrt},
      {"exp", BuiltinId::Exp},
      {"exp2", BuiltinId::Exp2},
      {"log", BuiltinId::Log},
      {"log2", BuiltinId::Log2},
      {"log10", BuiltinId::Log10},
      {"sin", BuiltinId::Sin},
      {"cos", BuiltinId::Cos},
      {"tan", BuiltinId::Tan},
      {"fabs", BuiltinId::Fabs},
      {"floor", BuiltinId::Floor},
      {"ceil", BuiltinId::Ceil},
      {"round", BuiltinId::Round},
      {"trunc", BuiltinId::Trunc},
      {"atan", BuiltinId::Atan},
      {"tanh", BuiltinId::Tanh},
      {"pow", BuiltinId::Pow},
      {"powr", BuiltinId::Pow},
      {"fmin", BuiltinId::Fmin},
      {"fmax", BuiltinId::Fmax},
      {"fmod", BuiltinId::Fmod},
      {"atan2", BuiltinId::Atan2},
      {"hypot", BuiltinId::Hypot},
      {"mad", BuiltinId::Mad},
      {"fma", BuiltinId::Fma},
      {"clamp", BuiltinId::Clamp},
      {"mix", BuiltinId::Mix},
      {"abs", BuiltinId::Abs},
      {"min", BuiltinId::Min},
      {"max", BuiltinId::Max},
      {"mul24", BuiltinId::Mul24},
      {"mad24", BuiltinId::Mad24},
      {"sign", BuiltinId::Sign},
      {"dot", BuiltinId::Dot},
      {"length", BuiltinId::Length},
      {"atomic_add", BuiltinId::AtomicAdd},
      {"atomic_sub", BuiltinId::AtomicSub},
      {"atomic_xchg", BuiltinId::AtomicXchg},
      {"atomic_min", BuiltinId::AtomicMin},
      {"atomic_max", BuiltinId::AtomicMax},
      {"atomic_and", BuiltinId::AtomicAnd},
      {"atomic_or", BuiltinId::AtomicOr},
      {"atomic_xor", BuiltinId::AtomicXor},
      {"atomic_inc", BuiltinId::AtomicInc},
      {"atomic_dec", BuiltinId::AtomicDec},
      {"atomic_cmpxchg", BuiltinId::AtomicCmpxchg},
  };
  return names;
}

struct NamedConstant {
  bool is_float;
  double f;
  std::int64_t i;
};

const std::map<std::string, NamedConstant, std::less<>>& named_constants() {
  static const std::map<std::string, NamedConstant, std::less<>> c = {
      {"CLK_LOCAL_MEM_FENCE", {false, 0, 1}},
      {"CLK_GLOBAL_MEM_FENCE", {false, 0, 2}},
      {"true", {false, 0, 1}},
      {"false", {false, 0, 0}},
      {"INT_MAX", {false, 0, std::numeric_limits<std::int32_t>::max()}},
      {"INT_MIN", {false, 0, std::numeric_limits<std::int32_t>::min()}},
      {"UINT_MAX", {false, 0, std::numeric_limits<std::uint32_t>::max()}},
      {"M_PI", {true, 3.14159265358979323846, 0}},
      {"M_PI_F", {true, static_cast<float>(3.14159265358979323846), 0}},
      {"FLT_MAX", {true, std::numeric_limits<float>::max(), 0}},
      {"FLT_MIN", {true, std::numeric_limits<float>::min(), 0}},
      {"MAXFLOAT", {true, std::numeric_limits<float>::max(), 0}},
      {"INFINITY", {true, std::numeric_limits<float>::infinity(), 0}},
  };
  return c;
}

std::unique_ptr<Node> make(NK kind, int line) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  n->line = line;
  return n;
}

const std::set<std::string, std::less<>> kDunderAliases = {"kernel",    "global",     "local",     "constant",
                                                          "private",   "read_only",  "write_only", "read_write",
                                                          "const"};

// Expands object-like macros and drops other directives.
std::vector<Token> preprocess_tokens(const std::vector<Token>& in) {
  std::map<std::string, std::vector<Token>> macros;
  std::set<std::string> function_macros;
  std::vector<Token> out;
  std::function<void(const Token&, int)> emit = [&](const Token& t, int depth) {
    if (t.kind == TokKind::Ident) {
      if (function_macros.count(t.text)) {
        throw Error(ErrorCode::Unsupported, "function-like macro " + t.text);
      }
      auto it = macros.find(t.text);
      if (it != macros.end()) {
        if (depth > 32) throw Error(ErrorCode::Unsupported, "recursive macro " + t.text);
        for (const auto& m : it->second) {
          Token copy = m;
          copy.line = t.line;
          copy.col = t.col;
          emit(copy, depth + 1);
        }
        return;
      }
    }
    out.push_back(t);
  };
  for (const auto& t : in) {
    if (t.kind == TokKind::End) break;
    if (t.kind != TokKind::Preproc) {
      if (t.kind == TokKind::Ident && t.text.starts_with("__") && kDunderAliases.count(t.text.substr(2))) {
        Token copy = t;
        copy.text = t.text.substr(2);
        emit(copy, 0);
        continue;
      }
      emit(t, 0);
      continue;
    }
    auto dir = tokenize(std::string_view(t.text).substr(1));
    if (dir.empty() || dir[0].kind == TokKind::End) continue;
    const std::string& name = dir[0].text;
    if (name == "pragma" || name == "include" || name == "line" || name == "error" || name == "warning") continue;
    if (name == "define") {
      if (dir.size() < 3 || dir[1].kind != TokKind::Ident) throw Error(ErrorCode::Unsupported, "malformed #define");
      const Token& mname = dir[1];
      const bool function_like = dir[2].is_punct("(") && dir[2].offset == mname.end;
      if (function_like) {
        function_macros.insert(mname.text);
        continue;
      }
      std::vector<Token> body(dir.begin() + 2, dir.end() - 1);
      macros[mname.text] = std::move(body);
      continue;
    }
    if (name == "undef") {
      if (dir.size() > 1) {
        macros.erase(dir[1].text);
        function_macros.erase(dir[1].text);
      }
      continue;
    }
    throw Error(ErrorCode::Unsupported, "preprocessor directive #" + name);
  }
  Token end;
  end.kind = TokKind::End;
  if (!out.empty()) end.line = out.back().line;
  out.push_back(end);
  return out;
}

std::int64_t parse_int_literal(const std::string& text, Type& type) {
  std::string digits = text;
  bool is_u = false;
  bool is_l = false;
  while (!digits.empty() && std::isalpha(static_cast<unsigned char>(digits.back())) &&
         !(digits.size() > 2 && (digits[1] == 'x' || digits[1] == 'X') &&
           std::isxdigit(static_cast<unsigned char>(digits.back())))) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(digits.back())));
    if (c == 'u') is_u = true;
    if (c == 'l') is_l = true;
    digits.pop_back();
  }
  const unsigned long long v = std::stoull(digits, nullptr, 0);
  if (is_u) {
    type = Type{(is_l || v > 0xFFFFFFFFull) ? Scalar::ULong : Scalar::UInt};
  } else {
    type = Type{(is_l || v > 0x7FFFFFFFull) ? Scalar::Long : Scalar::Int};
  }
  return static_cast<std::int64_t>(v);
}

class Parser {
 public:
  Parser(std::vector<Token> toks, ProgramImpl& prog) : toks_(std::move(toks)), prog_(prog) {}

  void parse_program() {
    while (peek().kind != TokKind::End) {
      if (accept(";")) continue;
      parse_external();
    }
    // Resolve calls to functions defined after their use.
    for (auto* call : pending_calls_) {
      auto it = prog_.function_index.find(call_names_[call]);
      if (it == prog_.function_index.end() || !prog_.functions[it->second].body) {
        throw Error(ErrorCode::Unsupported, "call to unknown function '" + call_names_[call] + "'");
      }
      call->a = it->second;
    }
  }

 private:
  // ---- token helpers ----
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool accept(std::string_view p) {
    if (peek().is_punct(p)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(std::string_view p) {
    if (!accept(p)) fail("expected '" + std::string(p) + "' but found '" + peek().text + "'");
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError,
                msg + " at line " + std::to_string(peek().line) + ", column " + std::to_string(peek().col));
  }
  std::string expect_ident() {
    if (peek().kind != TokKind::Ident) fail("expected identifier but found '" + peek().text + "'");
    return next().text;
  }

  // ---- types ----
  bool is_type_word(const Token& t) const {
    if (t.kind != TokKind::Ident) return false;
    static const std::set<std::string, std::less<>> quals = {
        "const",  "volatile",  "restrict", "global",   "local",    "constant", "private", "static",
        "inline", "kernel",    "unsigned", "signed",   "__attribute__", "read_only", "write_only",
        "read_write", "extern", "struct", "union", "enum", "__restrict", "__restrict__"};
    if (quals.count(t.text) || typedefs_.count(t.text)) return true;
    Type ty;
    return lookup_type_name(t.text, ty);
  }

  struct DeclSpec {
    Type type;
    bool is_kernel = false;
    bool has_space = false;
  };

  void skip_attribute() {
    expect("(");
    int depth = 1;
    while (depth > 0) {
      if (peek().kind == TokKind::End) fail("unterminated attribute");
      if (peek().is_punct("(")) ++depth;
      if (peek().is_punct(")")) --depth;
      ++pos_;
    }
  }

  DeclSpec parse_decl_spec() {
    DeclSpec ds;
    bool have_type = false;
    bool is_unsigned_kw = false;
    bool is_signed_kw = false;
    while (peek().kind == TokKind::Ident) {
      const std::string& w = peek().text;
      if (w == "const" || w == "volatile" || w == "restrict" || w == "static" || w == "inline" || w == "extern" ||
          w == "read_only" || w == "write_only" || w == "read_write" || w == "__restrict" || w == "__restrict__") {
        ++pos_;
      } else if (w == "__attribute__") {
        ++pos_;
        skip_attribute();
      } else if (w == "kernel") {
        ds.is_kernel = true;
        ++pos_;
      } else if (w == "global" || w == "local" || w == "constant" || w == "private") {
        ds.type.space = w == "global" ? Space::Global
                        : w == "local" ? Space::Local
                        : w == "constant" ? Space::Constant
                                          : Space::Private;
        ds.has_space = true;
        ++pos_;
      } else if (w == "unsigned") {
        is_unsigned_kw = true;
        ++pos_;
      } else if (w == "signed") {
        is_signed_kw = true;
        ++pos_;
      } else if (w == "struct" || w == "union" || w == "enum") {
        throw Error(ErrorCode::Unsupported, w + " types are not supported by the interpreter");
      } else if (!have_type) {
        Type t;
        if (auto it = typedefs_.find(w); it != typedefs_.end()) {
          t = it->second;
        } else if (!lookup_type_name(w, t)) {
          break;
        }
        const Space sp = ds.type.space;
        ds.type.scalar = t.scalar;
        ds.type.width = t.width;
        ds.type.space = sp;
        have_type = true;
        ++pos_;
        // "long int", "short int", "long long"
        if ((w == "long" || w == "short") && peek().kind == TokKind::Ident &&
            (peek().text == "int" || peek().text == "long")) {
          ++pos_;
        }
      } else {
        break;
      }
    }
    if (!have_type) {
      if (!is_unsigned_kw && !is_signed_kw) fail("expected a type");
      ds.type.scalar = Scalar::Int;
    }
    if (is_unsigned_kw) {
      switch (ds.type.scalar) {
        case Scalar::Char: ds.type.scalar = Scalar::UChar; break;
        case Scalar::Short: ds.type.scalar = Scalar::UShort; break;
        case Scalar::Int: ds.type.scalar = Scalar::UInt; break;
        case Scalar::Long: ds.type.scalar = Scalar::ULong; break;
        default: fail("invalid use of 'unsigned'");
      }
    }
    return ds;
  }

  // Parses "*"s after the specifiers; returns the pointer-adjusted type.
  Type parse_pointer(Type base) {
    int ptrs = 0;
    while (accept("*")) {
      ++ptrs;
      while (peek().kind == TokKind::Ident &&
             (peek().text == "const" || peek().text == "restrict" || peek().text == "volatile" ||
              peek().text == "__restrict" || peek().text == "__restrict__")) {
        ++pos_;
      }
    }
    if (ptrs > 1) throw Error(ErrorCode::Unsupported, "pointer to pointer");
    base.pointer = ptrs == 1;
    return base;
  }

  // ---- program scope ----
  void parse_external() {
    if (peek().is("typedef")) {
      ++pos_;
      DeclSpec ds = parse_decl_spec();
      Type t = parse_pointer(ds.type);
      typedefs_[expect_ident()] = t;
      expect(";");
      return;
    }
    DeclSpec ds = parse_decl_spec();
    Type t = parse_pointer(ds.type);
    while (peek().is("__attribute__")) {
      ++pos_;
      skip_attribute();
    }
    const int line = peek().line;
    std::string name = expect_ident();
    if (peek().is_punct("(")) {
      parse_function(ds, t, name);
      return;
    }
    // Program-scope variables: constant tables.
    while (true) {
      GlobalVar g;
      g.name = name;
      g.type = t;
      if (accept("[")) {
        if (peek().is_punct("]")) {
          g.arr_len = -2;  // sized by initializer
        } else {
          g.arr_len = const_int(parse_conditional());
        }
        expect("]");
      }
      if (accept("=")) {
        if (accept("{")) {
          while (!accept("}")) {
            g.init.push_back(parse_assignment());
            if (!accept(",")) {
              expect("}");
              break;
            }
          }
        } else {
          g.init.push_back(parse_assignment());
        }
      }
      if (g.arr_len == -2) g.arr_len = static_cast<std::int64_t>(g.init.size());
      global_index_[g.name] = static_cast<int>(prog_.globals.size());
      prog_.globals.push_back(std::move(g));
      if (accept(",")) {
        t = parse_pointer(ds.type);
        name = expect_ident();
        continue;
      }
      expect(";");
      break;
    }
    (void)line;
  }

  void parse_function(const DeclSpec& ds, Type ret, const std::string& name) {
    Function fn;
    fn.name = name;
    fn.is_kernel = ds.is_kernel;
    fn.ret = ret;
    scopes_.clear();
    scopes_.emplace_back();
    next_slot_ = 0;
    max_slot_ = 0;
    expect("(");
    if (peek().is("void") && peek(1).is_punct(")")) ++pos_;
    if (!accept(")")) {
      while (true) {
        DeclSpec ps = parse_decl_spec();
        Type pt = parse_pointer(ps.type);
        std::string pname = expect_ident();
        if (accept("[")) {
          while (!accept("]")) ++pos_;
          pt.pointer = true;
        }
        if (pt.pointer && !ps.has_space) pt.space = Space::Global;
        if (fn.is_kernel && pt.pointer && pt.space == Space::Private) pt.space = Space::Global;
        fn.params.push_back(pt);
        declare(pname);
        if (accept(",")) continue;
        expect(")");
        break;
      }
    }
    while (peek().is("__attribute__")) {
      ++pos_;
      skip_attribute();
    }
    int index;
    if (auto it = prog_.function_index.find(name); it != prog_.function_index.end()) {
      index = it->second;
      if (prog_.functions[index].body && peek().is_punct("{")) fail("redefinition of " + name);
    } else {
      index = static_cast<int>(prog_.functions.size());
      prog_.function_index.emplace(name, index);
      prog_.functions.emplace_back();
      prog_.functions[index].name = name;
    }
    if (accept(";")) {
      if (!prog_.functions[index].body) {
        fn.body = nullptr;
        prog_.functions[index] = std::move(fn);
      }
      return;
    }
    fn.body = parse_block();
    fn.nslots = max_slot_;
    prog_.functions[index] = std::move(fn);
  }

  // ---- scopes ----
  int declare(const std::string& name) {
    const int slot = next_slot_++;
    max_slot_ = std::max(max_slot_, next_slot_);
    scopes_.back()[name] = slot;
    return slot;
  }

  void push_scope() { scopes_.emplace_back(); }
  void pop_scope() { scopes_.pop_back(); }

  // ---- statements ----
  std::unique_ptr<Node> parse_block() {
    auto n = make(NK::Block, peek().line);
    expect("{");
    push_scope();
    while (!accept("}")) {
      if (peek().kind == TokKind::End) fail("unexpected end of input in block");
      n->kids.push_back(parse_statement());
    }
    pop_scope();
    return n;
  }

  bool starts_declaration() const {
    const Token& t = peek();
    if (!is_type_word(t)) return false;
    // "x * y;" is ambiguous in C; a known type word always wins here.
    return true;
  }

  std::unique_ptr<Node> parse_declaration() {
    const int line = peek().line;
    DeclSpec ds = parse_decl_spec();
    auto block = make(NK::Block, line);
    block->b = 1;  // declaration group: shares the enclosing scope
    while (true) {
      Type t = parse_pointer(ds.type);
      const std::string name = expect_ident();
      auto d = make(NK::Decl, line);
      d->type = t;
      if (accept("[")) {
        d->arr_len = accept("]") ? -2 : const_int(parse_conditional());
        if (d->arr_len != -2) expect("]");
      }
      if (accept("=")) {
        if (accept("{")) {
          d->b = 1;
          while (!accept("}")) {
            d->kids.push_back(parse_assignment());
            if (!accept(",")) {
              expect("}");
              break;
            }
          }
        } else {
          d->kids.push_back(parse_assignment());
        }
      }
      if (d->arr_len == -2) d->arr_len = static_cast<std::int64_t>(d->kids.size());
      if (d->arr_len >= 0 && d->arr_len == 0) fail("zero-length array");
      d->a = declare(name);
      block->kids.push_back(std::move(d));
      if (accept(",")) continue;
      expect(";");
      break;
    }
    if (block->kids.size() == 1) return std::move(block->kids[0]);
    return block;
  }

  std::unique_ptr<Node> parse_statement() {
    const Token& t = peek();
    const int line = t.line;
    if (t.is_punct("{")) return parse_block();
    if (t.is_punct(";")) {
      ++pos_;
      return make(NK::Empty, line);
    }
    if (t.kind == TokKind::Ident) {
      if (t.text == "if") {
        ++pos_;
        auto n = make(NK::If, line);
        expect("(");
        n->kids.push_back(parse_expression());
        expect(")");
        n->kids.push_back(parse_scoped_statement());
        if (peek().is("else")) {
          ++pos_;
          n->kids.push_back(parse_scoped_statement());
        }
        return n;
      }
      if (t.text == "for") {
        ++pos_;
        auto n = make(NK::For, line);
        expect("(");
        push_scope();
        if (accept(";")) {
          n->kids.push_back(nullptr);
        } else if (starts_declaration()) {
          n->kids.push_back(parse_declaration());
        } else {
          auto e = make(NK::ExprStmt, line);
          e->kids.push_back(parse_expression());
          n->kids.push_back(std::move(e));
          expect(";");
        }
        n->kids.push_back(peek().is_punct(";") ? nullptr : parse_expression());
        expect(";");
        n->kids.push_back(peek().is_punct(")") ? nullptr : parse_expression());
        expect(")");
        n->kids.push_back(parse_scoped_statement());
        pop_scope();
        return n;
      }
      if (t.text == "while") {
        ++pos_;
        auto n = make(NK::While, line);
        expect("(");
        n->kids.push_back(parse_expression());
        expect(")");
        n->kids.push_back(parse_scoped_statement());
        return n;
      }
      if (t.text == "do") {
        ++pos_;
        auto n = make(NK::DoWhile, line);
        n->kids.push_back(parse_scoped_statement());
        if (!peek().is("while")) fail("expected 'while'");
        ++pos_;
        expect("(");
        n->kids.push_back(parse_expression());
        expect(")");
        expect(";");
        return n;
      }
      if (t.text == "return") {
        ++pos_;
        auto n = make(NK::Return, line);
        if (!accept(";")) {
          n->kids.push_back(parse_expression());
          expect(";");
        }
        return n;
      }
      if (t.text == "break" || t.text == "continue") {
        ++pos_;
        expect(";");
        return make(t.text == "break" ? NK::Break : NK::Continue, line);
      }
      if (t.text == "switch" || t.text == "goto" || t.text == "case") {
        throw Error(ErrorCode::Unsupported, "'" + t.text + "' statements are not supported by the interpreter");
      }
      if (starts_declaration()) return parse_declaration();
    }
    auto n = make(NK::ExprStmt, line);
    n->kids.push_back(parse_expression());
    expect(";");
    return n;
  }

  std::unique_ptr<Node> parse_scoped_statement() {
    push_scope();
    auto s = parse_statement();
    pop_scope();
    return s;
  }

  // ---- expressions ----
  std::unique_ptr<Node> parse_expression() {
    auto e = parse_assignment();
    if (!peek().is_punct(",")) return e;
    auto c = make(NK::Comma, e->line);
    c->kids.push_back(std::move(e));
    while (accept(",")) c->kids.push_back(parse_assignment());
    return c;
  }

  std::unique_ptr<Node> parse_assignment() {
    auto lhs = parse_conditional();
    static const std::map<std::string, Op, std::less<>> ops = {
        {"=", Op::None},    {"+=", Op::Add},    {"-=", Op::Sub},    {"*=", Op::Mul},
        {"/=", Op::Div},    {"%=", Op::Mod},    {"<<=", Op::Shl},   {">>=", Op::Shr},
        {"&=", Op::BitAnd}, {"|=", Op::BitOr},  {"^=", Op::BitXor}};
    if (peek().kind == TokKind::Punct) {
      auto it = ops.find(peek().text);
      if (it != ops.end()) {
        ++pos_;
        check_lvalue(*lhs);
        auto n = make(NK::Assign, lhs->line);
        n->op = it->second;
        n->kids.push_back(std::move(lhs));
        n->kids.push_back(parse_assignment());
        return n;
      }
    }
    return lhs;
  }

  void check_lvalue(const Node& n) const {
    const bool ok = n.kind == NK::Local || n.kind == NK::Index || (n.kind == NK::Unary && n.op == Op::Deref) ||
                    (n.kind == NK::Swizzle && n.lanes.size() == 1 && (n.kids[0]->kind == NK::Local ||
                                                                      n.kids[0]->kind == NK::Index));
    if (!ok) throw Error(ErrorCode::Unsupported, "unsupported assignment target at line " + std::to_string(n.line));
  }

  std::unique_ptr<Node> parse_conditional() {
    auto c = parse_binary(1);
    if (!accept("?")) return c;
    auto n = make(NK::Ternary, c->line);
    n->kids.push_back(std::move(c));
    n->kids.push_back(parse_expression());
    expect(":");
    n->kids.push_back(parse_conditional());
    return n;
  }

  static int precedence(const Token& t, Op& op) {
    if (t.kind != TokKind::Punct) return 0;
    static const std::map<std::string, std::pair<int, Op>, std::less<>> table = {
        {"||", {1, Op::LogOr}}, {"&&", {2, Op::LogAnd}}, {"|", {3, Op::BitOr}},  {"^", {4, Op::BitXor}},
        {"&", {5, Op::BitAnd}}, {"==", {6, Op::Eq}},     {"!=", {6, Op::Ne}},    {"<", {7, Op::Lt}},
        {">", {7, Op::Gt}},     {"<=", {7, Op::Le}},     {">=", {7, Op::Ge}},    {"<<", {8, Op::Shl}},
        {">>", {8, Op::Shr}},   {"+", {9, Op::Add}},     {"-", {9, Op::Sub}},    {"*", {10, Op::Mul}},
        {"/", {10, Op::Div}},   {"%", {10, Op::Mod}}};
    auto it = table.find(t.text);
    if (it == table.end()) return 0;
    op = it->second.second;
    return it->second.first;
  }

  std::unique_ptr<Node> parse_binary(int min_prec) {
    auto lhs = parse_unary();
    while (true) {
      Op op;
      const int prec = precedence(peek(), op);
      if (prec == 0 || prec < min_prec) return lhs;
      ++pos_;
      auto rhs = parse_binary(prec + 1);
      auto n = make((op == Op::LogAnd || op == Op::LogOr) ? NK::Logical : NK::Binary, lhs->line);
      n->op = op;
      n->kids.push_back(std::move(lhs));
      n->kids.push_back(std::move(rhs));
      lhs = fold(std::move(n));
    }
  }

  // Folds integer-literal arithmetic so array lengths may use macros like (N * 2).
  std::unique_ptr<Node> fold(std::unique_ptr<Node> n) {
    if (n->kind != NK::Binary || n->kids[0]->kind != NK::IntLit || n->kids[1]->kind != NK::IntLit) return n;
    const std::int64_t x = n->kids[0]->a;
    const std::int64_t y = n->kids[1]->a;
    if (n->kids[0]->type.scalar != Scalar::Int || n->kids[1]->type.scalar != Scalar::Int) return n;
    std::int64_t r;
    switch (n->op) {
      case Op::Add: r = x + y; break;
      case Op::Sub: r = x - y; break;
      case Op::Mul: r = x * y; break;
      case Op::Div: if (y == 0) return n; r = x / y; break;
      case Op::Mod: if (y == 0) return n; r = x % y; break;
      case Op::Shl: r = x << (y & 31); break;
      case Op::Shr: r = x >> (y & 31); break;
      default: return n;
    }
    if (r < std::numeric_limits<std::int32_t>::min() || r > std::numeric_limits<std::int32_t>::max()) return n;
    auto lit = make(NK::IntLit, n->line);
    lit->type = Type{Scalar::Int};
    lit->a = r;
    return lit;
  }

  std::int64_t const_int(std::unique_ptr<Node> n) {
    if (n->kind != NK::IntLit) throw Error(ErrorCode::Unsupported, "array length is not an integer constant");
    if (n->a <= 0) fail("array length must be positive");
    return n->a;
  }

  std::unique_ptr<Node> parse_unary() {
    const Token& t = peek();
    const int line = t.line;
    if (t.kind == TokKind::Punct) {
      static const std::map<std::string, Op, std::less<>> ops = {
          {"-", Op::Neg},     {"+", Op::Plus},    {"!", Op::Not},    {"~", Op::BitNot},
          {"++", Op::PreInc}, {"--", Op::PreDec}, {"*", Op::Deref},  {"&", Op::AddrOf}};
      auto it = ops.find(t.text);
      if (it != ops.end()) {
        ++pos_;
        auto operand = parse_unary();
        if (it->second == Op::Neg && operand->kind == NK::IntLit) {
          operand->a = -operand->a;
          return operand;
        }
        if (it->second == Op::Neg && operand->kind == NK::FloatLit) {
          operand->f = -operand->f;
          return operand;
        }
        if (it->second == Op::PreInc || it->second == Op::PreDec) check_lvalue(*operand);
        if (it->second == Op::AddrOf && operand->kind != NK::Index &&
            !(operand->kind == NK::Unary && operand->op == Op::Deref)) {
          throw Error(ErrorCode::Unsupported, "address of a non-array object at line " + std::to_string(line));
        }
        auto n = make(NK::Unary, line);
        n->op = it->second;
        n->kids.push_back(std::move(operand));
        return n;
      }
      if (t.text == "(" && is_type_word(peek(1))) {
        ++pos_;
        DeclSpec ds = parse_decl_spec();
        Type ty = parse_pointer(ds.type);
        expect(")");
        if (!ty.pointer && ty.width > 1 && peek().is_punct("(")) {
          ++pos_;
          auto n = make(NK::VecLit, line);
          n->type = ty;
          while (true) {
            n->kids.push_back(parse_assignment());
            if (accept(",")) continue;
            expect(")");
            break;
          }
          return n;
        }
        auto n = make(NK::Cast, line);
        n->type = ty;
        n->kids.push_back(parse_unary());
        return n;
      }
    }
    if (t.kind == TokKind::Ident && t.text == "sizeof") {
      throw Error(ErrorCode::Unsupported, "sizeof is not supported by the interpreter");
    }
    return parse_postfix();
  }

  static bool parse_swizzle(std::string_view s, int src_width, std::vector<std::uint8_t>& lanes) {
    lanes.clear();
    auto lane_of = [](char c) -> int {
      switch (c) {
        case 'x': return 0;
        case 'y': return 1;
        case 'z': return 2;
        case 'w': return 3;
        default: return -1;
      }
    };
    if (s == "lo" || s == "hi" || s == "even" || s == "odd") {
      const int half = (src_width + 1) / 2;
      for (int i = 0; i < half; ++i) {
        int l = s == "lo" ? i : s == "hi" ? half + i : s == "even" ? 2 * i : 2 * i + 1;
        lanes.push_back(static_cast<std::uint8_t>(std::min(l, src_width - 1)));
      }
      return true;
    }
    if (s.size() >= 2 && (s[0] == 's' || s[0] == 'S')) {
      for (char c : s.substr(1)) {
        int v = std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
                : (c >= 'a' && c <= 'f')                    ? c - 'a' + 10
                : (c >= 'A' && c <= 'F')                    ? c - 'A' + 10
                                                            : -1;
        if (v < 0) return false;
        lanes.push_back(static_cast<std::uint8_t>(v));
      }
      return true;
    }
    for (char c : s) {
      const int l = lane_of(c);
      if (l < 0) return false;
      lanes.push_back(static_cast<std::uint8_t>(l));
    }
    return !lanes.empty();
  }

  std::unique_ptr<Node> parse_postfix() {
    auto e = parse_primary();
    while (true) {
      const int line = peek().line;
      if (accept("[")) {
        auto n = make(NK::Index, line);
        n->kids.push_back(std::move(e));
        n->kids.push_back(parse_expression());
        expect("]");
        e = std::move(n);
      } else if (accept(".")) {
        const std::string comp = expect_ident();
        auto n = make(NK::Swizzle, line);
        if (!parse_swizzle(comp, 4, n->lanes)) {
          throw Error(ErrorCode::Unsupported, "member access ." + comp + " is not supported");
        }
        if (comp == "lo" || comp == "hi" || comp == "even" || comp == "odd") {
          n->b = comp == "lo" ? 1 : comp == "hi" ? 2 : comp == "even" ? 3 : 4;
        }
        n->kids.push_back(std::move(e));
        e = std::move(n);
      } else if (peek().is_punct("++") || peek().is_punct("--")) {
        check_lvalue(*e);
        auto n = make(NK::Unary, line);
        n->op = next().text == "++" ? Op::PostInc : Op::PostDec;
        n->kids.push_back(std::move(e));
        e = std::move(n);
      } else if (peek().is_punct("->")) {
        throw Error(ErrorCode::Unsupported, "struct member access");
      } else {
        return e;
      }
    }
  }

  std::vector<std::unique_ptr<Node>> parse_call_args() {
    std::vector<std::unique_ptr<Node>> args;
    expect("(");
    if (accept(")")) return args;
    while (true) {
      args.push_back(parse_assignment());
      if (accept(",")) continue;
      expect(")");
      break;
    }
    return args;
  }

  std::unique_ptr<Node> parse_primary() {
    const Token& t = peek();
    const int line = t.line;
    switch (t.kind) {
      case TokKind::Int: {
        ++pos_;
        auto n = make(NK::IntLit, line);
        n->a = parse_int_literal(t.text, n->type);
        return n;
      }
      case TokKind::Float: {
        ++pos_;
        auto n = make(NK::FloatLit, line);
        std::string s = t.text;
        bool f32 = false;
        while (!s.empty() && std::isalpha(static_cast<unsigned char>(s.back())) && s.back() != 'e' && s.back() != 'E') {
          if (s.back() == 'f' || s.back() == 'F' || s.back() == 'h' || s.back() == 'H') f32 = true;
          s.pop_back();
        }
        n->f = std::stod(s);
        n->type = Type{f32 ? Scalar::Float : Scalar::Double};
        if (f32) n->f = static_cast<float>(n->f);
        return n;
      }
      case TokKind::Char: {
        ++pos_;
        auto n = make(NK::IntLit, line);
        n->type = Type{Scalar::Int};
        n->a = t.text.size() >= 3 ? static_cast<unsigned char>(t.text[1]) : 0;
        if (t.text.size() >= 4 && t.text[1] == '\\') {
          switch (t.text[2]) {
            case 'n': n->a = '\n'; break;
            case 't': n->a = '\t'; break;
            case '0': n->a = 0; break;
            default: n->a = static_cast<unsigned char>(t.text[2]);
          }
        }
        return n;
      }
      case TokKind::Ident: {
        const std::string name = t.text;
        ++pos_;
        if (peek().is_punct("(")) return parse_call(name, line);
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
          auto f = it->find(name);
          if (f != it->end()) {
            auto n = make(NK::Local, line);
            n->a = f->second;
            return n;
          }
        }
        if (auto g = global_index_.find(name); g != global_index_.end()) {
          auto n = make(NK::Global, line);
          n->a = g->second;
          return n;
        }
        if (auto c = named_constants().find(name); c != named_constants().end()) {
          if (c->second.is_float) {
            auto n = make(NK::FloatLit, line);
            n->type = Type{Scalar::Float};
            n->f = c->second.f;
            return n;
          }
          auto n = make(NK::IntLit, line);
          n->type = Type{name == "UINT_MAX" ? Scalar::UInt : Scalar::Int};
          n->a = c->second.i;
          return n;
        }
        --pos_;
        fail("undeclared identifier '" + name + "'");
      }
      case TokKind::Punct:
        if (t.text == "(") {
          ++pos_;
          auto e = parse_expression();
          expect(")");
          return e;
        }
        break;
      default: break;
    }
    fail("unexpected token '" + t.text + "'");
  }

  std::unique_ptr<Node> parse_call(const std::string& raw_name, int line) {
    auto args = parse_call_args();
    if (auto it = prog_.function_index.find(raw_name); it != prog_.function_index.end() || user_named(raw_name)) {
      auto n = make(NK::Call, line);
      n->kids = std::move(args);
      pending_calls_.push_back(n.get());
      call_names_[n.get()] = raw_name;
      return n;
    }
    std::string name = raw_name;
    if (name.starts_with("native_")) name = name.substr(7);
    if (name.starts_with("half_")) name = name.substr(5);
    if (name.starts_with("atom_")) name = "atomic_" + name.substr(5);
    if (name.starts_with("convert_")) {
      std::string tname = name.substr(8);
      if (auto u = tname.find('_'); u != std::string::npos) tname = tname.substr(0, u);
      Type ty;
      if (!lookup_type_name(tname, ty)) fail("unknown conversion " + raw_name);
      if (args.size() != 1) fail("conversion takes one argument");
      auto n = make(NK::Cast, line);
      n->type = ty;
      n->kids = std::move(args);
      return n;
    }
    if (name.size() == 6 && (name.starts_with("vload") || name.starts_with("vstor"))) {
      // fallthrough to vstoreN check below
    }
    for (int w : {2, 3, 4}) {
      if (name == "vload" + std::to_string(w) || name == "vstore" + std::to_string(w)) {
        auto n = make(NK::Builtin, line);
        n->a = static_cast<std::int64_t>(name[1] == 'l' ? BuiltinId::VLoad : BuiltinId::VStore);
        n->b = w;
        n->kids = std::move(args);
        return n;
      }
    }
    if (auto it = builtin_names().find(name); it != builtin_names().end()) {
      auto n = make(NK::Builtin, line);
      n->a = static_cast<std::int64_t>(it->second);
      n->kids = std::move(args);
      return n;
    }
    // Possibly a helper defined later in the file.
    auto n = make(NK::Call, line);
    n->kids = std::move(args);
    pending_calls_.push_back(n.get());
    call_names_[n.get()] = raw_name;
    return n;
  }

  bool user_named(const std::string&) const { return false; }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  ProgramImpl& prog_;
  std::vector<std::map<std::string, int>> scopes_;
  std::map<std::string, int> global_index_;
  std::map<std::string, Type> typedefs_;
  int next_slot_ = 0;
  int max_slot_ = 0;
  std::vector<Node*> pending_calls_;
  std::map<Node*, std::string> call_names_;
};

}  // namespace

Type parse_type_name(std::string_view name) {
  Type t;
  if (!lookup_type_name(name, t)) throw Error(ErrorCode::UnsupportedType, "unknown type " + std::string(name));
  return t;
}

Program Program::compile(std::string_view source) {
  auto impl = std::make_shared<ProgramImpl>();
  Parser parser(preprocess_tokens(tokenize(source)), *impl);
  parser.parse_program();
  Program p;
  p.impl_ = std::move(impl);
  return p;
}

bool Program::has_kernel(std::string_view name) const {
  auto it = impl_->function_index.find(name);
  return it != impl_->function_index.end() && impl_->functions[it->second].is_kernel &&
         impl_->functions[it->second].body != nullptr;
}

std::vector<Type> Program::kernel_params(std::string_view name) const {
  auto it = impl_->function_index.find(name);
  if (it == impl_->function_index.end()) throw Error(ErrorCode::InvalidArgument, "no kernel " + std::string(name));
  return impl_->functions[it->second].params;
}

}  // namespace clperf::interp
