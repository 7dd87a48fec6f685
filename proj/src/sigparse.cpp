#include "clperf/sigparse.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "clperf/error.hpp"
#include "clperf/lexer.hpp"

namespace clperf {

namespace {

constexpr std::array<std::string_view, 11> kScalarTypes = {"char", "uchar", "short", "ushort", "int",   "uint",
                                                           "long", "ulong", "float", "double", "half"};

// Built-in aliases resolved by name.
constexpr std::array<std::pair<std::string_view, std::string_view>, 1> kAliases = {{{"size_t", "ulong"}}};

constexpr std::array<int, 5> kVectorWidths = {2, 3, 4, 8, 16};

bool is_known_type_word(std::string_view w);

bool is_unsupported_type_word(std::string_view w) {
  return w == "struct" || w == "union" || w == "enum" || w == "sampler_t" || w == "event_t" || w == "void" ||
         w.starts_with("image") || w == "bool" || w == "pipe" || w == "queue_t" || w == "clk_event_t";
}

[[noreturn]] void parse_fail(const Token& t, const std::string& msg) {
  throw Error(ErrorCode::ParseError, msg + " at line " + std::to_string(t.line) + ", column " + std::to_string(t.col));
}

// Splits "float4" into ("float", 4). Returns false when not a known type.
bool split_vector_type(std::string_view word, std::string& base, int& width) {
  for (auto s : kScalarTypes) {
    if (word == s) {
      base = std::string(s);
      width = 1;
      return true;
    }
    if (word.starts_with(s) && word.size() > s.size()) {
      const std::string_view suffix = word.substr(s.size());
      for (int w : kVectorWidths) {
        if (suffix == std::to_string(w)) {
          base = std::string(s);
          width = w;
          return true;
        }
      }
    }
  }
  for (const auto& [alias, target] : kAliases) {
    if (word == alias) {
      base = std::string(alias);
      width = 1;
      return true;
    }
  }
  return false;
}

bool is_known_type_word(std::string_view w) {
  std::string base;
  int width = 0;
  return split_vector_type(w, base, width) || is_unsupported_type_word(w);
}

class ParamParser {
 public:
  ParamParser(const std::vector<Token>& toks, std::size_t pos) : toks_(toks), pos_(pos) {}

  std::vector<ArgSpec> parse_list() {
    std::vector<ArgSpec> args;
    expect("(");
    if (peek().is_punct(")")) {
      ++pos_;
      return args;
    }
    if (peek().is("void") && toks_[pos_ + 1].is_punct(")")) {
      pos_ += 2;
      return args;
    }
    while (true) {
      ArgSpec a = parse_param();
      a.position = static_cast<int>(args.size());
      args.push_back(std::move(a));
      if (peek().is_punct(",")) {
        ++pos_;
        continue;
      }
      expect(")");
      break;
    }
    return args;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }

  void expect(std::string_view p) {
    if (!peek().is_punct(p)) parse_fail(peek(), "expected '" + std::string(p) + "'");
    ++pos_;
  }

  ArgSpec parse_param() {
    ArgSpec a;
    bool has_space = false;
    bool is_signed = false;
    bool is_unsigned = false;
    std::string type_word;
    int pointers = 0;
    const Token& start = peek();
    while (true) {
      const Token& t = peek();
      if (t.kind == TokKind::Ident) {
        const std::string& w = t.text;
        if (w == "global" || w == "local" || w == "constant" || w == "private") {
          if (has_space) parse_fail(t, "duplicate address space qualifier");
          a.qualifier = qualifier_from_string(w);
          has_space = true;
        } else if (w == "const" || w == "volatile" || w == "restrict" || w == "read_only" || w == "write_only" ||
                   w == "read_write" || w == "__read_only" || w == "__write_only" || w == "__read_write" ||
                   w == "__restrict" || w == "__restrict__") {
          // no effect on the signature
        } else if (w == "signed") {
          is_signed = true;
        } else if (w == "unsigned") {
          is_unsigned = true;
        } else if (w == "__attribute__") {
          ++pos_;
          skip_group();
          continue;
        } else if (type_word.empty() && !((is_signed || is_unsigned) && !is_known_type_word(w))) {
          type_word = w;
        } else if (pointers == 0 && (type_word == "long" || type_word == "short") && (w == "int" || w == "long")) {
          // "long int", "short int", "long long": the first word fixes the type
        } else {
          a.name = w;
          ++pos_;
          break;
        }
        ++pos_;
        continue;
      }
      if (t.is_punct("*")) {
        ++pos_;
        ++pointers;
        continue;
      }
      if (t.is_punct(",") || t.is_punct(")")) parse_fail(t, "missing parameter name");
      parse_fail(t, "unexpected token '" + t.text + "' in parameter list");
    }
    // Array declarator "name[]" or "name[N]".
    if (peek().is_punct("[")) {
      ++pos_;
      while (!peek().is_punct("]")) {
        if (peek().kind == TokKind::End) parse_fail(peek(), "unterminated array declarator");
        ++pos_;
      }
      ++pos_;
      ++pointers;
    }
    if (is_unsupported_type_word(type_word)) {
      throw Error(ErrorCode::UnsupportedType, "parameter '" + a.name + "' has unsupported type '" + type_word + "'");
    }
    if (type_word.empty()) type_word = "int";  // bare "unsigned"/"signed"
    if (is_unsigned) {
      if (type_word == "char" || type_word == "short" || type_word == "int" || type_word == "long") {
        type_word = "u" + type_word;
      } else {
        parse_fail(start, "'unsigned' applied to " + type_word);
      }
    }
    if (!split_vector_type(type_word, a.base_type, a.vector_width)) {
      throw Error(ErrorCode::UnsupportedType, "parameter '" + a.name + "' has unknown type '" + type_word + "'");
    }
    if (pointers > 1) {
      throw Error(ErrorCode::UnsupportedType, "parameter '" + a.name + "' is a pointer to pointer");
    }
    a.is_array = pointers == 1;
    if (a.is_array && !has_space) a.qualifier = Qualifier::Global;
    if (!a.is_array && has_space && a.qualifier != Qualifier::Private) {
      parse_fail(start, "scalar parameter '" + a.name + "' with address space qualifier");
    }
    return a;
  }

  void skip_group() {
    if (!peek().is_punct("(")) parse_fail(peek(), "expected '('");
    int depth = 0;
    do {
      if (peek().is_punct("(")) ++depth;
      if (peek().is_punct(")")) --depth;
      if (peek().kind == TokKind::End) parse_fail(peek(), "unterminated attribute");
      ++pos_;
    } while (depth > 0);
  }

  const std::vector<Token>& toks_;
  std::size_t pos_;
};

}  // namespace

std::string_view to_string(Qualifier q) {
  switch (q) {
    case Qualifier::Global: return "global";
    case Qualifier::Local: return "local";
    case Qualifier::Constant: return "constant";
    case Qualifier::Private: return "private";
  }
  return "private";
}

Qualifier qualifier_from_string(std::string_view s) {
  if (s == "global") return Qualifier::Global;
  if (s == "local") return Qualifier::Local;
  if (s == "constant") return Qualifier::Constant;
  if (s == "private") return Qualifier::Private;
  throw Error(ErrorCode::InvalidArgument, "unknown qualifier " + std::string(s));
}

std::string ArgSpec::type_name() const {
  return vector_width == 1 ? base_type : base_type + std::to_string(vector_width);
}

std::string_view canonical_scalar(std::string_view base_type) {
  for (const auto& [alias, target] : kAliases) {
    if (base_type == alias) return target;
  }
  return base_type;
}

bool is_float_type(std::string_view base_type) {
  return base_type == "float" || base_type == "double" || base_type == "half";
}

KernelSignature parse_signature(std::string_view normalized_text, std::string_view entry_name) {
  const auto toks = tokenize(normalized_text);
  // Find "entry_name (" with a "kernel" keyword earlier in the same top-level item.
  bool kernel_seen = false;
  int depth = 0;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    const Token& t = toks[i];
    if (t.is_punct("{")) ++depth;
    if (t.is_punct("}")) --depth;
    if (depth != 0) continue;
    if (t.is_punct(";") || t.is_punct("}")) kernel_seen = false;
    if (t.kind == TokKind::Ident && t.text == "kernel") kernel_seen = true;
    if (kernel_seen && t.kind == TokKind::Ident && t.text == entry_name && toks[i + 1].is_punct("(")) {
      KernelSignature sig;
      sig.entry_name = std::string(entry_name);
      sig.args = ParamParser(toks, i + 1).parse_list();
      std::set<std::string> names;
      for (const auto& a : sig.args) {
        if (!names.insert(a.name).second) {
          throw Error(ErrorCode::ParseError, "duplicate parameter name '" + a.name + "'");
        }
      }
      return sig;
    }
  }
  throw Error(ErrorCode::ParseError, "kernel '" + std::string(entry_name) + "' not found");
}

std::vector<ArgSpec> scalars_of(const KernelSignature& sig) {
  std::vector<ArgSpec> out;
  std::copy_if(sig.args.begin(), sig.args.end(), std::back_inserter(out), [](const ArgSpec& a) { return !a.is_array; });
  return out;
}

std::vector<ArgSpec> arrays_of(const KernelSignature& sig) {
  std::vector<ArgSpec> out;
  std::copy_if(sig.args.begin(), sig.args.end(), std::back_inserter(out), [](const ArgSpec& a) { return a.is_array; });
  return out;
}

std::string unparse(const KernelSignature& sig) {
  std::string s = "kernel void " + sig.entry_name + "(";
  for (std::size_t i = 0; i < sig.args.size(); ++i) {
    const ArgSpec& a = sig.args[i];
    if (i) s += ", ";
    if (a.is_array) {
      s += std::string(to_string(a.qualifier)) + " " + a.type_name() + "* " + a.name;
    } else {
      s += a.type_name() + " " + a.name;
    }
  }
  s += ")";
  return s;
}

}  // namespace clperf
