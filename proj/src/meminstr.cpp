#include "clperf/meminstr.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "clperf/error.hpp"
#include "clperf/exec.hpp"
#include "clperf/lexer.hpp"

namespace clperf {

namespace {

constexpr std::string_view kHookPrelude =
    "long clperf_hook(global int* clperf_e, int clperf_s, long clperf_b, long clperf_i) {\n"
    " long clperf_v = clperf_b + clperf_i;\n"
    " int clperf_c = clperf_v < -2147483647L ? -2147483647 : (clperf_v > 2147483647L ? 2147483647 : (int)clperf_v);\n"
    " atomic_min(&clperf_e[2 * clperf_s], clperf_c);\n"
    " atomic_max(&clperf_e[2 * clperf_s + 1], clperf_c);\n"
    " return clperf_i;\n"
    "}\n"
    "long clperf_hookv(global int* clperf_e, int clperf_s, long clperf_b, long clperf_o, int clperf_n) {\n"
    " clperf_hook(clperf_e, clperf_s, clperf_b + clperf_o * clperf_n, 0);\n"
    " clperf_hook(clperf_e, clperf_s, clperf_b + clperf_o * clperf_n + clperf_n - 1, 0);\n"
    " return clperf_o;\n"
    "}\n";

const std::set<std::string, std::less<>> kKeywords = {"if",     "for",  "while", "switch", "return", "sizeof",
                                                      "do",     "else", "case",  "goto",   "break",  "continue",
                                                      "typedef", "default"};

const std::set<std::string, std::less<>> kDeclWords = {
    "const",  "restrict", "volatile", "global", "local",  "constant", "private", "__global", "__local",
    "__constant", "__private", "void", "bool", "char", "uchar", "short", "ushort", "int", "uint", "long",
    "ulong", "half", "float", "double", "size_t", "ptrdiff_t", "intptr_t", "uintptr_t", "unsigned", "signed"};

bool is_decl_word(const Token& t) {
  if (t.kind != TokKind::Ident) return false;
  if (kDeclWords.count(t.text)) return true;
  static const char* bases[] = {"char", "uchar", "short", "ushort", "int", "uint", "long", "ulong", "half", "float",
                                "double"};
  for (const char* b : bases) {
    const std::string_view s = t.text;
    const std::string_view base = b;
    if (s.size() > base.size() && s.starts_with(base)) {
      const auto w = s.substr(base.size());
      if (w == "2" || w == "3" || w == "4" || w == "8" || w == "16") return true;
    }
  }
  return false;
}

bool is_atomic_name(std::string_view s) { return s.starts_with("atomic_") || s.starts_with("atom_"); }

// Width of vloadN / vstoreN, or 0.
int vector_io_width(std::string_view s, bool& is_store) {
  for (std::string_view prefix : {"vload", "vstore"}) {
    if (!s.starts_with(prefix)) continue;
    const auto w = s.substr(prefix.size());
    if (w == "2" || w == "3" || w == "4" || w == "8" || w == "16") {
      is_store = prefix == "vstore";
      return std::stoi(std::string(w));
    }
  }
  return 0;
}

struct Edit {
  std::size_t pos;
  std::size_t del;
  std::string text;
  int kind;  // 0 close, 1 open, 2 replace
  std::size_t span;
};

class Instrumenter {
 public:
  Instrumenter(std::string_view src, const KernelSignature& sig) : src_(src), sig_(sig), t_(tokenize(src)) {}

  InstrumentedKernel run() {
    InstrumentedKernel ik;
    ik.entry_name = sig_.entry_name;
    ik.sig = sig_;
    const auto arrays = arrays_of(sig_);
    for (std::size_t p = 0; p < arrays.size(); ++p) {
      if (arrays[p].qualifier != Qualifier::Global) continue;
      const int slot = static_cast<int>(ik.hook_layout.size());
      ik.hook_layout.push_back({static_cast<int>(p), slot});
      tracked_[arrays[p].name] = Tracked{slot, arrays[p].name, true};
    }
    if (ik.hook_layout.empty()) throw Error(ErrorCode::NoArrayAccess, "kernel has no global array argument");

    collect_functions();
    check_macros();
    locate_kernel();
    walk_body();
    if (hooks_ == 0) throw Error(ErrorCode::NoArrayAccess, "no access to a global array was found");

    // Extra parameters.
    const Token& rp = t_[params_close_];
    if (params_close_ == params_open_ + 1) {
      edits_.push_back({rp.offset, 0, "global int* clperf_ext, int clperf_nslots", 1, 0});
    } else if (params_close_ == params_open_ + 2 && t_[params_open_ + 1].is("void")) {
      edits_.push_back({t_[params_open_ + 1].offset, 4, "global int* clperf_ext, int clperf_nslots", 2, 0});
    } else {
      edits_.push_back({rp.offset, 0, ", global int* clperf_ext, int clperf_nslots", 1, 0});
    }

    ik.text = std::string(kHookPrelude) + apply_edits();
    ik.hook_sites = hooks_;
    return ik;
  }

 private:
  struct Tracked {
    int slot;
    std::string root;
    bool is_root;
  };

  struct CallCtx {
    std::size_t close;
    enum Kind { User, Atomic, VectorIo, Other } kind;
    std::vector<std::pair<std::size_t, std::size_t>> args;  // [begin, end) token ranges
    int pointer_arg = -1;
    int offset_arg = -1;
    int width = 0;
    std::string name;
  };

  [[noreturn]] void escape(const Token& at, const std::string& why) const {
    throw Error(ErrorCode::AliasEscape, why + " at line " + std::to_string(at.line));
  }

  std::size_t match(std::size_t i) const {
    const std::string open = t_[i].text;
    const std::string close = open == "(" ? ")" : open == "[" ? "]" : "}";
    int depth = 0;
    for (std::size_t j = i; j < t_.size(); ++j) {
      if (t_[j].is_punct(open)) ++depth;
      if (t_[j].is_punct(close) && --depth == 0) return j;
    }
    throw Error(ErrorCode::ParseError, "unbalanced '" + open + "' at line " + std::to_string(t_[i].line));
  }

  bool unary_context(std::size_t i) const {
    if (i == 0) return true;
    const Token& p = t_[i - 1];
    switch (p.kind) {
      case TokKind::Ident: return kKeywords.count(p.text) > 0;
      case TokKind::Int:
      case TokKind::Float:
      case TokKind::Char:
      case TokKind::String: return false;
      case TokKind::Punct: return !(p.is_punct(")") || p.is_punct("]") || p.is_punct("++") || p.is_punct("--"));
      default: return true;
    }
  }

  void collect_functions() {
    int depth = 0;
    for (std::size_t i = 0; i + 1 < t_.size(); ++i) {
      if (t_[i].is_punct("{")) ++depth;
      if (t_[i].is_punct("}")) --depth;
      if (depth == 0 && t_[i].kind == TokKind::Ident && t_[i + 1].is_punct("(") && !kKeywords.count(t_[i].text) &&
          !t_[i].text.starts_with("__attribute")) {
        functions_.insert(t_[i].text);
      }
    }
  }

  void check_macros() const {
    for (const auto& tok : t_) {
      if (tok.kind != TokKind::Preproc) continue;
      for (const auto& m : tokenize(std::string_view(tok.text).substr(1))) {
        if (m.kind == TokKind::Ident && tracked_.count(m.text)) escape(tok, "array '" + m.text + "' used in a macro");
      }
    }
  }

  void locate_kernel() {
    for (std::size_t i = 0; i + 1 < t_.size(); ++i) {
      if (t_[i].kind != TokKind::Ident || t_[i].text != sig_.entry_name || !t_[i + 1].is_punct("(")) continue;
      const std::size_t close = match(i + 1);
      std::size_t j = close + 1;
      while (j < t_.size() && t_[j].is("__attribute__")) j = match(j + 1) + 1;
      if (j < t_.size() && t_[j].is_punct("{")) {
        params_open_ = i + 1;
        params_close_ = close;
        body_open_ = j;
        body_close_ = match(j);
        return;
      }
    }
    throw Error(ErrorCode::ParseError, "kernel " + sig_.entry_name + " has no body");
  }

  // Tracked identifiers used as pointer values (not subscripted) in [b, e).
  std::vector<std::size_t> pointer_uses(std::size_t b, std::size_t e, bool count_address_of) const {
    std::vector<std::size_t> out;
    for (std::size_t k = b; k < e; ++k) {
      if (t_[k].kind != TokKind::Ident || !tracked_.count(t_[k].text)) continue;
      if (k > 0 && (t_[k - 1].is_punct(".") || t_[k - 1].is_punct("->"))) continue;
      const bool subscripted = k + 1 < e && t_[k + 1].is_punct("[");
      if (!subscripted) {
        out.push_back(k);
      } else if (count_address_of && k > b && t_[k - 1].is_punct("&")) {
        out.push_back(k);
      }
    }
    return out;
  }

  const Tracked& tracked(std::size_t k) const { return tracked_.at(t_[k].text); }

  // Single tracked root behind a pointer expression, or nullopt when untracked.
  std::optional<std::size_t> single_root(std::size_t b, std::size_t e) const {
    const auto uses = pointer_uses(b, e, true);
    if (uses.empty()) return std::nullopt;
    std::set<std::string> roots;
    for (auto k : uses) roots.insert(tracked(k).root);
    if (roots.size() > 1) escape(t_[b], "pointer expression mixes several arrays");
    return uses.front();
  }

  std::string base_of(const std::string& name) const {
    const Tracked& tr = tracked_.at(name);
    return tr.is_root ? "0" : "(" + name + " - " + tr.root + ")";
  }

  std::string hook_open(const std::string& name) const {
    return "clperf_hook(clperf_ext, " + std::to_string(tracked_.at(name).slot) + ", " + base_of(name) + ", ";
  }

  // End of an initializer / right-hand side starting at b.
  std::size_t expr_end(std::size_t b) const {
    int depth = 0;
    for (std::size_t k = b; k < body_close_; ++k) {
      const Token& x = t_[k];
      if (x.is_punct("(") || x.is_punct("[") || x.is_punct("{")) ++depth;
      if (x.is_punct(")") || x.is_punct("]") || x.is_punct("}")) {
        if (depth == 0) return k;
        --depth;
      }
      if (depth == 0 && (x.is_punct(";") || x.is_punct(","))) return k;
    }
    return body_close_;
  }

  bool has_pointer_cast(std::size_t b, std::size_t e) const {
    for (std::size_t k = b; k + 1 < e; ++k) {
      if (t_[k].is_punct("*") && t_[k + 1].is_punct(")") && k > b && is_decl_word(t_[k - 1])) return true;
    }
    return false;
  }

  void bind_alias(const std::string& name, std::size_t b, std::size_t e, const Token& at) {
    const auto r = single_root(b, e);
    if (!r) {
      if (tracked_.count(name) && !tracked_.at(name).is_root) escape(at, "alias '" + name + "' re-pointed");
      return;
    }
    if (has_pointer_cast(b, e)) escape(at, "array pointer cast to another type");
    const std::string root = tracked(*r).root;
    if (auto it = tracked_.find(name); it != tracked_.end()) {
      if (it->second.is_root) escape(at, "array parameter '" + name + "' reassigned");
      if (it->second.root != root) escape(at, "alias '" + name + "' re-pointed to another array");
      return;
    }
    tracked_[name] = Tracked{tracked_.at(root).slot, root, false};
  }

  CallCtx make_call(std::size_t callee) const {
    CallCtx c;
    c.name = t_[callee].text;
    const std::size_t open = callee + 1;
    c.close = match(open);
    std::size_t start = open + 1;
    int depth = 0;
    for (std::size_t k = open + 1; k < c.close; ++k) {
      const Token& x = t_[k];
      if (x.is_punct("(") || x.is_punct("[") || x.is_punct("{")) ++depth;
      if (x.is_punct(")") || x.is_punct("]") || x.is_punct("}")) --depth;
      if (depth == 0 && x.is_punct(",")) {
        c.args.emplace_back(start, k);
        start = k + 1;
      }
    }
    if (start < c.close) c.args.emplace_back(start, c.close);
    bool is_store = false;
    if (functions_.count(c.name)) {
      c.kind = CallCtx::User;
    } else if (is_atomic_name(c.name)) {
      c.kind = CallCtx::Atomic;
      c.pointer_arg = 0;
    } else if (int w = vector_io_width(c.name, is_store); w > 0) {
      c.kind = CallCtx::VectorIo;
      c.width = w;
      c.pointer_arg = is_store ? 2 : 1;
      c.offset_arg = is_store ? 1 : 0;
    } else {
      c.kind = CallCtx::Other;
    }
    return c;
  }

  void handle_call(std::size_t callee) {
    const CallCtx c = make_call(callee);
    for (std::size_t a = 0; a < c.args.size(); ++a) {
      const auto [b, e] = c.args[a];
      const auto uses = pointer_uses(b, e, true);
      if (uses.empty()) continue;
      if (static_cast<int>(a) != c.pointer_arg) {
        escape(t_[uses.front()], "array pointer passed to '" + c.name + "'");
      }
      const auto r = single_root(b, e);
      const std::string rname = t_[*r].text;
      const std::string& slot = std::to_string(tracked_.at(rname).slot);
      const std::string ptr_text(src_.substr(t_[b].offset, t_[e - 1].end - t_[b].offset));
      if (c.kind == CallCtx::Atomic) {
        if (t_[b].is_punct("&") && b + 2 < e && t_[b + 1].kind == TokKind::Ident && t_[b + 2].is_punct("[") &&
            match(b + 2) == e - 1) {
          address_hooks_.insert(b + 2);  // &X[i]: the subscript hook records the access
          continue;
        }
        const std::size_t span = t_[e - 1].end - t_[b].offset;
        edits_.push_back({t_[b].offset, 0, "&" + rname + "[" + hook_open(rname) + "(", 1, span});
        edits_.push_back({t_[e - 1].end, 0, ") - " + rname + ")]", 0, span});
        ++hooks_;
      } else {
        const auto [ob, oe] = c.args[static_cast<std::size_t>(c.offset_arg)];
        const std::size_t span = t_[oe - 1].end - t_[ob].offset;
        edits_.push_back({t_[ob].offset, 0,
                          "clperf_hookv(clperf_ext, " + slot + ", ((" + ptr_text + ") - " +
                              tracked_.at(rname).root + "), (",
                          1, span});
        edits_.push_back({t_[oe - 1].end, 0, "), " + std::to_string(c.width) + ")", 0, span});
        ++hooks_;
        // Subscripts inside the pointer argument only form an address.
        for (std::size_t k = b; k < e; ++k) {
          if (t_[k].is_punct("[") && k > 0 && tracked_.count(t_[k - 1].text)) skip_subscripts_.insert(k);
        }
      }
    }
  }

  void walk_body() {
    bool in_ptr_decl = false;
    std::set<std::size_t> decl_stars;
    for (std::size_t i = body_open_ + 1; i < body_close_; ++i) {
      const Token& tok = t_[i];
      if (tok.is_punct(";")) in_ptr_decl = false;

      // Pointer declarations: "<type> * name [= init]".
      if (tok.is_punct("*") && i + 1 < body_close_ && t_[i + 1].kind == TokKind::Ident &&
          (is_decl_word(t_[i - 1]) || (in_ptr_decl && t_[i - 1].is_punct(",")))) {
        in_ptr_decl = true;
        decl_stars.insert(i);
        const std::string& name = t_[i + 1].text;
        if (tracked_.count(name) && tracked_.at(name).is_root) escape(t_[i + 1], "array parameter shadowed");
        ptr_vars_.insert(name);
        if (i + 2 < body_close_ && t_[i + 2].is_punct("=")) {
          const std::size_t e = expr_end(i + 3);
          bind_alias(name, i + 3, e, t_[i + 1]);
          mark_address_only(i + 3, e);
        }
        continue;
      }

      if (tok.kind == TokKind::Ident) {
        const bool member = i > 0 && (t_[i - 1].is_punct(".") || t_[i - 1].is_punct("->"));
        if (member) continue;
        // Calls.
        if (i + 1 < body_close_ && t_[i + 1].is_punct("(") && !kKeywords.count(tok.text) && !is_decl_word(tok)) {
          handle_call(i);
          continue;
        }
        if (!tracked_.count(tok.text)) {
          if (ptr_vars_.count(tok.text) && i + 1 < body_close_ && t_[i + 1].is_punct("=")) {
            const std::size_t e = expr_end(i + 2);
            bind_alias(tok.text, i + 2, e, tok);
            mark_address_only(i + 2, e);
          }
          continue;
        }
        const Tracked tr = tracked_.at(tok.text);
        // Root moves and alias re-pointing.
        const bool next_is_assign = i + 1 < body_close_ && t_[i + 1].is_punct("=");
        if (tr.is_root) {
          const bool moved = (i + 1 < body_close_ && (t_[i + 1].is_punct("++") || t_[i + 1].is_punct("--") ||
                                                      t_[i + 1].is_punct("+=") || t_[i + 1].is_punct("-=") ||
                                                      next_is_assign)) ||
                             t_[i - 1].is_punct("++") || t_[i - 1].is_punct("--");
          if (moved) escape(tok, "array parameter '" + tok.text + "' modified");
        } else if (next_is_assign) {
          const std::size_t e = expr_end(i + 2);
          bind_alias(tok.text, i + 2, e, tok);
          mark_address_only(i + 2, e);
          continue;
        }
        if (i + 1 < body_close_ && t_[i + 1].is_punct("[")) {
          hook_subscript(i);
          continue;
        }
        if (t_[i - 1].is_punct("*") && !decl_stars.count(i - 1) && unary_context(i - 1)) {
          if (i + 1 < body_close_ && (t_[i + 1].is_punct("++") || t_[i + 1].is_punct("--"))) {
            escape(tok, "post-increment dereference of '" + tok.text + "'");
          }
          edits_.push_back({t_[i - 1].offset, 1, "", 2, 0});
          edits_.push_back({tok.end, 0, "[" + hook_open(tok.text) + "0)]", 1, 0});
          ++hooks_;
        }
        continue;
      }

      // Dereference of a parenthesised pointer expression.
      if (tok.is_punct("*") && !decl_stars.count(i) && unary_context(i) && i + 1 < body_close_ &&
          t_[i + 1].is_punct("(")) {
        const std::size_t close = match(i + 1);
        const auto r = single_root(i + 2, close);
        if (!r) continue;
        const auto uses = pointer_uses(i + 2, close, true);
        std::set<std::string> names;
        for (auto k : uses) names.insert(t_[k].text);
        if (names.size() > 1) escape(tok, "dereference mixes several pointers");
        const std::string rname = t_[*r].text;
        const std::size_t span = t_[close].end - t_[i + 1].offset;
        edits_.push_back({tok.offset, 1, "", 2, 0});
        edits_.push_back({t_[i + 1].offset, 0, rname + "[" + hook_open(rname), 1, span});
        edits_.push_back({t_[close].end, 0, " - " + rname + ")]", 0, span});
        ++hooks_;
      }
    }
  }

  // Subscripts taken only for their address ("&a[i]") in alias initializers.
  void mark_address_only(std::size_t b, std::size_t e) {
    for (std::size_t k = b; k + 1 < e; ++k) {
      if (t_[k].is_punct("&") && t_[k + 1].kind == TokKind::Ident && tracked_.count(t_[k + 1].text) && k + 2 < e &&
          t_[k + 2].is_punct("[")) {
        skip_subscripts_.insert(k + 2);
      }
    }
  }

  void hook_subscript(std::size_t i) {
    const std::size_t open = i + 1;
    if (skip_subscripts_.count(open)) return;
    const bool address_only = t_[i - 1].is_punct("&") && !address_hooks_.count(open);
    const std::size_t close = match(open);
    if (address_only) {
      // "&a[i]" outside an atomic is an address, not an access; it may still escape via a call.
      return;
    }
    const std::size_t span = t_[close].offset - t_[open].end;
    edits_.push_back({t_[open].end, 0, hook_open(t_[i].text) + "(", 1, span});
    edits_.push_back({t_[close].offset, 0, "))", 0, span});
    ++hooks_;
  }

  std::string apply_edits() {
    std::stable_sort(edits_.begin(), edits_.end(), [](const Edit& a, const Edit& b) {
      if (a.pos != b.pos) return a.pos < b.pos;
      if (a.kind != b.kind) return a.kind < b.kind;
      if (a.kind == 0) return a.span < b.span;
      if (a.kind == 1) return a.span > b.span;
      return false;
    });
    std::string out;
    out.reserve(src_.size() + edits_.size() * 48);
    std::size_t cur = 0;
    for (const auto& e : edits_) {
      if (e.pos < cur) throw Error(ErrorCode::Unsupported, "overlapping rewrite");
      out.append(src_.substr(cur, e.pos - cur));
      out.append(e.text);
      cur = e.pos + e.del;
    }
    out.append(src_.substr(cur));
    return out;
  }

  std::string_view src_;
  const KernelSignature& sig_;
  std::vector<Token> t_;
  std::map<std::string, Tracked> tracked_;
  std::set<std::string> functions_;
  std::set<std::string> ptr_vars_;
  std::set<std::size_t> address_hooks_;
  std::set<std::size_t> skip_subscripts_;
  std::vector<Edit> edits_;
  std::size_t params_open_ = 0, params_close_ = 0, body_open_ = 0, body_close_ = 0;
  int hooks_ = 0;
};

bool is_probe_failure(ErrorCode c) {
  return c != ErrorCode::ExtentOverflow && c != ErrorCode::NegativeExtent;
}

}  // namespace

InstrumentedKernel instrument_array_hooks(std::string_view src, const KernelSignature& sig) {
  return Instrumenter(src, sig).run();
}

std::vector<AccessExtent> probe_once(const InstrumentedKernel& ik, const std::vector<double>& scalar_values,
                                     ProbePoint probe, const ProbePolicy& policy, Executor& exec,
                                     std::uint64_t data_seed) {
  if (probe.gsize <= 0 || probe.lsize <= 0 || probe.gsize % probe.lsize != 0) {
    throw Error(ErrorCode::InvalidArgument, "probe gsize must be a positive multiple of lsize");
  }
  const auto arrays = arrays_of(ik.sig);
  for (const std::int64_t factor : {policy.over_alloc, policy.retry_over_alloc}) {
    LaunchConfig cfg;
    cfg.kernel_id = ik.entry_name;
    cfg.input.scalar_values = scalar_values;
    cfg.input.provenance = Provenance::MemAnalysis;
    for (const auto& a : arrays) {
      cfg.input.array_sizes.push_back(a.qualifier == Qualifier::Local ? probe.lsize : factor * probe.gsize);
    }
    cfg.exec = make_exec_setting(probe.gsize / probe.lsize, probe.lsize);
    cfg.data_seed = data_seed;
    std::vector<AccessExtent> ext;
    try {
      ext = exec.probe_run(ik, cfg);
    } catch (const Error& e) {
      if (!is_probe_failure(e.code())) throw;
      throw Error(ErrorCode::ProbeRuntimeFailure, std::string(to_string(e.code())) + ": " + e.what());
    }
    const bool overflow = std::any_of(ext.begin(), ext.end(), [&](const AccessExtent& x) {
      return x.accessed && x.max_index >= factor * probe.gsize;
    });
    if (overflow) continue;
    for (const auto& x : ext) {
      if (x.accessed && x.min_index < 0) {
        throw Error(ErrorCode::NegativeExtent, "array " + arrays[x.array_position].name + " accessed at index " +
                                                   std::to_string(x.min_index));
      }
    }
    return ext;
  }
  throw Error(ErrorCode::ExtentOverflow, "access beyond " + std::to_string(policy.retry_over_alloc) +
                                            " x gsize at gsize " + std::to_string(probe.gsize));
}

std::vector<std::pair<AccessExtent, AccessExtent>> probe_extents(const InstrumentedKernel& ik,
                                                                 const std::vector<double>& scalar_values,
                                                                 const ProbePolicy& policy, Executor& exec,
                                                                 std::uint64_t data_seed) {
  if (policy.first.gsize == policy.second.gsize) {
    throw Error(ErrorCode::InvalidArgument, "probe gsizes must differ");
  }
  const auto p1 = probe_once(ik, scalar_values, policy.first, policy, exec, data_seed);
  const auto p2 = probe_once(ik, scalar_values, policy.second, policy, exec, data_seed);
  std::vector<std::pair<AccessExtent, AccessExtent>> out;
  for (std::size_t i = 0; i < p1.size(); ++i) out.emplace_back(p1[i], p2[i]);
  return out;
}

}  // namespace clperf
