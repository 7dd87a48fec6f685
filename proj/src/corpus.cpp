#include "clperf/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "clperf/lexer.hpp"

namespace clperf {

namespace {

constexpr std::array<std::string_view, 5> kStrippable = {"__kernel", "__global", "__local", "__constant",
                                                         "__private"};

constexpr std::array<std::string_view, 6> kIndexingBuiltins = {"get_global_id",   "get_local_id",  "get_group_id",
                                                               "get_global_size", "get_local_size", "get_num_groups"};

std::string strip_qualifiers(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_ident_start(text[i]) && (i == 0 || !is_ident_char(text[i - 1]))) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      const std::string_view word = text.substr(i, j - i);
      if (std::find(kStrippable.begin(), kStrippable.end(), word) != kStrippable.end()) {
        out.append(word.substr(2));
      } else {
        out.append(word);
      }
      i = j;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::vector<std::string> lines;
  std::string cur;
  bool in_run = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      c = '\n';
    }
    if (c == '\n') {
      while (!cur.empty() && cur.back() == ' ') cur.pop_back();
      lines.push_back(std::move(cur));
      cur.clear();
      in_run = false;
      continue;
    }
    if (c == ' ' || c == '\t') {
      if (!in_run) cur.push_back(' ');
      in_run = true;
      continue;
    }
    in_run = false;
    cur.push_back(c);
  }
  while (!cur.empty() && cur.back() == ' ') cur.pop_back();
  lines.push_back(std::move(cur));

  std::size_t first = 0;
  std::size_t last = lines.size();
  while (first < last && lines[first].empty()) ++first;
  while (last > first && lines[last - 1].empty()) --last;
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    if (i != first) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

bool has_kernel_keyword(const std::vector<Token>& toks) {
  return std::any_of(toks.begin(), toks.end(), [](const Token& t) { return t.kind == TokKind::Ident && t.text == "kernel"; });
}

// A top-level item: [begin, end) byte range plus its token range.
struct Item {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t tok_begin = 0;
  std::size_t tok_end = 0;
  bool is_kernel = false;
  std::string entry;
};

std::size_t skip_parens(const std::vector<Token>& toks, std::size_t i) {
  // toks[i] is "("; returns index one past the matching ")".
  int depth = 0;
  for (; i < toks.size(); ++i) {
    if (toks[i].is_punct("(")) ++depth;
    if (toks[i].is_punct(")") && --depth == 0) return i + 1;
    if (toks[i].kind == TokKind::End) break;
  }
  return i;
}

void classify_item(const std::vector<Token>& toks, Item& item) {
  bool saw_kernel = false;
  for (std::size_t i = item.tok_begin; i < item.tok_end; ++i) {
    const Token& t = toks[i];
    if (t.kind == TokKind::Ident && t.text == "__attribute__") {
      if (i + 1 < item.tok_end && toks[i + 1].is_punct("(")) {
        i = skip_parens(toks, i + 1) - 1;
      }
      continue;
    }
    if (t.kind == TokKind::Ident && t.text == "kernel") saw_kernel = true;
    if (t.is_punct("(")) {
      if (saw_kernel && i > item.tok_begin && toks[i - 1].kind == TokKind::Ident) {
        item.is_kernel = true;
        item.entry = toks[i - 1].text;
      }
      return;
    }
    if (t.is_punct("{") || t.is_punct(";") || t.is_punct("=")) return;
  }
}

std::vector<Item> split_items(std::string_view text, const std::vector<Token>& toks) {
  std::vector<Item> items;
  std::size_t prev_end = 0;
  std::size_t i = 0;
  const std::size_t n = toks.size() - 1;  // skip End
  while (i < n) {
    Item item;
    item.begin = prev_end;
    item.tok_begin = i;
    if (toks[i].kind == TokKind::Preproc) {
      ++i;
    } else {
      int depth = 0;
      bool function_body = false;
      for (; i < n; ++i) {
        const Token& t = toks[i];
        if (t.is_punct("{") || t.is_punct("(") || t.is_punct("[")) {
          if (depth == 0 && t.is_punct("{") && i > item.tok_begin && toks[i - 1].is_punct(")")) function_body = true;
          ++depth;
        } else if (t.is_punct("}") || t.is_punct(")") || t.is_punct("]")) {
          --depth;
          if (depth == 0 && t.is_punct("}") && function_body) {
            ++i;
            break;
          }
        } else if (depth == 0 && t.is_punct(";")) {
          ++i;
          break;
        }
      }
    }
    item.tok_end = i;
    item.end = toks[i - 1].end;
    prev_end = item.end;
    classify_item(toks, item);
    items.push_back(std::move(item));
  }
  if (!items.empty()) items.back().end = text.size();
  return items;
}

std::string trim_blank_lines(std::string_view s) {
  std::size_t b = 0;
  while (b < s.size() && (s[b] == '\n' || s[b] == ' ')) ++b;
  // Keep a leading space that belongs to the first line's content.
  while (b > 0 && s[b - 1] == ' ') --b;
  std::size_t e = s.size();
  while (e > b && (s[e - 1] == '\n' || s[e - 1] == ' ')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

bool KernelSource::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

std::string preprocess_kernel(std::string_view raw_text) {
  std::string out = normalize_whitespace(strip_qualifiers(raw_text));
  if (!has_kernel_keyword(tokenize(out))) {
    throw Error(ErrorCode::EmptySource, "no kernel function in source");
  }
  return out;
}

int classify_dimensionality(std::string_view normalized_text) {
  const auto toks = tokenize(normalized_text);
  int max_dim = -1;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    const Token& t = toks[i];
    if (t.kind != TokKind::Ident) continue;
    if (std::find(kIndexingBuiltins.begin(), kIndexingBuiltins.end(), t.text) == kIndexingBuiltins.end()) continue;
    if (!toks[i + 1].is_punct("(")) continue;
    if (i + 3 < toks.size() && toks[i + 2].kind == TokKind::Int && toks[i + 3].is_punct(")")) {
      const int d = std::stoi(toks[i + 2].text, nullptr, 0);
      max_dim = std::max(max_dim, d);
    } else {
      throw Error(ErrorCode::NonLiteralDimension, "non-literal dimension argument to " + t.text + " at line " +
                                                      std::to_string(t.line));
    }
  }
  if (max_dim > 2) throw Error(ErrorCode::NonLiteralDimension, "dimension index out of range");
  return max_dim < 0 ? 1 : max_dim + 1;
}

bool uses_indexing_builtin(std::string_view normalized_text) {
  const auto toks = tokenize(normalized_text);
  return std::any_of(toks.begin(), toks.end(), [](const Token& t) {
    return t.kind == TokKind::Ident &&
           std::find(kIndexingBuiltins.begin(), kIndexingBuiltins.end(), t.text) != kIndexingBuiltins.end();
  });
}

std::vector<KernelSource> filter_corpus(std::vector<KernelSource> kernels) {
  std::erase_if(kernels, [](const KernelSource& k) { return k.dimensionality != 1; });
  return kernels;
}

std::vector<KernelSource> split_kernels(std::string_view file_stem, std::string_view raw_text,
                                        std::string_view normalized_text) {
  const auto toks = tokenize(normalized_text);
  const auto items = split_items(normalized_text, toks);
  std::vector<KernelSource> out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (!items[k].is_kernel) continue;
    std::string text;
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (j != k && items[j].is_kernel) continue;
      text.append(normalized_text.substr(items[j].begin, items[j].end - items[j].begin));
    }
    KernelSource ks;
    ks.entry_name = items[k].entry;
    ks.kernel_id = std::string(file_stem) + "::" + ks.entry_name;
    ks.raw_text = std::string(raw_text);
    ks.normalized_text = trim_blank_lines(text);
    out.push_back(std::move(ks));
  }
  return out;
}

IngestResult ingest_text(std::string_view file_stem, std::string_view raw_text) {
  IngestResult r;
  std::string normalized;
  try {
    normalized = preprocess_kernel(raw_text);
  } catch (const Error& e) {
    r.exclusions.push_back(make_exclusion("ingest", std::string(file_stem), e));
    return r;
  }
  for (auto& ks : split_kernels(file_stem, raw_text, normalized)) {
    try {
      ks.dimensionality = classify_dimensionality(ks.normalized_text);
      if (!uses_indexing_builtin(ks.normalized_text)) ks.flags.emplace_back("no_indexing_builtin");
      r.kernels.push_back(std::move(ks));
    } catch (const Error& e) {
      r.exclusions.push_back(make_exclusion("ingest", ks.kernel_id, e));
    }
  }
  return r;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

IngestResult ingest_path(const std::filesystem::path& dir_or_manifest) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(dir_or_manifest)) {
    for (const auto& e : fs::recursive_directory_iterator(dir_or_manifest)) {
      if (e.is_regular_file() && e.path().extension() == ".cl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(dir_or_manifest)) {
    std::istringstream lines(read_file(dir_or_manifest));
    std::string line;
    while (std::getline(lines, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      fs::path p(line);
      files.push_back(p.is_absolute() ? p : dir_or_manifest.parent_path() / p);
    }
  } else {
    throw Error(ErrorCode::IoError, "corpus path does not exist: " + dir_or_manifest.string());
  }

  IngestResult all;
  std::set<std::string> seen;
  for (const auto& f : files) {
    IngestResult r = ingest_text(f.stem().string(), read_file(f));
    for (auto& k : r.kernels) {
      if (!seen.insert(k.kernel_id).second) {
        all.exclusions.push_back(make_exclusion("ingest", k.kernel_id, ErrorCode::InvalidArgument,
                                                "duplicate kernel_id from " + f.string()));
        continue;
      }
      all.kernels.push_back(std::move(k));
    }
    for (auto& e : r.exclusions) all.exclusions.push_back(std::move(e));
  }
  return all;
}

}  // namespace clperf
