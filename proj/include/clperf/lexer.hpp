#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace clperf {

enum class TokKind { Ident, Int, Float, Char, String, Punct, Preproc, End };

struct Token {
  TokKind kind = TokKind::End;
  std::string text;
  std::size_t offset = 0;  // byte offset of the first character
  std::size_t end = 0;     // one past the last character
  int line = 1;
  int col = 1;

  bool is(std::string_view s) const { return (kind == TokKind::Punct || kind == TokKind::Ident) && text == s; }
  bool is_punct(std::string_view s) const { return kind == TokKind::Punct && text == s; }
};

/// Tokenizes OpenCL C. Comments are dropped; each preprocessor directive
/// (including backslash continuations) becomes a single Preproc token.
/// The returned vector always ends with an End token.
std::vector<Token> tokenize(std::string_view src);

bool is_ident_start(char c);
bool is_ident_char(char c);

}  // namespace clperf
