#include "clperf/lexer.hpp"

#include <array>
#include <cctype>

#include "clperf/error.hpp"

namespace clperf {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

namespace {

constexpr std::array<std::string_view, 3> kPunct3 = {"<<=", ">>=", "..."};
constexpr std::array<std::string_view, 19> kPunct2 = {"->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
                                                      "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^="};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    bool line_start = true;
    while (true) {
      // Whitespace and comments.
      while (pos_ < src_.size()) {
        char c = src_[pos_];
        if (c == '\n') {
          line_start = true;
          advance();
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
          advance();
        } else if (c == '\\' && peek(1) == '\n') {
          advance();
          advance();
        } else if (c == '/' && peek(1) == '/') {
          while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        } else if (c == '/' && peek(1) == '*') {
          advance();
          advance();
          while (pos_ < src_.size() && !(src_[pos_] == '*' && peek(1) == '/')) advance();
          if (pos_ >= src_.size()) fail("unterminated comment");
          advance();
          advance();
        } else {
          break;
        }
      }
      if (pos_ >= src_.size()) break;

      Token t;
      t.offset = pos_;
      t.line = line_;
      t.col = col_;
      const char c = src_[pos_];
      if (c == '#' && line_start) {
        lex_preproc();
        t.kind = TokKind::Preproc;
      } else if (is_ident_start(c)) {
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
        t.kind = TokKind::Ident;
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
        t.kind = lex_number();
      } else if (c == '\'' || c == '"') {
        lex_quoted(c);
        t.kind = c == '\'' ? TokKind::Char : TokKind::String;
      } else {
        lex_punct();
        t.kind = TokKind::Punct;
      }
      line_start = false;
      t.end = pos_;
      t.text = std::string(src_.substr(t.offset, t.end - t.offset));
      out.push_back(std::move(t));
    }
    Token end;
    end.offset = end.end = src_.size();
    end.line = line_;
    end.col = col_;
    out.push_back(end);
    return out;
  }

 private:
  char peek(std::size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError, msg + " at line " + std::to_string(line_) + ", column " + std::to_string(col_));
  }

  void lex_preproc() {
    while (pos_ < src_.size()) {
      if (src_[pos_] == '\\' && peek(1) == '\n') {
        advance();
        advance();
        continue;
      }
      if (src_[pos_] == '\n') break;
      advance();
    }
  }

  TokKind lex_number() {
    bool is_float = false;
    if (src_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
      advance();
      advance();
      while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    } else {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        is_float = true;
        advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        is_float = true;
        advance();
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      }
    }
    while (pos_ < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_]))) {
      const char s = src_[pos_];
      if (s == 'f' || s == 'F' || s == 'h' || s == 'H') is_float = true;
      advance();
    }
    return is_float ? TokKind::Float : TokKind::Int;
  }

  void lex_quoted(char q) {
    advance();
    while (pos_ < src_.size() && src_[pos_] != q) {
      if (src_[pos_] == '\\') advance();
      if (pos_ < src_.size()) advance();
    }
    if (pos_ >= src_.size()) fail("unterminated literal");
    advance();
  }

  void lex_punct() {
    const std::string_view rest = src_.substr(pos_);
    for (auto p : kPunct3) {
      if (rest.starts_with(p)) {
        for (std::size_t i = 0; i < p.size(); ++i) advance();
        return;
      }
    }
    for (auto p : kPunct2) {
      if (rest.starts_with(p)) {
        advance();
        advance();
        return;
      }
    }
    advance();
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

std::vector<Token> tokenize(std::string_view src) { return Lexer(src).run(); }

}  // namespace clperf
