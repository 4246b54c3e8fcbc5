#include <algorithm>
#include <array>
#include <cctype>

#include "motkit/codemetrics.hpp"

namespace motkit::metrics {
namespace {

// True/False/None are lexed as operands: they behave like literal values.
constexpr std::array<std::string_view, 32> kKeywords = {
    "and",    "as",     "assert", "async",    "await",  "break", "class",
    "continue", "def",  "del",    "elif",     "else",   "except", "finally",
    "for",    "from",   "global", "if",       "import", "in",    "is",
    "lambda", "nonlocal", "not",  "or",       "pass",   "raise", "return",
    "try",    "while",  "with",   "yield"};

// Longest match first.
constexpr std::array<std::string_view, 48> kOperators = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>",
    "<=",  ">=",  "==",  "!=",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=",
    "^=",  "@=",  "+",   "-",   "*",   "/",  "%",  "@",  "&",  "|",  "^",
    "~",   "<",   ">",   "(",   ")",   "[",  "]",  "{",  "}",  ",",  ":",
    ".",   ";",   "=",   "!"};

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

bool is_ident_start(unsigned char c) {
  return std::isalpha(c) || c == '_' || c >= 0x80;
}
bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  TokenStream run() {
    TokenStream out;
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_ && depth_ == 0) handle_indentation();
      at_line_start_ = false;
      char c = src_[pos_];
      if (c == '\n') {
        newline();
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
        ++pos_;
        continue;
      }
      if (c == '\\' && pos_ + 1 < src_.size() &&
          (src_[pos_ + 1] == '\n' ||
           (src_[pos_ + 1] == '\r' && pos_ + 2 < src_.size() &&
            src_[pos_ + 2] == '\n'))) {
        // Explicit line joining.
        pos_ += src_[pos_ + 1] == '\n' ? 2 : 3;
        ++line_;
        line_begin_ = pos_;
        continue;
      }
      if (c == '#') {
        lex_comment();
        continue;
      }
      if (string_prefix_length() != std::string_view::npos) {
        lex_string();
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number();
        continue;
      }
      if (is_ident_start(static_cast<unsigned char>(c))) {
        lex_name();
        continue;
      }
      lex_operator();
    }
    if (line_has_content_) emit(TokenKind::newline, "", pos_);
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(TokenKind::dedent, "", pos_);
    }
    tokens_.swap(out.tokens);
    out.total_lines = count_lines();
    return out;
  }

 private:
  std::size_t count_lines() const {
    if (src_.empty()) return 0;
    auto n = static_cast<std::size_t>(std::count(src_.begin(), src_.end(), '\n'));
    return src_.back() == '\n' ? n : n + 1;
  }

  std::size_t column_of(std::size_t offset) const { return offset - line_begin_; }

  void emit(TokenKind kind, std::string_view text, std::size_t begin,
            std::size_t end_line = 0) {
    tokens_.push_back({kind, std::string(text), line_,
                       end_line == 0 ? line_ : end_line, column_of(begin)});
  }

  void emit_content(TokenKind kind, std::string_view text,
                    std::size_t start_line, std::size_t start_col) {
    tokens_.push_back({kind, std::string(text), start_line, line_, start_col});
    line_has_content_ = true;
  }

  void newline() {
    if (depth_ == 0 && line_has_content_) {
      emit(TokenKind::newline, "\n", pos_);
      line_has_content_ = false;
    }
    ++pos_;
    ++line_;
    line_begin_ = pos_;
    at_line_start_ = true;
  }

  // Blank and comment-only lines leave the indentation stack untouched.
  void handle_indentation() {
    std::size_t col = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      char c = src_[p];
      if (c == ' ') {
        ++col;
      } else if (c == '\t') {
        col = (col / 8 + 1) * 8;
      } else if (c == '\f') {
        col = 0;
      } else {
        break;
      }
      ++p;
    }
    at_line_start_ = false;
    if (p >= src_.size() || src_[p] == '\n' || src_[p] == '#' ||
        (src_[p] == '\r' && p + 1 < src_.size() && src_[p + 1] == '\n')) {
      pos_ = p;
      return;
    }
    pos_ = p;
    if (col > indents_.back()) {
      indents_.push_back(col);
      emit(TokenKind::indent, "", pos_);
    } else {
      while (col < indents_.back()) {
        indents_.pop_back();
        emit(TokenKind::dedent, "", pos_);
      }
      if (col != indents_.back()) {
        // Inconsistent dedent; keep going with the nearest level.
        emit(TokenKind::error, "", pos_);
      }
    }
  }

  void lex_comment() {
    std::size_t begin = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
    auto text = src_.substr(begin, pos_ - begin);
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    tokens_.push_back(
        {TokenKind::comment, std::string(text), line_, line_, column_of(begin)});
  }

  // Length of a string prefix (r, b, f, u, rb, ...) when a quote follows.
  std::size_t string_prefix_length() const {
    std::size_t p = pos_;
    while (p < src_.size() && p - pos_ < 2 &&
           std::string_view("rRbBuUfF").find(src_[p]) != std::string_view::npos) {
      ++p;
    }
    if (p < src_.size() && (src_[p] == '\'' || src_[p] == '"')) return p - pos_;
    return std::string_view::npos;
  }

  void lex_string() {
    std::size_t begin = pos_;
    std::size_t start_line = line_;
    std::size_t start_col = column_of(begin);
    pos_ += string_prefix_length();
    char q = src_[pos_];
    bool triple = pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q;
    pos_ += triple ? 3 : 1;
    bool closed = false;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\\' && pos_ + 1 < src_.size()) {
        if (src_[pos_ + 1] == '\n') {
          ++line_;
          line_begin_ = pos_ + 2;
        }
        pos_ += 2;
        continue;
      }
      if (c == '\n') {
        if (!triple) break;
        ++line_;
        line_begin_ = pos_ + 1;
        ++pos_;
        continue;
      }
      if (c == q) {
        if (!triple) {
          ++pos_;
          closed = true;
          break;
        }
        if (pos_ + 2 < src_.size() && src_[pos_ + 1] == q && src_[pos_ + 2] == q) {
          pos_ += 3;
          closed = true;
          break;
        }
      }
      ++pos_;
    }
    emit_content(closed ? TokenKind::string : TokenKind::error,
                 src_.substr(begin, pos_ - begin), start_line, start_col);
  }

  void lex_number() {
    std::size_t begin = pos_;
    auto digit_run = [&](auto pred) {
      while (pos_ < src_.size() &&
             (pred(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        ++pos_;
      }
    };
    auto dec = [](unsigned char c) { return std::isdigit(c) != 0; };
    if (src_[pos_] == '0' && pos_ + 1 < src_.size() &&
        std::string_view("xXoObB").find(src_[pos_ + 1]) != std::string_view::npos) {
      pos_ += 2;
      digit_run([](unsigned char c) { return std::isxdigit(c) != 0; });
    } else {
      digit_run(dec);
      if (pos_ < src_.size() && src_[pos_] == '.') {
        ++pos_;
        digit_run(dec);
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t save = pos_;
        ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          digit_run(dec);
        } else {
          pos_ = save;
        }
      }
      if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) ++pos_;
    }
    emit_content(TokenKind::number, src_.substr(begin, pos_ - begin),
                 line_, column_of(begin));
  }

  void lex_name() {
    std::size_t begin = pos_;
    while (pos_ < src_.size() && is_ident_char(static_cast<unsigned char>(src_[pos_]))) {
      ++pos_;
    }
    auto word = src_.substr(begin, pos_ - begin);
    emit_content(is_keyword(word) ? TokenKind::keyword : TokenKind::operand, word,
                 line_, column_of(begin));
  }

  void lex_operator() {
    std::size_t begin = pos_;
    for (auto op : kOperators) {
      if (src_.substr(pos_, op.size()) == op && op != "!") {
        pos_ += op.size();
        if (op == "(" || op == "[" || op == "{") ++depth_;
        if ((op == ")" || op == "]" || op == "}") && depth_ > 0) --depth_;
        emit_content(TokenKind::operator_, op, line_, column_of(begin));
        return;
      }
    }
    // Anything else ('$', '?', a lone '!', stray bytes) is an error token.
    ++pos_;
    emit_content(TokenKind::error, src_.substr(begin, 1), line_,
                 column_of(begin));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t line_begin_ = 0;
  std::size_t depth_ = 0;
  bool at_line_start_ = true;
  bool line_has_content_ = false;
  std::vector<std::size_t> indents_;
  std::vector<Token> tokens_;
};

}  // namespace

std::string_view to_string(TokenKind k) {
  switch (k) {
    case TokenKind::operator_: return "operator";
    case TokenKind::operand: return "operand";
    case TokenKind::keyword: return "keyword";
    case TokenKind::comment: return "comment";
    case TokenKind::string: return "string";
    case TokenKind::number: return "number";
    case TokenKind::newline: return "newline";
    case TokenKind::indent: return "indent";
    case TokenKind::dedent: return "dedent";
    case TokenKind::error: break;
  }
  return "error";
}

TokenStream tokenize(std::string_view source) { return Lexer(source).run(); }

}  // namespace motkit::metrics
