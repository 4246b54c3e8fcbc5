#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "motkit/codemetrics.hpp"

namespace motkit::embedded {
extern const std::string_view halstead_classes_tsv;
}

namespace motkit::metrics {
namespace {

bool is_code(const Token& t) {
  switch (t.kind) {
    case TokenKind::operator_:
    case TokenKind::operand:
    case TokenKind::keyword:
    case TokenKind::string:
    case TokenKind::number:
    case TokenKind::error:
      return !t.text.empty();
    default:
      return false;
  }
}

// Code tokens of one logical line, in order. Comments are kept separately.
struct LogicalLine {
  std::vector<const Token*> code;
};

std::vector<LogicalLine> logical_lines(const TokenStream& stream) {
  std::vector<LogicalLine> lines;
  LogicalLine cur;
  for (const auto& t : stream.tokens) {
    if (t.kind == TokenKind::newline) {
      if (!cur.code.empty()) lines.push_back(std::move(cur));
      cur = {};
    } else if (is_code(t)) {
      cur.code.push_back(&t);
    }
  }
  if (!cur.code.empty()) lines.push_back(std::move(cur));
  return lines;
}

bool is_kw(const Token* t, std::string_view word) {
  return t->kind == TokenKind::keyword && t->text == word;
}
bool is_name(const Token* t, std::string_view word) {
  return t->kind == TokenKind::operand && t->text == word;
}
bool is_op(const Token* t, std::string_view op) {
  return t->kind == TokenKind::operator_ && t->text == op;
}

// Soft keywords: `match <subject>:` / `case <pattern>:` at statement start.
bool soft_header(const LogicalLine& line, std::string_view word) {
  const auto& c = line.code;
  return c.size() >= 3 && is_name(c.front(), word) && is_op(c.back(), ":") &&
         !is_op(c[1], "=") && !is_op(c[1], ".") && !is_op(c[1], "(") &&
         !is_op(c[1], ":");
}

HalsteadTable::Class parse_class(std::string_view name) {
  if (name == "operator") return HalsteadTable::Class::operator_;
  if (name == "operand") return HalsteadTable::Class::operand;
  if (name == "ignore") return HalsteadTable::Class::ignore;
  throw MetricsError("unknown Halstead class '" + std::string(name) + "'");
}

double log2_or_zero(double x) { return x > 1.0 ? std::log2(x) : 0.0; }

}  // namespace

LineCounts sloc_and_comments(const TokenStream& stream) {
  LineCounts out;
  out.total_lines = stream.total_lines;
  if (out.total_lines == 0) return out;

  enum : unsigned char { blank = 0, comment = 1, code = 2 };
  std::vector<unsigned char> kind(out.total_lines + 2, blank);
  auto mark = [&](std::size_t from, std::size_t to, unsigned char k) {
    to = std::min(to, out.total_lines);
    for (auto l = from; l <= to; ++l) kind[l] = std::max(kind[l], k);
  };

  for (const auto& t : stream.tokens) {
    if (t.kind == TokenKind::comment) mark(t.line, t.line, comment);
  }
  // A logical line made only of string literals is a docstring (or a bare
  // string statement); its lines count as comment lines.
  for (const auto& line : logical_lines(stream)) {
    bool doc = std::all_of(line.code.begin(), line.code.end(), [](const Token* t) {
      return t->kind == TokenKind::string;
    });
    for (const Token* t : line.code) mark(t->line, t->end_line, doc ? comment : code);
  }
  for (std::size_t l = 1; l <= out.total_lines; ++l) {
    if (kind[l] == code) ++out.sloc;
    if (kind[l] == comment) ++out.comment_lines;
  }
  out.comment_density = static_cast<double>(out.comment_lines) /
                        static_cast<double>(out.total_lines);
  return out;
}

LineCounts sloc_and_comments(std::string_view source) {
  return sloc_and_comments(tokenize(source));
}

// Decision points, one each:
//   if / elif statements, conditional expressions, comprehension filters
//   for / while loops (statement or comprehension), plus a loop `else`
//   each `except` clause, plus a try `else`
//   each `and` / `or`
//   each `assert`
//   each `case` of a match, less one if some case is irrefutable
// Plain `else`, `finally`, `with` and `try` add nothing.
int cyclomatic_complexity(const TokenStream& stream) {
  auto lines = logical_lines(stream);
  if (lines.empty()) return 0;

  struct Header {
    std::size_t indent;
    std::string keyword;
    bool irrefutable_case = false;  // for `match` headers
  };
  std::vector<Header> headers;  // innermost last; indents strictly increase
  int decisions = 0;

  auto close_match = [&](const Header& h) {
    if (h.keyword == "match" && h.irrefutable_case) --decisions;
  };

  for (const auto& line : lines) {
    const auto& c = line.code;
    std::size_t start = 0;
    if (is_kw(c[0], "async") && c.size() > 1) start = 1;
    const Token* first = c[start];
    const std::size_t indent = c[0]->column;

    while (!headers.empty() && headers.back().indent > indent) {
      close_match(headers.back());
      headers.pop_back();
    }
    Header* same = (!headers.empty() && headers.back().indent == indent)
                       ? &headers.back()
                       : nullptr;
    Header* parent = nullptr;
    for (auto it = headers.rbegin(); it != headers.rend(); ++it) {
      if (it->indent < indent) {
        parent = &*it;
        break;
      }
    }

    std::string keyword;
    bool case_line = false;
    if (is_kw(first, "if") || is_kw(first, "elif") || is_kw(first, "while") ||
        is_kw(first, "for") || is_kw(first, "except") || is_kw(first, "assert")) {
      ++decisions;
      keyword = first->text;
    } else if (is_kw(first, "else")) {
      if (same && (same->keyword == "for" || same->keyword == "while" ||
                   same->keyword == "except")) {
        ++decisions;
      }
      keyword = "else";
    } else if (first->kind == TokenKind::keyword &&
               (first->text == "try" || first->text == "finally" ||
                first->text == "with" || first->text == "def" ||
                first->text == "class")) {
      keyword = first->text;
    } else if (start == 0 && soft_header(line, "match")) {
      keyword = "match";
    } else if (start == 0 && parent && parent->keyword == "match" &&
               soft_header(line, "case")) {
      case_line = true;
      ++decisions;
      // `case x:` / `case _:` (optionally guarded) always matches.
      bool guarded = c.size() > 3 && is_kw(c[2], "if");
      if (c[1]->kind == TokenKind::operand && (c.size() == 3 || guarded)) {
        parent->irrefutable_case = true;
      }
      keyword = "case";
    }

    if (!keyword.empty() && keyword != "assert") {
      if (same) {
        close_match(*same);
        *same = Header{indent, keyword};
      } else {
        headers.push_back({indent, keyword});
      }
    }

    int depth = 0;
    for (std::size_t i = start + 1; i < c.size(); ++i) {
      const Token* t = c[i];
      if (is_op(t, "(") || is_op(t, "[") || is_op(t, "{")) ++depth;
      if (is_op(t, ")") || is_op(t, "]") || is_op(t, "}")) depth = std::max(0, depth - 1);
      if (is_kw(t, "and") || is_kw(t, "or") || is_kw(t, "for")) {
        ++decisions;
      } else if (is_kw(t, "if")) {
        // A match guard is not a conditional expression.
        if (!(case_line && depth == 0)) ++decisions;
      }
    }
  }
  while (!headers.empty()) {
    close_match(headers.back());
    headers.pop_back();
  }
  return 1 + decisions;
}

int cyclomatic_complexity(std::string_view source) {
  return cyclomatic_complexity(tokenize(source));
}

HalsteadTable HalsteadTable::parse(std::string_view text) {
  HalsteadTable table;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw MetricsError("Halstead table line " + std::to_string(line_no) +
                         ": expected lexeme<TAB>class");
    }
    table.entries_[std::string(line.substr(0, tab))] = parse_class(line.substr(tab + 1));
  }
  return table;
}

const HalsteadTable& HalsteadTable::builtin() {
  static const HalsteadTable table = parse(embedded::halstead_classes_tsv);
  return table;
}

HalsteadTable::Class HalsteadTable::classify(const Token& token) const {
  switch (token.kind) {
    case TokenKind::operator_:
    case TokenKind::keyword:
    case TokenKind::operand:
      if (auto it = entries_.find(token.text); it != entries_.end()) return it->second;
      return token.kind == TokenKind::operand ? Class::operand : Class::operator_;
    case TokenKind::number:
    case TokenKind::string:
      return Class::operand;
    default:
      return Class::ignore;
  }
}

HalsteadCounts halstead(const TokenStream& stream, const HalsteadTable& table) {
  HalsteadCounts h;
  std::set<std::string_view> operators, operands;
  for (const auto& t : stream.tokens) {
    switch (table.classify(t)) {
      case HalsteadTable::Class::operator_:
        ++h.total_operators;
        operators.insert(t.text);
        break;
      case HalsteadTable::Class::operand:
        ++h.total_operands;
        operands.insert(t.text);
        break;
      case HalsteadTable::Class::ignore:
        break;
    }
  }
  h.distinct_operators = operators.size();
  h.distinct_operands = operands.size();
  auto vocabulary = static_cast<double>(h.distinct_operators + h.distinct_operands);
  auto length = static_cast<double>(h.total_operators + h.total_operands);
  h.volume = vocabulary > 1.0 ? length * std::log2(vocabulary) : 0.0;
  return h;
}

double halstead_volume(const TokenStream& stream, const HalsteadTable& table) {
  return halstead(stream, table).volume;
}

double maintainability_index(double volume, int complexity, std::size_t loc,
                             double comment_density, MiVariant variant) {
  if (!(comment_density >= 0.0 && comment_density <= 1.0)) {
    throw MetricsError("comment density must lie in [0, 1]");
  }
  if (!(volume >= 0.0) || complexity < 0) {
    throw MetricsError("volume and complexity must be non-negative");
  }
  const auto lines = static_cast<double>(loc);
  if (variant == MiVariant::radon_compat) {
    if (volume <= 0.0 || loc == 0) return 100.0;
    double radians = comment_density * 100.0 * std::numbers::pi / 180.0;
    double raw = 171.0 - 5.2 * std::log(volume) - 0.23 * complexity -
                 16.2 * std::log(lines) + 50.0 * std::sin(std::sqrt(2.46 * radians));
    return std::clamp(raw * 100.0 / 171.0, 0.0, 100.0);
  }
  double mi = 171.0 - 5.2 * log2_or_zero(volume) - 0.23 * complexity -
              16.2 * log2_or_zero(lines) +
              50.0 * std::sin(std::sqrt(2.46 * comment_density));
  return std::max(0.0, mi);
}

int function_count(const TokenStream& stream, bool top_level_only) {
  int n = 0;
  for (const auto& line : logical_lines(stream)) {
    const auto& c = line.code;
    std::size_t start = (is_kw(c[0], "async") && c.size() > 1) ? 1 : 0;
    if (top_level_only) {
      n += (c[0]->column == 0 && is_kw(c[start], "def")) ? 1 : 0;
      continue;
    }
    n += static_cast<int>(std::count_if(
        c.begin(), c.end(), [](const Token* t) { return is_kw(t, "def"); }));
  }
  return n;
}

int function_count(std::string_view source, bool top_level_only) {
  return function_count(tokenize(source), top_level_only);
}

CodeMetrics analyze(std::string_view source, MiVariant variant) {
  auto stream = tokenize(source);
  auto lines = sloc_and_comments(stream);
  CodeMetrics m;
  m.halstead_volume = halstead_volume(stream);
  m.cyclomatic = cyclomatic_complexity(stream);
  m.sloc = lines.sloc;
  m.comment_density = lines.comment_density;
  m.function_count = function_count(stream);
  m.maintainability = maintainability_index(m.halstead_volume, m.cyclomatic,
                                            m.sloc, m.comment_density, variant);
  return m;
}

}  // namespace motkit::metrics
