#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Lexical code metrics for the corpus solution language (Python surface
// syntax). Everything here is computed from the token stream plus
// indentation; no parse tree is built, so malformed generated code still
// yields numbers.
namespace motkit::metrics {

enum class TokenKind {
  operator_,
  operand,  // identifiers, including True/False/None
  keyword,
  comment,
  string,
  number,
  newline,  // end of a logical line
  indent,
  dedent,
  error,
};

std::string_view to_string(TokenKind k);

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t line = 0;      // 1-based start line
  std::size_t end_line = 0;  // differs from `line` for multi-line strings
  std::size_t column = 0;    // 0-based byte column of the first character
};

struct TokenStream {
  std::vector<Token> tokens;
  std::size_t total_lines = 0;
};

TokenStream tokenize(std::string_view source);

struct LineCounts {
  std::size_t sloc = 0;
  std::size_t comment_lines = 0;
  std::size_t total_lines = 0;
  double comment_density = 0.0;
};

LineCounts sloc_and_comments(std::string_view source);
LineCounts sloc_and_comments(const TokenStream& stream);

int cyclomatic_complexity(std::string_view source);
int cyclomatic_complexity(const TokenStream& stream);

// Halstead lexeme classification. Lexemes missing from the table fall back
// to their token kind: punctuation and keywords are operators, names and
// literals are operands.
class HalsteadTable {
 public:
  enum class Class { operator_, operand, ignore };

  // Parses `lexeme<TAB>class` lines; '#' starts a comment line.
  static HalsteadTable parse(std::string_view text);
  static const HalsteadTable& builtin();

  Class classify(const Token& token) const;

 private:
  std::map<std::string, Class, std::less<>> entries_;
};

struct HalsteadCounts {
  std::size_t total_operators = 0;     // N1
  std::size_t distinct_operators = 0;  // n1
  std::size_t total_operands = 0;      // N2
  std::size_t distinct_operands = 0;   // n2
  double volume = 0.0;                 // V = N log2 n
};

HalsteadCounts halstead(const TokenStream& stream,
                        const HalsteadTable& table = HalsteadTable::builtin());
double halstead_volume(const TokenStream& stream,
                       const HalsteadTable& table = HalsteadTable::builtin());

enum class MiVariant {
  log2_ratio,    // log2 terms, C as a [0,1] ratio, floor at 0, no rescale
  radon_compat,  // natural logs, C as percent in radians, rescaled to 0-100
};

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

double maintainability_index(double volume, int complexity, std::size_t loc,
                             double comment_density,
                             MiVariant variant = MiVariant::log2_ratio);

int function_count(std::string_view source, bool top_level_only = false);
int function_count(const TokenStream& stream, bool top_level_only = false);

struct CodeMetrics {
  double halstead_volume = 0.0;
  int cyclomatic = 0;
  std::size_t sloc = 0;
  double comment_density = 0.0;
  double maintainability = 0.0;
  int function_count = 0;
};

CodeMetrics analyze(std::string_view source,
                    MiVariant variant = MiVariant::log2_ratio);

}  // namespace motkit::metrics
