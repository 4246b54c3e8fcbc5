#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "motkit/corpus.hpp"
#include "motkit/sandbox.hpp"

namespace motkit::prompt {

inline constexpr std::string_view kStep1Marker = "### STEP 1";
inline constexpr std::string_view kStep2Marker = "### STEP 2";

enum class PromptTag { mot, clean, reflect, direct };
std::string_view to_string(PromptTag tag);

struct OneShot {
  std::string input;
  std::string output;
};

struct Prompt {
  std::string system;
  std::string user;
  std::optional<OneShot> one_shot;
  PromptTag tag = PromptTag::direct;
};

// Chat messages in wire order: system, one-shot user/assistant pair, user.
struct Message {
  std::string role;
  std::string content;
};
std::vector<Message> to_messages(const Prompt& prompt);

// Human-readable dump used for golden files and debugging.
std::string render_prompt(const Prompt& prompt);

// Substitutes `{{name}}` placeholders in one pass; values are inserted
// verbatim. An unknown placeholder throws std::invalid_argument.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string, std::less<>>& values);

Prompt build_mot_prompt(const corpus::Problem& problem, std::string_view solution);

// Two-call variant of the MoT transformation: the outline is requested
// first, then its text is fed back for integration.
Prompt build_mot_outline_prompt(const corpus::Problem& problem,
                                std::string_view solution);
Prompt build_mot_integrate_prompt(const corpus::Problem& problem,
                                  std::string_view solution,
                                  std::string_view outline_response);

Prompt build_clean_prompt(const corpus::Problem& problem, std::string_view solution);
Prompt build_direct_prompt(const corpus::Problem& problem);

inline constexpr int kDefaultReflectionRounds = 5;

// `verdict` must be failing; round must lie in [1, max_rounds].
Prompt build_reflection_prompt(const corpus::Problem& problem,
                               std::string_view attempt,
                               const sandbox::JudgeVerdict& verdict, int round,
                               int max_rounds = kDefaultReflectionRounds);

struct SubModule {
  std::string name;
  std::string header;     // the `def ...:` line(s)
  std::string docstring;  // text between the quotes, trimmed
  // Something other than a docstring and a `...`/`pass` placeholder.
  bool has_body = false;
};

struct ModularSolution {
  std::vector<SubModule> outline;
  std::string final_code;
  std::string raw_response;
  // A code fence precedes the STEP 1 section.
  bool code_before_outline = false;
  // Statements outside any stub inside the STEP 1 code.
  bool outline_has_stray_code = false;
};

enum class ParseErrorKind { missing_step, out_of_order, no_final_code,
                            multiple_main };
std::string_view to_string(ParseErrorKind kind);

struct ParseFailure {
  ParseErrorKind kind;
  std::size_t offset = 0;  // byte offset into the raw response
  int step = 0;            // which marker is absent, for missing_step
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(ParseFailure failure);
  const ParseFailure& failure() const { return failure_; }
  ParseErrorKind kind() const { return failure_.kind; }
  std::size_t offset() const { return failure_.offset; }

 private:
  ParseFailure failure_;
};

// Everything recoverable from a response, even when it violates the
// grammar; `solution.outline` is filled whenever STEP 1 was found.
struct MotParse {
  ModularSolution solution;
  std::optional<ParseFailure> failure;
  bool ok() const { return !failure.has_value(); }
};

MotParse parse_mot_response_detailed(std::string_view raw);
// Throws ParseError on any grammar violation.
ModularSolution parse_mot_response(std::string_view raw);

// Canonical text form of a ModularSolution; parses back to the same outline
// names and final code.
std::string render_mot_response(const ModularSolution& solution);

struct CodeBlock {
  std::string code;
  std::size_t offset = 0;  // offset of the opening fence
};
std::vector<CodeBlock> fenced_blocks(std::string_view text);

// Single-block answer (clean transformation): same error kinds as STEP 2.
MotParse parse_single_block_response(std::string_view raw);

// Program from a free-form generation: the last fenced block, or the whole
// text when there is none.
std::string extract_program(std::string_view raw);

}  // namespace motkit::prompt
