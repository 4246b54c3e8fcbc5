#include "motkit/promptgen.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

namespace motkit::embedded {
extern const std::string_view tmpl_mot_system;
extern const std::string_view tmpl_mot_user;
extern const std::string_view tmpl_mot_outline_user;
extern const std::string_view tmpl_mot_integrate_user;
extern const std::string_view tmpl_clean_system;
extern const std::string_view tmpl_clean_user;
extern const std::string_view tmpl_direct_user;
extern const std::string_view tmpl_reflect_user;
extern const std::string_view tmpl_reflect_wrong_answer;
extern const std::string_view tmpl_reflect_timeout;
extern const std::string_view tmpl_reflect_memory;
extern const std::string_view tmpl_reflect_output_limit;
extern const std::string_view tmpl_reflect_runtime_error;
extern const std::string_view tmpl_one_shot_problem;
extern const std::string_view tmpl_one_shot_solution;
extern const std::string_view tmpl_one_shot_response;
}  // namespace motkit::embedded

namespace motkit::prompt {
namespace {

namespace tmpl = motkit::embedded;
using Values = std::map<std::string, std::string, std::less<>>;

constexpr std::size_t kFeedbackCap = 2000;

std::string chomp(std::string_view s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string clip(std::string_view s) {
  if (s.size() <= kFeedbackCap) return chomp(s);
  return chomp(s.substr(0, kFeedbackCap)) + "\n... (truncated)";
}

// Template files end with a newline; prompts do not carry it.
std::string body(std::string_view t) { return chomp(t); }

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

std::size_t indent_of(std::string_view line) {
  std::size_t n = 0;
  for (char c : line) {
    if (c == ' ') ++n;
    else if (c == '\t') n = (n / 8 + 1) * 8;
    else break;
  }
  return n;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

std::string_view lstrip(std::string_view line) {
  auto b = line.find_first_not_of(" \t");
  return b == std::string_view::npos ? std::string_view{} : line.substr(b);
}

bool is_fence(std::string_view line) { return lstrip(line).starts_with("```"); }

// Offset of a marker that starts a line, or npos.
std::size_t find_marker(std::string_view text, std::string_view marker) {
  for (std::size_t p = text.find(marker); p != std::string_view::npos;
       p = text.find(marker, p + 1)) {
    bool line_start = p == 0 || text[p - 1] == '\n';
    auto after = p + marker.size();
    bool ends = after >= text.size() || !std::isdigit(static_cast<unsigned char>(text[after]));
    if (line_start && ends) return p;
  }
  return std::string_view::npos;
}

std::size_t line_end(std::string_view text, std::size_t p) {
  auto nl = text.find('\n', p);
  return nl == std::string_view::npos ? text.size() : nl + 1;
}

std::string strip_comment(std::string_view line) {
  // Good enough for stub bodies; '#' inside strings is not expected there.
  auto hash = line.find('#');
  return trim(hash == std::string_view::npos ? line : line.substr(0, hash));
}

bool opens_string(std::string_view s, std::string& quote) {
  std::size_t p = 0;
  while (p < s.size() && p < 2 && std::string_view("rRuUbBfF").find(s[p]) != std::string_view::npos) ++p;
  if (p >= s.size() || (s[p] != '"' && s[p] != '\'')) return false;
  char q = s[p];
  quote = (s.substr(p, 3) == std::string(3, q)) ? std::string(3, q) : std::string(1, q);
  return true;
}

struct OutlineScan {
  std::vector<SubModule> entries;
  bool stray = false;
};

OutlineScan scan_outline(std::string_view code, bool fenced) {
  static const std::regex def_re(R"(^\s*(?:async\s+)?def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\()");
  auto lines = split_lines(code);
  OutlineScan scan;
  std::size_t i = 0;
  while (i < lines.size()) {
    std::string line(lines[i]);
    std::smatch m;
    if (!std::regex_search(line, m, def_re)) {
      auto s = lstrip(lines[i]);
      if (fenced && !s.empty() && !s.starts_with("#") && !s.starts_with("import ") &&
          !s.starts_with("from ") && !s.starts_with("@")) {
        scan.stray = true;
      }
      ++i;
      continue;
    }
    SubModule sub;
    sub.name = m[1];
    const std::size_t def_indent = indent_of(lines[i]);

    // Header: until the parentheses balance and a colon follows.
    std::string header;
    std::string inline_body;
    int depth = 0;
    bool done = false;
    while (i < lines.size() && !done) {
      std::string_view l = lines[i];
      if (!header.empty()) header += '\n';
      header += std::string(l);
      for (std::size_t k = 0; k < l.size(); ++k) {
        char c = l[k];
        if (c == '(' || c == '[' || c == '{') ++depth;
        if (c == ')' || c == ']' || c == '}') --depth;
        if (c == ':' && depth == 0) {
          inline_body = strip_comment(l.substr(k + 1));
          header.resize(header.size() - (l.size() - k - 1));
          done = true;
          break;
        }
      }
      ++i;
    }
    sub.header = trim(header);

    // Body statements: the inline remainder, then deeper-indented lines.
    std::vector<std::string> stmts;
    if (!inline_body.empty()) stmts.push_back(inline_body);
    std::size_t body_begin = i;
    while (i < lines.size() && (is_blank(lines[i]) || indent_of(lines[i]) > def_indent)) ++i;
    // Trailing blank lines belong to whatever follows.
    std::size_t body_end = i;
    for (std::size_t k = body_begin; k < body_end; ++k) {
      if (is_blank(lines[k])) continue;
      stmts.push_back(std::string(lstrip(lines[k])));
    }

    std::size_t k = 0;
    std::string quote;
    if (k < stmts.size() && opens_string(stmts[k], quote)) {
      // Docstring, possibly spanning several physical lines.
      std::string doc = stmts[k];
      auto start = doc.find(quote) + quote.size();
      auto close = doc.find(quote, start);
      while (close == std::string::npos && k + 1 < stmts.size()) {
        doc += "\n" + stmts[++k];
        close = doc.find(quote, start);
      }
      sub.docstring = trim(doc.substr(start, close == std::string::npos
                                                 ? std::string::npos
                                                 : close - start));
      ++k;
    }
    for (; k < stmts.size(); ++k) {
      auto s = strip_comment(stmts[k]);
      if (s.empty() || s == "..." || s == "pass") continue;
      sub.has_body = true;
    }
    scan.entries.push_back(std::move(sub));
  }
  return scan;
}

Prompt with_one_shot(Prompt p) {
  corpus::Problem example;
  example.statement = body(tmpl::tmpl_one_shot_problem);
  p.one_shot = OneShot{
      body(render_template(tmpl::tmpl_mot_user,
                           {{"statement", example.statement},
                            {"solution", body(tmpl::tmpl_one_shot_solution)}})),
      body(tmpl::tmpl_one_shot_response)};
  return p;
}

void require_solution(std::string_view solution) {
  if (trim(solution).empty()) throw std::invalid_argument("solution text is empty");
}

}  // namespace

std::string_view to_string(PromptTag tag) {
  switch (tag) {
    case PromptTag::mot: return "mot";
    case PromptTag::clean: return "clean";
    case PromptTag::reflect: return "reflect";
    case PromptTag::direct: break;
  }
  return "direct";
}

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::missing_step: return "missing_step";
    case ParseErrorKind::out_of_order: return "out_of_order";
    case ParseErrorKind::no_final_code: return "no_final_code";
    case ParseErrorKind::multiple_main: break;
  }
  return "multiple_main";
}

ParseError::ParseError(ParseFailure failure)
    : std::runtime_error(std::string(to_string(failure.kind)) + " at offset " +
                         std::to_string(failure.offset)),
      failure_(failure) {}

std::vector<Message> to_messages(const Prompt& prompt) {
  std::vector<Message> out;
  if (!prompt.system.empty()) out.push_back({"system", prompt.system});
  if (prompt.one_shot) {
    out.push_back({"user", prompt.one_shot->input});
    out.push_back({"assistant", prompt.one_shot->output});
  }
  out.push_back({"user", prompt.user});
  return out;
}

std::string render_prompt(const Prompt& prompt) {
  std::ostringstream out;
  out << "[tag] " << to_string(prompt.tag) << "\n";
  for (const auto& m : to_messages(prompt)) {
    out << "[" << m.role << "]\n" << m.content << "\n";
  }
  return out.str();
}

std::string render_template(std::string_view t, const Values& values) {
  std::string out;
  out.reserve(t.size());
  std::size_t pos = 0;
  while (pos < t.size()) {
    auto open = t.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(t.substr(pos));
      break;
    }
    auto close = t.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(t.substr(pos));
      break;
    }
    out.append(t.substr(pos, open - pos));
    auto name = t.substr(open + 2, close - open - 2);
    auto it = values.find(name);
    if (it == values.end()) {
      throw std::invalid_argument("template placeholder {{" + std::string(name) +
                                  "}} has no value");
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

Prompt build_mot_prompt(const corpus::Problem& problem, std::string_view solution) {
  require_solution(solution);
  Prompt p;
  p.tag = PromptTag::mot;
  p.system = body(tmpl::tmpl_mot_system);
  p.user = body(render_template(tmpl::tmpl_mot_user,
                                {{"statement", chomp(problem.statement)},
                                 {"solution", chomp(solution)}}));
  return with_one_shot(std::move(p));
}

Prompt build_mot_outline_prompt(const corpus::Problem& problem,
                                std::string_view solution) {
  require_solution(solution);
  Prompt p;
  p.tag = PromptTag::mot;
  p.system = body(tmpl::tmpl_mot_system);
  p.user = body(render_template(tmpl::tmpl_mot_outline_user,
                                {{"statement", chomp(problem.statement)},
                                 {"solution", chomp(solution)}}));
  return with_one_shot(std::move(p));
}

Prompt build_mot_integrate_prompt(const corpus::Problem& problem,
                                  std::string_view solution,
                                  std::string_view outline_response) {
  require_solution(solution);
  Prompt p;
  p.tag = PromptTag::mot;
  p.system = body(tmpl::tmpl_mot_system);
  p.user = body(render_template(tmpl::tmpl_mot_integrate_user,
                                {{"statement", chomp(problem.statement)},
                                 {"solution", chomp(solution)},
                                 {"outline", chomp(outline_response)}}));
  return with_one_shot(std::move(p));
}

Prompt build_clean_prompt(const corpus::Problem& problem, std::string_view solution) {
  require_solution(solution);
  Prompt p;
  p.tag = PromptTag::clean;
  p.system = body(tmpl::tmpl_clean_system);
  p.user = body(render_template(tmpl::tmpl_clean_user,
                                {{"statement", chomp(problem.statement)},
                                 {"solution", chomp(solution)}}));
  return p;
}

Prompt build_direct_prompt(const corpus::Problem& problem) {
  Prompt p;
  p.tag = PromptTag::direct;
  p.user = body(render_template(tmpl::tmpl_direct_user,
                                {{"statement", chomp(problem.statement)}}));
  return p;
}

Prompt build_reflection_prompt(const corpus::Problem& problem,
                               std::string_view attempt,
                               const sandbox::JudgeVerdict& verdict, int round,
                               int max_rounds) {
  if (verdict.passed || !verdict.first_failure) {
    throw std::invalid_argument("cannot reflect on a passing verdict");
  }
  if (max_rounds < 1 || round < 1 || round > max_rounds) {
    throw std::invalid_argument("reflection round " + std::to_string(round) +
                                " outside [1, " + std::to_string(max_rounds) + "]");
  }
  const std::size_t index = *verdict.first_failure;
  const auto& outcome = verdict.per_test.at(index);
  Values values{{"test_number", std::to_string(index + 1)}};
  if (index < problem.tests.size()) {
    values["input"] = clip(problem.tests[index].input);
    values["expected"] = clip(problem.tests[index].expected_output);
  } else {
    values["input"] = "";
    values["expected"] = "";
  }

  std::string_view feedback_tmpl = tmpl::tmpl_reflect_wrong_answer;
  switch (outcome.report.status) {
    case sandbox::ExecStatus::ok:
      values["actual"] = clip(outcome.report.stdout_text);
      break;
    case sandbox::ExecStatus::timeout:
      feedback_tmpl = tmpl::tmpl_reflect_timeout;
      break;
    case sandbox::ExecStatus::oom:
      feedback_tmpl = tmpl::tmpl_reflect_memory;
      break;
    case sandbox::ExecStatus::output_overflow:
      feedback_tmpl = tmpl::tmpl_reflect_output_limit;
      break;
    case sandbox::ExecStatus::runtime_error: {
      feedback_tmpl = tmpl::tmpl_reflect_runtime_error;
      values["exit_code"] = std::to_string(outcome.report.exit_code);
      const auto& err = outcome.report.stderr_text;
      values["stderr"] = err.size() > kFeedbackCap
                             ? "(truncated) ...\n" + chomp(std::string_view(err).substr(err.size() - kFeedbackCap))
                             : chomp(err);
      break;
    }
  }

  Prompt p;
  p.tag = PromptTag::reflect;
  p.user = body(render_template(
      tmpl::tmpl_reflect_user,
      {{"round", std::to_string(round)},
       {"max_rounds", std::to_string(max_rounds)},
       {"statement", chomp(problem.statement)},
       {"attempt", chomp(attempt)},
       {"feedback", body(render_template(feedback_tmpl, values))}}));
  return p;
}

std::vector<CodeBlock> fenced_blocks(std::string_view text) {
  std::vector<CodeBlock> blocks;
  std::size_t pos = 0;
  std::optional<CodeBlock> open;
  while (pos < text.size()) {
    auto end = line_end(text, pos);
    auto line = text.substr(pos, end - pos);
    if (is_fence(line)) {
      if (open) {
        blocks.push_back(std::move(*open));
        open.reset();
      } else {
        open = CodeBlock{{}, pos};
      }
    } else if (open) {
      open->code.append(line);
      if (!line.empty() && line.back() != '\n') open->code.push_back('\n');
    }
    pos = end;
  }
  // An unterminated fence (truncated response) runs to the end.
  if (open) blocks.push_back(std::move(*open));
  for (auto& b : blocks) {
    b.code.erase(std::remove(b.code.begin(), b.code.end(), '\r'), b.code.end());
  }
  return blocks;
}

MotParse parse_mot_response_detailed(std::string_view raw) {
  MotParse result;
  result.solution.raw_response = std::string(raw);
  const auto s1 = find_marker(raw, kStep1Marker);
  const auto s2 = find_marker(raw, kStep2Marker);

  if (s1 != std::string_view::npos) {
    result.solution.code_before_outline = !fenced_blocks(raw.substr(0, s1)).empty();
    auto outline_begin = line_end(raw, s1);
    auto outline_end = (s2 != std::string_view::npos && s2 > s1) ? s2 : raw.size();
    auto region = raw.substr(outline_begin, outline_end - outline_begin);
    auto blocks = fenced_blocks(region);
    if (blocks.empty()) {
      result.solution.outline = scan_outline(region, false).entries;
    } else {
      for (const auto& b : blocks) {
        auto scan = scan_outline(b.code, true);
        result.solution.outline_has_stray_code |= scan.stray;
        for (auto& e : scan.entries) result.solution.outline.push_back(std::move(e));
      }
    }
  }

  if (s1 == std::string_view::npos) {
    result.failure = ParseFailure{ParseErrorKind::missing_step, raw.size(), 1};
    return result;
  }
  if (s2 == std::string_view::npos) {
    result.failure = ParseFailure{ParseErrorKind::missing_step, raw.size(), 2};
    return result;
  }
  if (s2 < s1) {
    result.failure = ParseFailure{ParseErrorKind::out_of_order, s2, 0};
    return result;
  }

  auto final_begin = line_end(raw, s2);
  auto blocks = fenced_blocks(raw.substr(final_begin));
  if (blocks.empty() || trim(blocks.front().code).empty()) {
    result.failure = ParseFailure{ParseErrorKind::no_final_code, final_begin, 0};
    return result;
  }
  if (blocks.size() > 1) {
    result.failure =
        ParseFailure{ParseErrorKind::multiple_main, final_begin + blocks[1].offset, 0};
    return result;
  }
  result.solution.final_code = blocks.front().code;
  return result;
}

ModularSolution parse_mot_response(std::string_view raw) {
  auto parsed = parse_mot_response_detailed(raw);
  if (parsed.failure) throw ParseError(*parsed.failure);
  return std::move(parsed.solution);
}

std::string render_mot_response(const ModularSolution& solution) {
  std::ostringstream out;
  out << kStep1Marker << "\n```python\n";
  for (std::size_t i = 0; i < solution.outline.size(); ++i) {
    const auto& sub = solution.outline[i];
    if (i) out << "\n\n";
    std::string header = sub.header.empty() ? "def " + sub.name + "():" : sub.header;
    if (!header.ends_with(':')) header += ':';
    out << header << "\n    \"\"\"" << sub.docstring << "\"\"\"\n    ...\n";
  }
  out << "```\n\n" << kStep2Marker << "\n```python\n" << solution.final_code;
  if (!solution.final_code.empty() && solution.final_code.back() != '\n') out << '\n';
  out << "```\n";
  return out.str();
}

MotParse parse_single_block_response(std::string_view raw) {
  MotParse result;
  result.solution.raw_response = std::string(raw);
  auto blocks = fenced_blocks(raw);
  if (blocks.empty() || trim(blocks.front().code).empty()) {
    result.failure = ParseFailure{ParseErrorKind::no_final_code, 0, 0};
  } else if (blocks.size() > 1) {
    result.failure = ParseFailure{ParseErrorKind::multiple_main, blocks[1].offset, 0};
  } else {
    result.solution.final_code = blocks.front().code;
  }
  return result;
}

std::string extract_program(std::string_view raw) {
  auto blocks = fenced_blocks(raw);
  if (blocks.empty()) return trim(raw) + "\n";
  return blocks.back().code;
}

}  // namespace motkit::prompt
