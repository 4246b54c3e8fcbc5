#include "motkit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace motkit::corpus {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// APPS ships `solutions` and `input_output` as JSON-encoded strings; the
// native schema uses plain arrays/objects. Accept both.
json unwrap_encoded(const json& value) {
  if (value.is_string()) return json::parse(value.get<std::string>());
  return value;
}

std::vector<std::string> string_list(const json& value, const char* field) {
  if (!value.is_array()) {
    throw std::invalid_argument(std::string("`") + field +
                                "` is not an array");
  }
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw std::invalid_argument(std::string("`") + field +
                                  "` contains a non-string entry");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

Problem problem_from_json(const json& obj, Split split) {
  if (!obj.is_object()) throw std::invalid_argument("line is not an object");
  auto id_it = obj.find("id");
  if (id_it == obj.end()) throw std::invalid_argument("missing `id`");
  Problem p;
  if (id_it->is_string()) {
    p.id = id_it->get<std::string>();
  } else if (id_it->is_number_integer()) {
    p.id = std::to_string(id_it->get<long long>());
  } else {
    throw std::invalid_argument("`id` is neither string nor integer");
  }
  if (p.id.empty()) throw std::invalid_argument("empty `id`");

  p.statement = obj.value("question", std::string{});
  if (auto it = obj.find("solutions"); it != obj.end() && !it->is_null()) {
    p.solutions = string_list(unwrap_encoded(*it), "solutions");
  }
  p.difficulty = parse_difficulty(obj.value("difficulty", std::string{}));
  p.source = obj.value("source", std::string{});
  p.split = split;

  auto io_it = obj.find("input_output");
  if (io_it == obj.end() || io_it->is_null() ||
      (io_it->is_string() && io_it->get<std::string>().empty())) {
    p.untestable = true;
    return p;
  }
  json io = unwrap_encoded(*io_it);
  if (!io.is_object()) throw std::invalid_argument("`input_output` malformed");
  auto inputs = string_list(io.value("inputs", json::array()), "inputs");
  auto outputs = string_list(io.value("outputs", json::array()), "outputs");
  if (inputs.size() != outputs.size()) {
    throw std::invalid_argument("`inputs` and `outputs` differ in length");
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    p.tests.push_back({std::move(inputs[i]), std::move(outputs[i])});
  }
  p.untestable = p.tests.empty();
  return p;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::set<std::string> word_set(std::string_view normalized) {
  std::set<std::string> words;
  std::istringstream in{std::string(normalized)};
  std::string w;
  while (in >> w) words.insert(w);
  return words;
}

}  // namespace

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::introductory: return "introductory";
    case Difficulty::interview: return "interview";
    case Difficulty::competition: return "competition";
    case Difficulty::unknown: break;
  }
  return "unknown";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: break;
  }
  return "test";
}

Difficulty parse_difficulty(std::string_view text) {
  if (text == "introductory") return Difficulty::introductory;
  if (text == "interview") return Difficulty::interview;
  if (text == "competition") return Difficulty::competition;
  return Difficulty::unknown;
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "valid") return Split::valid;
  if (text == "test") return Split::test;
  return std::nullopt;
}

const Problem* Corpus::find(std::string_view id) const {
  auto it = std::find_if(problems.begin(), problems.end(),
                         [&](const Problem& p) { return p.id == id; });
  return it == problems.end() ? nullptr : &*it;
}

LoadResult parse_corpus(std::string_view text, Split split,
                        std::string provenance) {
  LoadResult result;
  result.corpus.provenance = std::move(provenance);
  std::unordered_map<std::string, std::size_t> seen;  // id -> line

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    Problem problem;
    try {
      problem = problem_from_json(json::parse(line), split);
    } catch (const std::exception& e) {
      result.skipped.push_back({line_no, e.what()});
      continue;
    }
    auto [it, inserted] = seen.emplace(problem.id, line_no);
    if (!inserted) {
      throw CorpusError("duplicate problem id '" + problem.id + "' on lines " +
                        std::to_string(it->second) + " and " +
                        std::to_string(line_no) +
                        (result.corpus.provenance.empty()
                             ? std::string{}
                             : " of " + result.corpus.provenance));
    }
    result.corpus.problems.push_back(std::move(problem));
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw CorpusError("read error on " + path.string());
  return parse_corpus(buf.str(), split, path.string());
}

std::string serialize_problem(const Problem& p) {
  ordered_json obj;
  obj["id"] = p.id;
  obj["question"] = p.statement;
  obj["solutions"] = p.solutions;
  if (!p.untestable) {
    ordered_json io;
    io["inputs"] = ordered_json::array();
    io["outputs"] = ordered_json::array();
    for (const auto& t : p.tests) {
      io["inputs"].push_back(t.input);
      io["outputs"].push_back(t.expected_output);
    }
    obj["input_output"] = std::move(io);
  }
  obj["difficulty"] = to_string(p.difficulty);
  obj["source"] = p.source;
  return obj.dump(-1, ' ', false, json::error_handler_t::replace);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  for (const auto& p : corpus.problems) out << serialize_problem(p) << '\n';
  if (!out) throw CorpusError("write error on " + path.string());
}

std::vector<std::string> select_solutions(const Problem& problem,
                                          std::size_t cap) {
  if (cap == 0) throw std::invalid_argument("solution cap must be >= 1");
  auto n = std::min(cap, problem.solutions.size());
  return {problem.solutions.begin(),
          problem.solutions.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::string normalize_statement(std::string_view statement) {
  std::string out;
  out.reserve(statement.size());
  bool pending_space = false;
  for (unsigned char c : statement) {
    if (is_word_char(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      pending_space = true;
    }
    // Punctuation is dropped without splitting words: "don't" -> "dont".
  }
  return out;
}

double jaccard_similarity(std::string_view a, std::string_view b) {
  auto wa = word_set(normalize_statement(a));
  auto wb = word_set(normalize_statement(b));
  if (wa.empty() || wb.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& w : wa) common += wb.count(w);
  return static_cast<double>(common) /
         static_cast<double>(wa.size() + wb.size() - common);
}

std::pair<Corpus, DedupReport> dedup_against(const Corpus& train,
                                             const Corpus& holdout,
                                             double jaccard_threshold) {
  if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0)) {
    throw std::invalid_argument("jaccard threshold must lie in (0, 1]");
  }
  struct HoldoutEntry {
    const Problem* problem;
    std::string normalized;
    std::set<std::string> words;
  };
  std::vector<HoldoutEntry> entries;
  entries.reserve(holdout.problems.size());
  for (const auto& h : holdout.problems) {
    auto norm = normalize_statement(h.statement);
    auto words = word_set(norm);
    entries.push_back({&h, std::move(norm), std::move(words)});
  }

  Corpus kept;
  kept.provenance = train.provenance;
  DedupReport report;
  for (const auto& p : train.problems) {
    auto norm = normalize_statement(p.statement);
    auto words = word_set(norm);
    std::optional<DedupRemoval> hit;
    for (const auto& h : entries) {
      if (norm == h.normalized) {
        hit = DedupRemoval{p.id, h.problem->id, 1.0, true};
        break;
      }
      if (words.empty() || h.words.empty()) continue;
      std::size_t common = 0;
      for (const auto& w : words) common += h.words.count(w);
      double sim = static_cast<double>(common) /
                   static_cast<double>(words.size() + h.words.size() - common);
      if (sim >= jaccard_threshold && (!hit || sim > hit->similarity)) {
        hit = DedupRemoval{p.id, h.problem->id, sim, false};
      }
    }
    if (hit) {
      report.removals.push_back(std::move(*hit));
    } else {
      kept.problems.push_back(p);
    }
  }
  return {std::move(kept), std::move(report)};
}

StatsReport corpus_stats(const Corpus& corpus) {
  StatsReport r;
  for (const auto& p : corpus.problems) {
    ++r.counts[{p.source, p.difficulty, p.split}];
    ++r.by_difficulty[p.difficulty];
    ++r.problems;
    r.untestable += p.untestable ? 1 : 0;
    r.solutions += p.solutions.size();
  }
  return r;
}

}  // namespace motkit::corpus
