#include "vrloop/protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "vrloop/errors.hpp"

namespace vrloop {

namespace {

constexpr std::array<std::string_view, 4> kKnownSlots{"statement", "prior_solution", "feedback",
                                                      "reference_solution"};

constexpr std::string_view kDefaultGeneratorInitial =
    R"(Solve the following problem. Reason step by step, then give the final answer in \boxed{}.

Problem:
{{statement}}
)";

constexpr std::string_view kDefaultGeneratorRefine =
    R"(Solve the following problem. Reason step by step, then give the final answer in \boxed{}.

Problem:
{{statement}}

Your previous solution:
{{prior_solution}}
{{#feedback}}
A reviewer left the following feedback on your previous solution:
{{feedback}}
{{/feedback}}
Write an improved, complete solution. End with the final answer in \boxed{}.
)";

constexpr std::string_view kDefaultVerifierPlain =
    R"(You are checking a student's solution to a math problem. Go through the solution step by step and point out the first error you find, if any.

Problem:
{{statement}}

Student solution:
{{prior_solution}}

Write concise feedback addressed to the student. You may add a line "Score: <number between 0 and 1>" giving your confidence that the final answer is correct. End your reply with exactly one of these lines:
Predicted verdict: CORRECT
Predicted verdict: INCORRECT
)";

constexpr std::string_view kDefaultVerifierTeacher =
    R"(You are checking a student's solution to a math problem. A reference solution is provided for you only; do not quote it or reveal its final answer. Compare the student's reasoning against it and point out the first error you find, if any.

Problem:
{{statement}}

Reference solution:
{{reference_solution}}

Student solution:
{{prior_solution}}

Write concise feedback addressed to the student. You may add a line "Score: <number between 0 and 1>" giving your confidence that the final answer is correct. End your reply with exactly one of these lines:
Predicted verdict: CORRECT
Predicted verdict: INCORRECT
)";

bool is_known_slot(std::string_view name) {
  return std::find(kKnownSlots.begin(), kKnownSlots.end(), name) != kKnownSlots.end();
}

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

const std::regex& verdict_regex() {
  static const std::regex re(
      R"(verdict[ \t]*(?:is)?[ \t]*[:=\-]?[ \t]*(?:\\texttt\{|\\text\{|\*\*|`|")?[ \t]*(incorrect|correct)\b)",
      std::regex::icase | std::regex::ECMAScript);
  return re;
}

const std::regex& score_regex() {
  static const std::regex re(
      R"(^[ \t]*(?:\*\*)?(?:verifier[ \t]+)?score(?:\*\*)?[ \t]*[:=][ \t]*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)[ \t]*$)",
      std::regex::icase | std::regex::ECMAScript);
  return re;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::GeneratorInitial: return "generator_initial";
    case TemplateId::GeneratorRefine: return "generator_refine";
    case TemplateId::VerifierPlain: return "verifier_plain";
    case TemplateId::VerifierTeacher: return "verifier_teacher";
  }
  return "unknown";
}

PromptTemplate::PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
  // Parse into a tree; sections may nest.
  std::vector<std::vector<Node>*> stack{&nodes_};
  std::vector<std::string> open_sections;
  std::size_t pos = 0;
  const std::string where = "template " + std::string(to_string(id_));
  while (pos < body_.size()) {
    const auto open = body_.find("{{", pos);
    if (open == std::string::npos) {
      stack.back()->push_back({Node::Kind::Text, body_.substr(pos), {}});
      break;
    }
    if (open > pos) stack.back()->push_back({Node::Kind::Text, body_.substr(pos, open - pos), {}});
    const auto close = body_.find("}}", open + 2);
    if (close == std::string::npos) throw ConfigError(where + ": unterminated '{{'");
    std::string tag(trim_view(std::string_view(body_).substr(open + 2, close - open - 2)));
    pos = close + 2;
    if (tag.empty()) throw ConfigError(where + ": empty slot name");
    const char sigil = tag.front();
    if (sigil == '#' || sigil == '/') {
      tag.erase(0, 1);
      if (!is_known_slot(tag)) throw ConfigError(where + ": unknown slot '" + tag + "'");
      if (sigil == '#') {
        stack.back()->push_back({Node::Kind::Section, tag, {}});
        stack.push_back(&stack.back()->back().children);
        open_sections.push_back(tag);
      } else {
        if (open_sections.empty() || open_sections.back() != tag) {
          throw ConfigError(where + ": unbalanced section '" + tag + "'");
        }
        open_sections.pop_back();
        stack.pop_back();
      }
      if (std::find(mentioned_.begin(), mentioned_.end(), tag) == mentioned_.end()) mentioned_.push_back(tag);
      continue;
    }
    if (!is_known_slot(tag)) throw ConfigError(where + ": unknown slot '" + tag + "'");
    stack.back()->push_back({Node::Kind::Slot, tag, {}});
    if (std::find(mentioned_.begin(), mentioned_.end(), tag) == mentioned_.end()) mentioned_.push_back(tag);
    if (open_sections.empty() && std::find(required_.begin(), required_.end(), tag) == required_.end()) {
      required_.push_back(tag);
    }
  }
  if (!open_sections.empty()) throw ConfigError(where + ": unclosed section '" + open_sections.back() + "'");

  const auto requires_slot = [&](std::string_view s) {
    return std::find(required_.begin(), required_.end(), s) != required_.end();
  };
  switch (id_) {
    case TemplateId::VerifierTeacher:
      if (!requires_slot("reference_solution")) {
        throw ConfigError(where + ": must contain the reference_solution slot");
      }
      break;
    case TemplateId::VerifierPlain:
    case TemplateId::GeneratorInitial:
    case TemplateId::GeneratorRefine:
      if (mentions("reference_solution")) {
        throw ConfigError(where + ": must not reference reference_solution");
      }
      break;
  }
}

bool PromptTemplate::mentions(std::string_view slot) const {
  return std::find(mentioned_.begin(), mentioned_.end(), slot) != mentioned_.end();
}

std::string PromptTemplate::render(const SlotMap& bindings) const {
  for (const auto& slot : required_) {
    if (bindings.find(slot) == bindings.end()) {
      throw ConfigError("template " + std::string(to_string(id_)) + ": slot '" + slot + "' is not bound");
    }
  }
  std::string out;
  out.reserve(body_.size() + 256);
  render_nodes(nodes_, bindings, out);
  return out;
}

void PromptTemplate::render_nodes(const std::vector<Node>& nodes, const SlotMap& bindings,
                                  std::string& out) const {
  for (const auto& node : nodes) {
    switch (node.kind) {
      case Node::Kind::Text: out += node.value; break;
      case Node::Kind::Slot: {
        const auto it = bindings.find(node.value);
        if (it == bindings.end()) {
          throw ConfigError("template " + std::string(to_string(id_)) + ": slot '" + node.value +
                            "' is not bound");
        }
        out += it->second;
        break;
      }
      case Node::Kind::Section: {
        const auto it = bindings.find(node.value);
        if (it != bindings.end() && !it->second.empty()) render_nodes(node.children, bindings, out);
        break;
      }
    }
  }
}

PromptSet PromptSet::defaults() {
  PromptSet set;
  set.templates_.emplace_back(TemplateId::GeneratorInitial, std::string(kDefaultGeneratorInitial));
  set.templates_.emplace_back(TemplateId::GeneratorRefine, std::string(kDefaultGeneratorRefine));
  set.templates_.emplace_back(TemplateId::VerifierPlain, std::string(kDefaultVerifierPlain));
  set.templates_.emplace_back(TemplateId::VerifierTeacher, std::string(kDefaultVerifierTeacher));
  return set;
}

PromptSet PromptSet::load_dir(const std::filesystem::path& dir) {
  PromptSet set = defaults();
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("prompt directory not found: " + dir.string());
  }
  for (auto id : {TemplateId::GeneratorInitial, TemplateId::GeneratorRefine, TemplateId::VerifierPlain,
                  TemplateId::VerifierTeacher}) {
    const auto path = dir / (std::string(to_string(id)) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read prompt template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    set.set(PromptTemplate(id, buf.str()));
  }
  return set;
}

const PromptTemplate& PromptSet::get(TemplateId id) const {
  for (const auto& t : templates_) {
    if (t.id() == id) return t;
  }
  throw ConfigError("no template registered for " + std::string(to_string(id)));
}

void PromptSet::set(PromptTemplate tmpl) {
  for (auto& t : templates_) {
    if (t.id() == tmpl.id()) {
      t = std::move(tmpl);
      return;
    }
  }
  templates_.push_back(std::move(tmpl));
}

Messages render_prompt(const PromptSet& prompts, TemplateId id, const SlotMap& bindings) {
  return {ChatMessage{"user", prompts.get(id).render(bindings)}};
}

VerifierOutput parse_verdict(std::string_view raw) {
  VerifierOutput out;
  out.raw = std::string(raw);
  out.mode = VerdictMode::Model;

  const auto lines = split_lines(raw);
  std::vector<bool> drop(lines.size(), false);
  std::optional<Verdict> verdict;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string line(lines[i]);
    bool matched = false;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), verdict_regex()); it != std::sregex_iterator();
         ++it) {
      matched = true;
      verdict = lower((*it)[1].str()) == "correct" ? Verdict::Accept : Verdict::Reject;
    }
    if (matched) {
      drop[i] = true;
      continue;
    }
    std::smatch m;
    if (std::regex_match(line, m, score_regex())) {
      const double value = std::strtod(m[1].str().c_str(), nullptr);
      if (std::isfinite(value) && value >= 0.0 && value <= 1.0) {
        out.score = value;
        drop[i] = true;
      }
    }
  }

  if (!verdict) {
    // Fail-safe: an unreadable reply keeps the loop going.
    out.verdict = Verdict::Reject;
    out.feedback = std::string(trim_view(raw));
    out.score.reset();
    return out;
  }
  out.verdict = *verdict;
  std::string feedback;
  bool first = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (drop[i]) continue;
    if (!first) feedback += '\n';
    feedback += lines[i];
    first = false;
  }
  out.feedback = std::string(trim_view(feedback));
  return out;
}

namespace {

// Returns the content of the brace group starting at `open` (which must be
// '{'), or nullopt when unbalanced.
std::optional<std::string> brace_group(std::string_view text, std::size_t open) {
  if (open >= text.size() || text[open] != '{') return std::nullopt;
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      ++i;
      continue;
    }
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return std::string(text.substr(open + 1, i - open - 1));
  }
  return std::nullopt;
}

std::string strip_trailing_period(std::string s) {
  while (!s.empty() && (s.back() == '.' || std::isspace(static_cast<unsigned char>(s.back())))) s.pop_back();
  return s;
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view solution, const ExtractOptions& options) {
  std::vector<std::size_t> boxed_at;
  for (std::string_view marker : {std::string_view("\\boxed"), std::string_view("\\fbox")}) {
    for (auto p = solution.find(marker); p != std::string_view::npos; p = solution.find(marker, p + 1)) {
      boxed_at.push_back(p + marker.size());
    }
  }
  std::sort(boxed_at.begin(), boxed_at.end());
  for (auto it = boxed_at.rbegin(); it != boxed_at.rend(); ++it) {
    std::size_t p = *it;
    while (p < solution.size() && solution[p] == ' ') ++p;
    if (auto group = brace_group(solution, p)) {
      auto value = std::string(trim_view(*group));
      if (!value.empty()) return value;
    }
  }

  const std::regex pattern(options.final_answer_pattern, std::regex::icase | std::regex::ECMAScript);
  const auto lines = split_lines(solution);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::string line(*it);
    std::smatch m;
    if (std::regex_search(line, m, pattern) && m.size() > 1) {
      auto value = strip_trailing_period(std::string(trim_view(m[1].str())));
      if (value.size() >= 2 && value.front() == '$' && value.back() == '$') {
        value = std::string(trim_view(std::string_view(value).substr(1, value.size() - 2)));
      }
      if (!value.empty()) return value;
    }
  }
  return std::nullopt;
}

namespace {

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  for (auto p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) {
    s.replace(p, from.size(), to);
  }
}

// Strips one layer of outer delimiters; returns false when nothing changed.
bool strip_outer(std::string& s) {
  const std::string_view v(s);
  auto take = [&](std::size_t front, std::size_t back) {
    s = std::string(trim_view(v.substr(front, v.size() - front - back)));
    return true;
  };
  if (v.size() >= 4 && starts_with(v, "$$") && ends_with(v, "$$")) return take(2, 2);
  if (v.size() >= 2 && v.front() == '$' && v.back() == '$') return take(1, 1);
  if (v.size() >= 4 && starts_with(v, "\\(") && ends_with(v, "\\)")) return take(2, 2);
  if (v.size() >= 4 && starts_with(v, "\\[") && ends_with(v, "\\]")) return take(2, 2);
  for (std::string_view cmd : {"\\boxed", "\\text", "\\mathrm", "\\textbf", "\\mathbf"}) {
    if (starts_with(v, cmd) && v.size() > cmd.size() && v[cmd.size()] == '{') {
      auto group = brace_group(v, cmd.size());
      if (group && cmd.size() + group->size() + 2 == v.size()) {
        s = std::string(trim_view(*group));
        return true;
      }
    }
  }
  if (v.size() >= 2 && v.front() == '{') {
    auto group = brace_group(v, 0);
    if (group && group->size() + 2 == v.size()) {
      s = std::string(trim_view(*group));
      return true;
    }
  }
  return false;
}

const std::regex& plain_number_regex() {
  static const std::regex re(R"(^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)$)");
  return re;
}

std::string canonical_decimal(std::string s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    negative = s.front() == '-';
    s.erase(0, 1);
  }
  std::string int_part = s;
  std::string frac_part;
  if (const auto dot = s.find('.'); dot != std::string::npos) {
    int_part = s.substr(0, dot);
    frac_part = s.substr(dot + 1);
  }
  const auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
  std::string s(trim_view(answer));
  while (strip_outer(s)) {
  }
  for (std::string_view token : {"\\left", "\\right", "\\!", "\\,", "\\;", "\\:", "\\ ", "~"}) {
    replace_all(s, token, "");
  }
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  while (!s.empty() && s.back() == '.') s.pop_back();
  while (strip_outer(s)) {
  }
  if (std::regex_match(s, plain_number_regex())) s = canonical_decimal(s);
  return s;
}

std::optional<double> parse_numeric_answer(std::string_view normalized) {
  static const std::regex number(R"(^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?$)");
  static const std::regex slash(
      R"(^([+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+))/([+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+))$)");
  static const std::regex frac(
      R"(^([+-]?)\\frac\{([+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+))\}\{([+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+))\}$)");
  const std::string s(normalized);
  std::smatch m;
  if (std::regex_match(s, number)) return std::strtod(s.c_str(), nullptr);
  if (std::regex_match(s, m, slash)) {
    const double den = std::strtod(m[2].str().c_str(), nullptr);
    if (den == 0.0) return std::nullopt;
    return std::strtod(m[1].str().c_str(), nullptr) / den;
  }
  if (std::regex_match(s, m, frac)) {
    const double den = std::strtod(m[3].str().c_str(), nullptr);
    if (den == 0.0) return std::nullopt;
    const double value = std::strtod(m[2].str().c_str(), nullptr) / den;
    return m[1].str() == "-" ? -value : value;
  }
  return std::nullopt;
}

bool DefaultAnswerChecker::equivalent(std::string_view a, std::string_view b) const {
  const auto na = normalize_answer(a);
  const auto nb = normalize_answer(b);
  if (na.empty() || nb.empty()) return false;
  if (na == nb) return true;
  const auto x = parse_numeric_answer(na);
  const auto y = parse_numeric_answer(nb);
  if (!x || !y) return false;
  return std::fabs(*x - *y) <= 1e-9 * std::max(std::fabs(*x), std::fabs(*y));
}

const AnswerChecker& default_answer_checker() {
  static const DefaultAnswerChecker checker;
  return checker;
}

bool answers_equivalent(std::string_view a, std::string_view b) {
  return default_answer_checker().equivalent(a, b);
}

bool is_correct(const std::optional<std::string>& extracted, std::string_view gold, const AnswerChecker& checker) {
  return extracted.has_value() && checker.equivalent(*extracted, gold);
}

}  // namespace vrloop
