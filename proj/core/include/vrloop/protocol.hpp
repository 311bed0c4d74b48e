#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrloop/types.hpp"

namespace vrloop {

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};
using Messages = std::vector<ChatMessage>;

enum class TemplateId { GeneratorInitial, GeneratorRefine, VerifierPlain, VerifierTeacher };

std::string_view to_string(TemplateId id);

using SlotMap = std::map<std::string, std::string, std::less<>>;

// Prompt body with `{{slot}}` placeholders and optional sections
// `{{#slot}} ... {{/slot}}` that render only when `slot` is bound to a
// non-empty value. Valid slots: statement, prior_solution, feedback,
// reference_solution.
class PromptTemplate {
 public:
  PromptTemplate(TemplateId id, std::string body);

  TemplateId id() const { return id_; }
  const std::string& body() const { return body_; }

  // Slots that must be bound for render() to succeed.
  const std::vector<std::string>& required_slots() const { return required_; }
  // Every slot the template mentions, required or optional.
  bool mentions(std::string_view slot) const;

  std::string render(const SlotMap& bindings) const;

 private:
  struct Node {
    enum class Kind { Text, Slot, Section } kind = Kind::Text;
    std::string value;  // text, or slot name
    std::vector<Node> children;
  };

  void render_nodes(const std::vector<Node>& nodes, const SlotMap& bindings, std::string& out) const;

  TemplateId id_;
  std::string body_;
  std::vector<Node> nodes_;
  std::vector<std::string> required_;
  std::vector<std::string> mentioned_;
};

// The four templates binding generator and verifier. Defaults are
// reconstructions and meant to be overridden from files.
class PromptSet {
 public:
  static PromptSet defaults();
  // Reads `<template_id>.txt` from `dir`; missing files fall back to defaults.
  static PromptSet load_dir(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateId id) const;
  void set(PromptTemplate tmpl);

 private:
  PromptSet() = default;
  std::vector<PromptTemplate> templates_;
};

Messages render_prompt(const PromptSet& prompts, TemplateId id, const SlotMap& bindings);

// Verifier reply parsing. Total: replies without a verdict line map to
// reject with the whole reply as feedback.
VerifierOutput parse_verdict(std::string_view raw);

struct ExtractOptions {
  // Case-insensitive; capture group 1 is the answer.
  std::string final_answer_pattern = R"(final answer\s*(?:is)?\s*[:=]?\s*(.+))";
};

std::optional<std::string> extract_answer(std::string_view solution, const ExtractOptions& options = {});

std::string normalize_answer(std::string_view answer);
// Decimal, scientific, a/b, or \frac{a}{b} forms.
std::optional<double> parse_numeric_answer(std::string_view normalized);

class AnswerChecker {
 public:
  virtual ~AnswerChecker() = default;
  virtual bool equivalent(std::string_view a, std::string_view b) const = 0;
};

// Normalization plus numeric comparison at relative tolerance 1e-9.
class DefaultAnswerChecker final : public AnswerChecker {
 public:
  bool equivalent(std::string_view a, std::string_view b) const override;
};

const AnswerChecker& default_answer_checker();

bool answers_equivalent(std::string_view a, std::string_view b);

// Unextractable answers count as incorrect.
bool is_correct(const std::optional<std::string>& extracted, std::string_view gold,
                const AnswerChecker& checker = default_answer_checker());

}  // namespace vrloop
