#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aisensei/error.hpp"
#include "aisensei/hash.hpp"
#include "aisensei/student_model.hpp"

namespace aisensei {

struct PromptRequest {
  std::string question_text;
  std::string standard_solution;
  std::string impasse_text;
  std::vector<std::string> ranked_prerequisites;  // concept titles, most relevant first
  std::optional<MasteryLevel> tier;
};

struct PromptOptions {
  // Collapse "impasse::" to "impasse:". Off by default so the prompt matches
  // what the original experiment sent.
  bool normalize_impasse_colon = false;
};

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  std::string fingerprint;  // sha256 of text
  bool operator==(const RenderedPrompt&) const = default;
};

inline constexpr std::string_view kP1TemplateId = "P1";
inline constexpr std::string_view kTierSuffix = "+tier";

inline RenderedPrompt make_prompt(std::string text, std::string template_id) {
  std::string fp = sha256_hex(text);
  return {std::move(text), std::move(template_id), std::move(fp)};
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string_view tier_directive(MasteryLevel level) {
  switch (level) {
    case MasteryLevel::Good: return "Provide advanced assistance.";
    case MasteryLevel::Average: return "Provide a foundational review.";
    case MasteryLevel::Poor: return "Provide an in-depth explanation of the prerequisites.";
  }
  return "";
}

inline bool is_tiered(const RenderedPrompt& p) {
  return p.template_id.size() >= kTierSuffix.size() &&
         std::string_view(p.template_id).substr(p.template_id.size() - kTierSuffix.size()) ==
             kTierSuffix;
}

inline RenderedPrompt append_tier_directive(const RenderedPrompt& prompt, MasteryLevel level) {
  if (is_tiered(prompt)) {
    throw AlreadyTieredError("prompt " + prompt.fingerprint.substr(0, 12) +
                             " already carries a tier directive");
  }
  std::string text = prompt.text;
  text += ' ';
  text += tier_directive(level);
  return make_prompt(std::move(text), prompt.template_id + std::string(kTierSuffix));
}

// Solve this question: <Q>. The correct and standard solution is <A>. Your
// solution should include detailed explanation to help this impasse:: <I>.
// This impasse exists because: <R>?
inline RenderedPrompt render_p1(const PromptRequest& req, const PromptOptions& opts = {}) {
  if (req.question_text.empty()) throw EmptyFieldError("question_text is empty");
  if (req.standard_solution.empty()) throw EmptyFieldError("standard_solution is empty");
  std::string text;
  text.reserve(req.question_text.size() + req.standard_solution.size() + req.impasse_text.size() + 192);
  text += "Solve this question: ";
  text += req.question_text;
  text += ". The correct and standard solution is ";
  text += req.standard_solution;
  text += ". Your solution should include detailed explanation to help this impasse";
  text += opts.normalize_impasse_colon ? ": " : ":: ";
  text += req.impasse_text;
  text += ". This impasse exists because: ";
  text += join(req.ranked_prerequisites, ", ");
  text += '?';
  auto prompt = make_prompt(std::move(text), std::string(kP1TemplateId));
  if (req.tier) prompt = append_tier_directive(prompt, *req.tier);
  return prompt;
}

// Refresher prompts come from a versioned template with {question} and
// {concepts} placeholders.
inline constexpr std::string_view kRefresherTemplateId = "REFRESHER/v1";
inline constexpr std::string_view kDefaultRefresherTemplate =
    "Give me a refresher on the concepts related to this question: {question}. "
    "Explain these concepts, most relevant first: {concepts}.";

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

inline RenderedPrompt render_refresher(std::string_view template_text, std::string_view template_id,
                                       const std::string& question_text,
                                       const std::vector<std::string>& concept_titles) {
  if (question_text.empty()) throw EmptyFieldError("question_text is empty");
  std::string text = replace_all(std::string(template_text), "{question}", question_text);
  text = replace_all(std::move(text), "{concepts}", join(concept_titles, ", "));
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return append_tier_directive(make_prompt(std::move(text), std::string(template_id)),
                               MasteryLevel::Poor);
}

}  // namespace aisensei
