#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "aisensei/error.hpp"
#include "aisensei/kgraph.hpp"

namespace aisensei {

struct AssessmentRecord {
  std::string concept_id;
  double score = 0.0;  // correct / attempted, in [0, 1]
};

// Ordered Poor < Average < Good.
enum class MasteryLevel { Poor, Average, Good };

// Ordered S1 < S2 < S3 (weakest to strongest prerequisite mastery).
enum class StudentProfile { S1, S2, S3 };

inline constexpr StudentProfile kAllProfiles[] = {StudentProfile::S1, StudentProfile::S2,
                                                  StudentProfile::S3};

inline std::string_view to_string(MasteryLevel m) {
  switch (m) {
    case MasteryLevel::Poor: return "Poor";
    case MasteryLevel::Average: return "Average";
    case MasteryLevel::Good: return "Good";
  }
  return "?";
}

inline std::string_view to_string(StudentProfile p) {
  switch (p) {
    case StudentProfile::S1: return "S1";
    case StudentProfile::S2: return "S2";
    case StudentProfile::S3: return "S3";
  }
  return "?";
}

inline StudentProfile parse_profile(std::string_view s) {
  if (s == "S1") return StudentProfile::S1;
  if (s == "S2") return StudentProfile::S2;
  if (s == "S3") return StudentProfile::S3;
  throw ParseError("unknown student profile '" + std::string(s) + "'");
}

// The mastery tier a profile stands for when a tier directive is requested.
inline MasteryLevel profile_tier(StudentProfile p) {
  switch (p) {
    case StudentProfile::S1: return MasteryLevel::Poor;
    case StudentProfile::S2: return MasteryLevel::Average;
    case StudentProfile::S3: return MasteryLevel::Good;
  }
  return MasteryLevel::Poor;
}

struct MasteryThresholds {
  double good_min = 0.8;
  double avg_min = 0.5;
};

// Per-concept mastery. Concepts never assessed read as Poor.
class KnowledgeState {
 public:
  KnowledgeState() = default;
  explicit KnowledgeState(std::map<std::string, MasteryLevel, std::less<>> levels)
      : levels_(std::move(levels)) {}

  MasteryLevel level(std::string_view concept_id) const {
    auto it = levels_.find(concept_id);
    return it == levels_.end() ? MasteryLevel::Poor : it->second;
  }
  void set(const std::string& concept_id, MasteryLevel m) { levels_[concept_id] = m; }
  const std::map<std::string, MasteryLevel, std::less<>>& levels() const { return levels_; }

 private:
  std::map<std::string, MasteryLevel, std::less<>> levels_;
};

inline KnowledgeState derive_knowledge_state(const std::vector<AssessmentRecord>& records,
                                             const KnowledgeGraph& g,
                                             MasteryThresholds thresholds = {}) {
  if (!(thresholds.avg_min > 0.0 && thresholds.avg_min < 1.0 && thresholds.good_min > 0.0 &&
        thresholds.good_min < 1.0)) {
    throw ThresholdError("mastery thresholds must lie in (0, 1)");
  }
  if (thresholds.avg_min >= thresholds.good_min) {
    throw ThresholdError("avg_min must be below good_min");
  }
  KnowledgeState state;
  for (const auto& [id, _] : g.concepts()) state.set(id, MasteryLevel::Poor);
  for (const auto& r : records) {
    if (!g.contains(r.concept_id)) {
      throw UnknownConceptError("assessment references unknown concept '" + r.concept_id + "'");
    }
    if (!(r.score >= 0.0 && r.score <= 1.0)) {
      throw RangeError("assessment score for '" + r.concept_id + "' outside [0, 1]");
    }
    MasteryLevel m = MasteryLevel::Poor;
    if (r.score >= thresholds.good_min) {
      m = MasteryLevel::Good;
    } else if (r.score >= thresholds.avg_min) {
      m = MasteryLevel::Average;
    }
    state.set(r.concept_id, m);
  }
  return state;
}

// S1 if a basic (band A) prerequisite is Poor; S2 if any prerequisite is
// Poor or Average; S3 otherwise.
inline StudentProfile classify_profile(const KnowledgeState& state, const Question& question,
                                       const KnowledgeGraph& g) {
  bool any_weak = false;
  for (const auto& id : prerequisite_closure(g, question.concept_id)) {
    const MasteryLevel m = state.level(id);
    if (m == MasteryLevel::Poor && classify_difficulty(g, id) == DifficultyBand::A) {
      return StudentProfile::S1;
    }
    if (m != MasteryLevel::Good) any_weak = true;
  }
  return any_weak ? StudentProfile::S2 : StudentProfile::S3;
}

struct RankedPrerequisite {
  std::string concept_id;
  std::string title;
  bool operator==(const RankedPrerequisite&) const = default;
};

enum class RankingSource { ExpertProvided, SystemRanked };

inline std::string_view to_string(RankingSource s) {
  return s == RankingSource::ExpertProvided ? "ExpertProvided" : "SystemRanked";
}

struct RankedPrerequisites {
  RankingSource source = RankingSource::SystemRanked;
  std::vector<RankedPrerequisite> entries;
};

struct ImpasseRecord {
  std::string question_id;
  std::string impasse_text;
  std::vector<RankedPrerequisite> ranked_prerequisites;
  RankingSource source = RankingSource::SystemRanked;
};

// Most relevant first. An expert override is validated against the
// question's prerequisite closure and returned as given; otherwise closure
// members are ordered weakest mastery, then nearest, then by id.
inline RankedPrerequisites rank_prerequisites(
    const KnowledgeState& state, const Question& question, const KnowledgeGraph& g,
    const std::optional<std::vector<std::string>>& expert_override = std::nullopt) {
  const auto closure = prerequisite_closure_with_distance(g, question.concept_id);
  RankedPrerequisites out;
  if (expert_override) {
    out.source = RankingSource::ExpertProvided;
    std::set<std::string> used;
    for (const auto& id : *expert_override) {
      bool member = std::any_of(closure.begin(), closure.end(),
                                [&](const ClosureEntry& e) { return e.concept_id == id; });
      if (!member) {
        throw InvalidOverrideError("'" + id + "' is not a prerequisite of question '" +
                                   question.id + "'");
      }
      if (!used.insert(id).second) {
        throw InvalidOverrideError("'" + id + "' listed twice in ranking override");
      }
      out.entries.push_back({id, g.concept_at(id).title});
    }
    return out;
  }
  auto ranked = closure;
  std::stable_sort(ranked.begin(), ranked.end(), [&](const ClosureEntry& a, const ClosureEntry& b) {
    const MasteryLevel la = state.level(a.concept_id);
    const MasteryLevel lb = state.level(b.concept_id);
    return std::tie(la, a.distance, a.concept_id) < std::tie(lb, b.distance, b.concept_id);
  });
  for (const auto& e : ranked) out.entries.push_back({e.concept_id, g.concept_at(e.concept_id).title});
  return out;
}

// Expert impasse file:
//   {"question_id", "profile", "impasse_text", "ranked_prerequisites": [concept_id]}
struct ExpertImpasse {
  std::string question_id;
  StudentProfile profile = StudentProfile::S1;
  std::string impasse_text;
  std::vector<std::string> ranked_prerequisites;
};

inline ExpertImpasse parse_expert_impasse(const nlohmann::json& j) {
  try {
    ExpertImpasse e;
    e.question_id = j.at("question_id").get<std::string>();
    e.profile = parse_profile(j.at("profile").get<std::string>());
    e.impasse_text = j.at("impasse_text").get<std::string>();
    e.ranked_prerequisites = j.value("ranked_prerequisites", std::vector<std::string>{});
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed impasse file: ") + ex.what());
  }
}

inline ImpasseRecord resolve_impasse(const ExpertImpasse& e, const KnowledgeGraph& g) {
  const Question& q = g.question_at(e.question_id);
  auto ranked = rank_prerequisites(KnowledgeState{}, q, g, e.ranked_prerequisites);
  return {e.question_id, e.impasse_text, std::move(ranked.entries), ranked.source};
}

// Assessment records: [{"concept_id", "score"}].
inline std::vector<AssessmentRecord> parse_assessments(const nlohmann::json& j) {
  std::vector<AssessmentRecord> out;
  try {
    for (const auto& r : j) {
      out.push_back({r.at("concept_id").get<std::string>(), r.at("score").get<double>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed assessment records: ") + ex.what());
  }
  return out;
}

}  // namespace aisensei
