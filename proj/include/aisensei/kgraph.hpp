#pragma once

// Prerequisite knowledge graph: one concept per textbook unit, edges pointing
// from a prerequisite toward the unit that refers back to it for help.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <compare>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aisensei/error.hpp"

namespace aisensei {

enum class DifficultyBand { A, B, C };

inline constexpr DifficultyBand kAllBands[] = {DifficultyBand::A, DifficultyBand::B,
                                               DifficultyBand::C};

inline std::string_view to_string(DifficultyBand band) {
  switch (band) {
    case DifficultyBand::A: return "A";
    case DifficultyBand::B: return "B";
    case DifficultyBand::C: return "C";
  }
  return "?";
}

inline DifficultyBand parse_band(std::string_view s) {
  if (s == "A") return DifficultyBand::A;
  if (s == "B") return DifficultyBand::B;
  if (s == "C") return DifficultyBand::C;
  throw ParseError("unknown difficulty band '" + std::string(s) + "'");
}

struct Question {
  std::string id;
  std::string concept_id;
  std::string text;
  std::string standard_solution;
  DifficultyBand difficulty = DifficultyBand::A;  // filled in at load
};

struct Concept {
  std::string id;
  std::string title;
  std::vector<std::string> question_ids;
};

struct PrerequisiteEdge {
  std::string prerequisite;
  std::string dependent;
  auto operator<=>(const PrerequisiteEdge&) const = default;
};

// Immutable after construction; every accessor is a const read.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Validates ids, edge endpoints and acyclicity, then caches difficulty
  // bands on every question.
  static KnowledgeGraph build(std::vector<Concept> concepts, std::vector<Question> questions,
                              std::vector<PrerequisiteEdge> edges);

  bool contains(std::string_view id) const { return concepts_.find(id) != concepts_.end(); }

  const Concept& concept_at(std::string_view id) const {
    auto it = concepts_.find(id);
    if (it == concepts_.end()) throw UnknownConceptError("unknown concept '" + std::string(id) + "'");
    return it->second;
  }

  const Question& question_at(std::string_view id) const {
    auto it = questions_.find(id);
    if (it == questions_.end()) throw NotFoundError("unknown question '" + std::string(id) + "'");
    return it->second;
  }

  const std::map<std::string, Concept, std::less<>>& concepts() const { return concepts_; }
  const std::map<std::string, Question, std::less<>>& questions() const { return questions_; }
  const std::set<PrerequisiteEdge>& edges() const { return edges_; }

  // Direct prerequisites / dependents, ascending by id.
  const std::vector<std::string>& prerequisites_of(std::string_view id) const {
    return prereqs_.at(std::string(concept_at(id).id));
  }
  const std::vector<std::string>& dependents_of(std::string_view id) const {
    return dependents_.at(std::string(concept_at(id).id));
  }

  // Kahn's algorithm, smallest available id first.
  std::vector<std::string> topological_order() const;

 private:
  std::map<std::string, Concept, std::less<>> concepts_;
  std::map<std::string, Question, std::less<>> questions_;
  std::set<PrerequisiteEdge> edges_;
  std::map<std::string, std::vector<std::string>> prereqs_;
  std::map<std::string, std::vector<std::string>> dependents_;
};

// A concept reached while walking prerequisite edges backwards.
struct ClosureEntry {
  std::string concept_id;
  int distance = 0;  // number of edges from the starting concept
};

// Transitive prerequisites of `concept_id` in breadth-first order, each BFS
// level sorted by ascending id. The concept itself is excluded.
inline std::vector<ClosureEntry> prerequisite_closure_with_distance(const KnowledgeGraph& g,
                                                                    std::string_view concept_id) {
  const std::string start = g.concept_at(concept_id).id;
  std::vector<ClosureEntry> out;
  std::set<std::string> seen{start};
  std::vector<std::string> frontier{start};
  int depth = 0;
  while (!frontier.empty()) {
    ++depth;
    std::set<std::string> next;
    for (const auto& node : frontier) {
      for (const auto& p : g.prerequisites_of(node)) {
        if (!seen.contains(p)) next.insert(p);
      }
    }
    frontier.assign(next.begin(), next.end());
    for (const auto& n : frontier) {
      seen.insert(n);
      out.push_back({n, depth});
    }
  }
  return out;
}

inline std::vector<std::string> prerequisite_closure(const KnowledgeGraph& g,
                                                     std::string_view concept_id) {
  std::vector<std::string> ids;
  for (auto& e : prerequisite_closure_with_distance(g, concept_id)) ids.push_back(std::move(e.concept_id));
  return ids;
}

// A: no prerequisites. C: has prerequisites but nothing depends on it.
// B: everything in between.
inline DifficultyBand classify_difficulty(const KnowledgeGraph& g, std::string_view concept_id) {
  if (g.prerequisites_of(concept_id).empty()) return DifficultyBand::A;
  if (g.dependents_of(concept_id).empty()) return DifficultyBand::C;
  return DifficultyBand::B;
}

// Ordered by (concept id, question id).
inline std::vector<Question> questions_for_band(const KnowledgeGraph& g, DifficultyBand band) {
  std::vector<Question> out;
  for (const auto& [id, q] : g.questions()) {
    if (q.difficulty == band) out.push_back(q);
  }
  std::stable_sort(out.begin(), out.end(), [](const Question& a, const Question& b) {
    return std::tie(a.concept_id, a.id) < std::tie(b.concept_id, b.id);
  });
  return out;
}

namespace detail {

// Finds one cycle among nodes that Kahn's algorithm could not drain.
inline std::vector<std::string> find_cycle(const std::map<std::string, std::vector<std::string>>& succ,
                                           const std::set<std::string>& remaining) {
  std::map<std::string, int> color;  // 0 white, 1 on stack, 2 done
  std::vector<std::string> stack;
  std::vector<std::string> cycle;
  auto dfs = [&](auto&& self, const std::string& u) -> bool {
    color[u] = 1;
    stack.push_back(u);
    for (const auto& v : succ.at(u)) {
      if (!remaining.contains(v)) continue;
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        cycle.assign(it, stack.end());
        cycle.push_back(v);
        return true;
      }
      if (color[v] == 0 && self(self, v)) return true;
    }
    stack.pop_back();
    color[u] = 2;
    return false;
  };
  for (const auto& n : remaining) {
    if (color[n] == 0 && dfs(dfs, n)) break;
  }
  return cycle;
}

}  // namespace detail

inline KnowledgeGraph KnowledgeGraph::build(std::vector<Concept> concepts,
                                            std::vector<Question> questions,
                                            std::vector<PrerequisiteEdge> edges) {
  KnowledgeGraph g;
  for (auto& c : concepts) {
    if (c.id.empty()) throw ParseError("concept with empty id");
    c.question_ids.clear();
    const std::string id = c.id;
    if (!g.concepts_.emplace(id, std::move(c)).second) {
      throw ParseError("duplicate concept id '" + id + "'");
    }
    g.prereqs_[id];
    g.dependents_[id];
  }
  for (auto& e : edges) {
    if (!g.contains(e.prerequisite) || !g.contains(e.dependent)) {
      throw DanglingEdgeError("edge " + e.prerequisite + " -> " + e.dependent +
                              " references an unknown concept");
    }
    if (e.prerequisite == e.dependent) {
      throw CycleError("cycle: " + e.prerequisite + " -> " + e.dependent);
    }
    if (g.edges_.insert(e).second) {
      g.prereqs_[e.dependent].push_back(e.prerequisite);
      g.dependents_[e.prerequisite].push_back(e.dependent);
    }
  }
  for (auto& [_, v] : g.prereqs_) std::sort(v.begin(), v.end());
  for (auto& [_, v] : g.dependents_) std::sort(v.begin(), v.end());

  auto order = g.topological_order();
  if (order.size() != g.concepts_.size()) {
    std::set<std::string> remaining;
    for (const auto& [id, _] : g.concepts_) remaining.insert(id);
    for (const auto& id : order) remaining.erase(id);
    auto cycle = detail::find_cycle(g.dependents_, remaining);
    std::string msg = "cycle:";
    for (std::size_t i = 0; i < cycle.size(); ++i) msg += (i ? " -> " : " ") + cycle[i];
    throw CycleError(msg);
  }

  for (auto& q : questions) {
    if (q.id.empty()) throw ParseError("question with empty id");
    auto cit = g.concepts_.find(q.concept_id);
    if (cit == g.concepts_.end()) {
      throw UnknownConceptError("question '" + q.id + "' references unknown concept '" +
                                q.concept_id + "'");
    }
    q.difficulty = classify_difficulty(g, q.concept_id);
    cit->second.question_ids.push_back(q.id);
    const std::string qid = q.id;
    if (!g.questions_.emplace(qid, std::move(q)).second) {
      throw ParseError("duplicate question id '" + qid + "'");
    }
  }
  return g;
}

inline std::vector<std::string> KnowledgeGraph::topological_order() const {
  std::map<std::string, std::size_t> in_degree;
  std::set<std::string> ready;
  for (const auto& [id, preds] : prereqs_) {
    in_degree[id] = preds.size();
    if (preds.empty()) ready.insert(id);
  }
  std::vector<std::string> order;
  order.reserve(concepts_.size());
  while (!ready.empty()) {
    std::string node = *ready.begin();
    ready.erase(ready.begin());
    for (const auto& next : dependents_.at(node)) {
      if (--in_degree[next] == 0) ready.insert(next);
    }
    order.push_back(std::move(node));
  }
  return order;
}

// Graph document:
//   {"concepts": [{"id", "title", "questions": [{"id", "text", "standard_solution"}]}],
//    "edges": [{"prerequisite", "dependent"}]}
inline KnowledgeGraph load_graph(const nlohmann::json& doc) {
  std::vector<Concept> concepts;
  std::vector<Question> questions;
  std::vector<PrerequisiteEdge> edges;
  try {
    if (!doc.is_object() || !doc.contains("concepts")) {
      throw ParseError("graph document must be an object with a 'concepts' array");
    }
    for (const auto& c : doc.at("concepts")) {
      Concept concept_{c.at("id").get<std::string>(), c.value("title", std::string{}), {}};
      if (c.contains("questions")) {
        for (const auto& q : c.at("questions")) {
          questions.push_back({q.at("id").get<std::string>(), concept_.id,
                               q.value("text", std::string{}),
                               q.value("standard_solution", std::string{}), DifficultyBand::A});
        }
      }
      concepts.push_back(std::move(concept_));
    }
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) {
        edges.push_back({e.at("prerequisite").get<std::string>(), e.at("dependent").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed graph document: ") + ex.what());
  }
  return KnowledgeGraph::build(std::move(concepts), std::move(questions), std::move(edges));
}

inline KnowledgeGraph load_graph_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("graph document is not valid JSON: ") + ex.what());
  }
  return load_graph(doc);
}

inline KnowledgeGraph load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open graph document " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_graph_text(ss.str());
}

}  // namespace aisensei
