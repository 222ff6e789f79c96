#pragma once

// Live tutoring sessions for the pilot-study flow: profile assignment,
// question delivery, three guidance modes, 1-5 response ratings and pre/post
// surveys. All state is persisted to append-only JSONL files and rebuilt from
// them on start-up.

#include <fcntl.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aisensei/error.hpp"
#include "aisensei/eval_metrics.hpp"
#include "aisensei/kgraph.hpp"
#include "aisensei/llm_gateway.hpp"
#include "aisensei/prompt.hpp"
#include "aisensei/student_model.hpp"

namespace aisensei {

enum class GuidanceMode { Clarify, FollowUp, Refresher };
enum class SessionState { Active, Completed };
enum class SurveyPhase { Pre, Post };

inline std::string_view to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::Clarify: return "clarify";
    case GuidanceMode::FollowUp: return "follow_up";
    case GuidanceMode::Refresher: return "refresher";
  }
  return "?";
}

inline GuidanceMode parse_guidance_mode(std::string_view s) {
  if (s == "clarify") return GuidanceMode::Clarify;
  if (s == "follow_up") return GuidanceMode::FollowUp;
  if (s == "refresher") return GuidanceMode::Refresher;
  throw ValidationError("unknown guidance mode '" + std::string(s) +
                        "' (expected clarify|follow_up|refresher)");
}

inline std::string_view to_string(SessionState s) { return s == SessionState::Active ? "active" : "completed"; }
inline std::string_view to_string(SurveyPhase p) { return p == SurveyPhase::Pre ? "pre" : "post"; }

inline SurveyPhase parse_survey_phase(std::string_view s) {
  if (s == "pre") return SurveyPhase::Pre;
  if (s == "post") return SurveyPhase::Post;
  throw ValidationError("unknown survey phase '" + std::string(s) + "' (expected pre|post)");
}

struct GuidanceExchange {
  GuidanceMode mode = GuidanceMode::Clarify;
  std::optional<std::string> student_input;
  std::string response_text;
  std::optional<int> rating;
  std::string timestamp;
  std::string prompt_fingerprint;
  std::string cassette_key;
};

struct Session {
  std::string session_id;
  StudentProfile profile = StudentProfile::S1;
  std::string question_id;
  std::string created_at;
  std::vector<GuidanceExchange> log;
  SessionState state = SessionState::Active;
};

struct SurveyResponse {
  std::string session_id;
  SurveyPhase phase = SurveyPhase::Pre;
  std::map<std::string, int> items;
  std::optional<std::string> free_text;
  std::string submitted_at;
};

// Item keys per phase. Pre: perception of AI tools and feedback seeking.
// Post: experience with the tutor.
struct SurveySchema {
  std::vector<std::string> pre_items{"ai_familiarity",          "llm_familiarity",
                                     "llm_use_frequency",       "llm_feedback_usefulness",
                                     "llm_question_usefulness", "llm_current_learning_usefulness"};
  std::vector<std::string> post_items{"ease_of_use", "correctness", "usefulness", "hallucination_frequency",
                                      "llm_feedback_usefulness"};

  const std::vector<std::string>& items(SurveyPhase p) const { return p == SurveyPhase::Pre ? pre_items : post_items; }
};

// ---------------------------------------------------------------------------
// JSON encoding of records

inline nlohmann::json to_json(const GuidanceExchange& e) {
  return {{"mode", to_string(e.mode)},
          {"student_input", e.student_input ? nlohmann::json(*e.student_input) : nlohmann::json(nullptr)},
          {"response_text", e.response_text},
          {"rating", e.rating ? nlohmann::json(*e.rating) : nlohmann::json(nullptr)},
          {"timestamp", e.timestamp},
          {"prompt_fingerprint", e.prompt_fingerprint},
          {"cassette_key", e.cassette_key}};
}

inline GuidanceExchange exchange_from_json(const nlohmann::json& j) {
  GuidanceExchange e;
  e.mode = parse_guidance_mode(j.at("mode").get<std::string>());
  if (!j.at("student_input").is_null()) e.student_input = j.at("student_input").get<std::string>();
  e.response_text = j.at("response_text").get<std::string>();
  if (j.contains("rating") && !j.at("rating").is_null()) e.rating = j.at("rating").get<int>();
  e.timestamp = j.at("timestamp").get<std::string>();
  e.prompt_fingerprint = j.value("prompt_fingerprint", std::string{});
  e.cassette_key = j.value("cassette_key", std::string{});
  return e;
}

inline nlohmann::json to_json(const Session& s) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : s.log) log.push_back(to_json(e));
  return {{"session_id", s.session_id}, {"profile", to_string(s.profile)},
          {"question_id", s.question_id}, {"created_at", s.created_at},
          {"state", to_string(s.state)},   {"log", log}};
}

inline nlohmann::json to_json(const SurveyResponse& r) {
  return {{"session_id", r.session_id},
          {"phase", to_string(r.phase)},
          {"items", r.items},
          {"free_text", r.free_text ? nlohmann::json(*r.free_text) : nlohmann::json(nullptr)},
          {"submitted_at", r.submitted_at}};
}

inline SurveyResponse survey_from_json(const nlohmann::json& j) {
  SurveyResponse r;
  r.session_id = j.at("session_id").get<std::string>();
  r.phase = parse_survey_phase(j.at("phase").get<std::string>());
  r.items = j.at("items").get<std::map<std::string, int>>();
  if (j.contains("free_text") && !j.at("free_text").is_null()) r.free_text = j.at("free_text").get<std::string>();
  r.submitted_at = j.value("submitted_at", std::string{});
  return r;
}

// ---------------------------------------------------------------------------
// Append-only JSONL store, one file per record kind. Every append is
// fsync'ed before returning; writes are serialized through one mutex.

class JsonlStore {
 public:
  explicit JsonlStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create store directory " + dir_.string() + ": " + ec.message());
  }

  const std::filesystem::path& dir() const { return dir_; }

  void append(const std::string& kind, const nlohmann::json& record) {
    const std::string line = record.dump() + "\n";
    const auto path = dir_ / (kind + ".jsonl");
    std::lock_guard lock(mu_);
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      ssize_t n = ::write(fd, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        ::close(fd);
        throw IoError("cannot append to " + path.string() + ": " + std::strerror(err));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
      const int err = errno;
      ::close(fd);
      throw IoError("fsync failed on " + path.string() + ": " + std::strerror(err));
    }
    ::close(fd);
  }

  // A torn final line (crash mid-append) is skipped; corruption elsewhere
  // is an error.
  std::vector<nlohmann::json> read_all(const std::string& kind) const {
    std::vector<nlohmann::json> out;
    const auto path = dir_ / (kind + ".jsonl");
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) lines.push_back(std::move(line));
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      try {
        out.push_back(nlohmann::json::parse(lines[i]));
      } catch (const nlohmann::json::exception& ex) {
        if (i + 1 == lines.size()) break;
        throw ParseError(path.string() + " line " + std::to_string(i + 1) + ": " + ex.what());
      }
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------

struct TutorConfig {
  std::filesystem::path store_dir = "store";
  std::uint64_t seed = 42;
  // Hypothetical impasse per (question, profile).
  std::vector<ExpertImpasse> impasses;
  std::string refresher_template = std::string(kDefaultRefresherTemplate);
  std::string refresher_template_id = std::string(kRefresherTemplateId);
  SurveySchema survey;
  PromptOptions prompt_options;
  double temperature = 0.2;
  int max_tokens = 1024;
  std::string provider_id = "openai";
  std::string model = "gpt-4";
};

struct ExportFilter {
  std::optional<std::string> session_id;
  std::optional<std::string> since;  // ISO-8601, compared against created_at
};

struct ExportStats {
  std::size_t sessions = 0;
  std::size_t exchanges = 0;
  SummaryStat ratings;
  std::map<std::string, SummaryStat> pre_items;
  std::map<std::string, SummaryStat> post_items;
};

class TutorService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  TutorService(std::shared_ptr<const KnowledgeGraph> graph, CompletionClient& client, TutorConfig cfg,
               Clock clock = nullptr)
      : graph_(std::move(graph)),
        client_(client),
        cfg_(std::move(cfg)),
        clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })),
        store_(cfg_.store_dir) {
    for (const auto& e : cfg_.impasses) impasses_[{e.question_id, e.profile}] = e;
    for (auto band : kAllBands) {
      auto qs = questions_for_band(*graph_, band);
      std::sort(qs.begin(), qs.end(), [](const Question& a, const Question& b) { return a.id < b.id; });
      if (!qs.empty()) band_questions_.push_back(qs.front().id);
    }
    load();
    rng_.seed(cfg_.seed + sessions_.size());
  }

  const KnowledgeGraph& graph() const { return *graph_; }
  const SurveySchema& survey_schema() const { return cfg_.survey; }

  Session create_session(std::optional<StudentProfile> requested = std::nullopt) {
    if (band_questions_.empty()) throw EmptyBankError("question bank is empty");
    std::unique_lock lock(sessions_mu_);
    Session s;
    const std::size_t n = order_.size();
    char id[32];
    std::snprintf(id, sizeof id, "sess-%06zu", n + 1);
    s.session_id = id;
    if (requested) {
      s.profile = *requested;
    } else {
      std::lock_guard rng_lock(rng_mu_);
      s.profile = kAllProfiles[std::uniform_int_distribution<int>(0, 2)(rng_)];
    }
    s.question_id = band_questions_[n % band_questions_.size()];
    s.created_at = now();
    store_.append("sessions", {{"session_id", s.session_id},
                               {"profile", to_string(s.profile)},
                               {"question_id", s.question_id},
                               {"created_at", s.created_at}});
    auto slot = std::make_shared<Slot>();
    slot->session = s;
    sessions_.emplace(s.session_id, std::move(slot));
    order_.push_back(s.session_id);
    return s;
  }

  Session get_session(const std::string& id) const {
    auto slot = find(id);
    std::lock_guard lock(slot->mu);
    return slot->session;
  }

  const Question& question_for(const std::string& session_id) const {
    return graph_->question_at(get_session(session_id).question_id);
  }

  // The impasse and ranked prerequisites attached to this session's
  // profile. Falls back to a generic impasse with prerequisites ordered by
  // distance when no hypothetical impasse was prepared.
  ImpasseRecord impasse_for(const Session& s) const {
    auto it = impasses_.find({s.question_id, s.profile});
    if (it != impasses_.end()) return resolve_impasse(it->second, *graph_);
    const Question& q = graph_->question_at(s.question_id);
    auto ranked = rank_prerequisites(KnowledgeState{}, q, *graph_);
    return {q.id, "I am not sure how to begin solving this question", std::move(ranked.entries), ranked.source};
  }

  GuidanceExchange request_guidance(const std::string& session_id, GuidanceMode mode,
                                    std::optional<std::string> student_input = std::nullopt) {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mu);
    Session& s = slot->session;
    if (s.state == SessionState::Completed) throw SessionCompletedError("session " + session_id + " is completed");
    if (mode == GuidanceMode::FollowUp && (!student_input || student_input->empty())) {
      throw MissingInputError("follow-up guidance needs the student's question");
    }
    if (mode != GuidanceMode::FollowUp && student_input && student_input->empty()) student_input.reset();

    const Question& q = graph_->question_at(s.question_id);
    const ImpasseRecord impasse = impasse_for(s);
    std::vector<std::string> titles;
    for (const auto& r : impasse.ranked_prerequisites) titles.push_back(r.title);

    RenderedPrompt prompt;
    switch (mode) {
      case GuidanceMode::Clarify:
        prompt = render_p1({q.text, q.standard_solution, impasse.impasse_text, titles, std::nullopt},
                           cfg_.prompt_options);
        break;
      case GuidanceMode::FollowUp:
        prompt = render_p1({q.text, q.standard_solution, *student_input, titles, std::nullopt}, cfg_.prompt_options);
        break;
      case GuidanceMode::Refresher:
        if (titles.empty()) titles.push_back(graph_->concept_at(q.concept_id).title);
        prompt = render_refresher(cfg_.refresher_template, cfg_.refresher_template_id, q.text, titles);
        break;
    }

    FeedbackArtifact artifact = client_.complete(
        CompletionRequest{std::move(prompt), cfg_.temperature, cfg_.max_tokens, cfg_.provider_id, cfg_.model});

    GuidanceExchange e;
    e.mode = mode;
    e.student_input = std::move(student_input);
    e.response_text = artifact.response_text;
    e.timestamp = now();
    e.prompt_fingerprint = artifact.request.prompt.fingerprint;
    e.cassette_key = artifact.cassette_key;

    auto artifact_json = to_json(artifact);
    artifact_json["session_id"] = session_id;
    artifact_json["exchange_index"] = s.log.size();
    store_.append("artifacts", artifact_json);
    auto record = to_json(e);
    record.erase("rating");
    record["session_id"] = session_id;
    record["index"] = s.log.size();
    store_.append("exchanges", record);
    s.log.push_back(e);
    return e;
  }

  GuidanceExchange rate_exchange(const std::string& session_id, std::size_t index, int score) {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mu);
    Session& s = slot->session;
    if (index >= s.log.size()) {
      throw NotFoundError("session " + session_id + " has no exchange " + std::to_string(index));
    }
    if (score < 1 || score > 5) throw RangeError("rating must be between 1 and 5");
    GuidanceExchange& e = s.log[index];
    if (e.rating) throw AlreadyRatedError("exchange " + std::to_string(index) + " is already rated");
    store_.append("ratings", {{"session_id", session_id}, {"index", index}, {"score", score}, {"rated_at", now()}});
    e.rating = score;
    return e;
  }

  SurveyResponse submit_survey(SurveyResponse resp) {
    auto slot = find(resp.session_id);
    std::lock_guard lock(slot->mu);
    const auto& allowed = cfg_.survey.items(resp.phase);
    for (const auto& [key, value] : resp.items) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw UnknownItemError("'" + key + "' is not a " + std::string(to_string(resp.phase)) + "-survey item");
      }
      if (value < 1 || value > 5) throw RangeError("survey item '" + key + "' must be between 1 and 5");
    }
    if (slot->surveys.contains(resp.phase)) {
      throw DuplicateSurveyError(std::string(to_string(resp.phase)) + "-survey already submitted for session " +
                                 resp.session_id);
    }
    resp.submitted_at = now();
    store_.append("surveys", to_json(resp));
    slot->surveys.emplace(resp.phase, resp);
    if (resp.phase == SurveyPhase::Post) slot->session.state = SessionState::Completed;
    return resp;
  }

  // JSONL bundle: one line per session, exchange (with its rating) and
  // survey, then a summary line with rating and survey-item statistics.
  std::string export_logs(const ExportFilter& filter = {}) const {
    std::ostringstream out;
    for (const auto& slot : selected(filter)) {
      std::lock_guard lock(slot->mu);
      const Session& s = slot->session;
      out << nlohmann::json{{"type", "session"},         {"session_id", s.session_id},
                            {"profile", to_string(s.profile)}, {"question_id", s.question_id},
                            {"created_at", s.created_at}, {"state", to_string(s.state)}}
                 .dump()
          << "\n";
      for (std::size_t i = 0; i < s.log.size(); ++i) {
        auto j = to_json(s.log[i]);
        j["type"] = "exchange";
        j["session_id"] = s.session_id;
        j["index"] = i;
        out << j.dump() << "\n";
      }
      for (const auto& [phase, survey] : slot->surveys) {
        auto j = to_json(survey);
        j["type"] = "survey";
        out << j.dump() << "\n";
      }
    }
    const ExportStats st = export_stats(filter);
    auto stat_json = [](const SummaryStat& s) {
      return nlohmann::json{{"count", s.count}, {"mean", s.mean}, {"sd", s.sd}};
    };
    nlohmann::json pre = nlohmann::json::object(), post = nlohmann::json::object();
    for (const auto& [k, v] : st.pre_items) pre[k] = stat_json(v);
    for (const auto& [k, v] : st.post_items) post[k] = stat_json(v);
    out << nlohmann::json{{"type", "summary"},
                          {"sessions", st.sessions},
                          {"exchanges", st.exchanges},
                          {"ratings", stat_json(st.ratings)},
                          {"survey_pre", pre},
                          {"survey_post", post}}
               .dump()
        << "\n";
    return out.str();
  }

  ExportStats export_stats(const ExportFilter& filter = {}) const {
    ExportStats st;
    std::vector<double> ratings;
    std::map<std::string, std::vector<double>> pre, post;
    for (const auto& slot : selected(filter)) {
      std::lock_guard lock(slot->mu);
      ++st.sessions;
      st.exchanges += slot->session.log.size();
      for (const auto& e : slot->session.log) {
        if (e.rating) ratings.push_back(*e.rating);
      }
      for (const auto& [phase, survey] : slot->surveys) {
        auto& target = phase == SurveyPhase::Pre ? pre : post;
        for (const auto& [k, v] : survey.items) target[k].push_back(v);
      }
    }
    st.ratings = summarize(ratings);
    for (const auto& [k, v] : pre) st.pre_items[k] = summarize(v);
    for (const auto& [k, v] : post) st.post_items[k] = summarize(v);
    return st;
  }

 private:
  struct Slot {
    mutable std::mutex mu;
    Session session;
    std::map<SurveyPhase, SurveyResponse> surveys;
  };

  std::string now() const { return utc_timestamp(clock_()); }

  std::shared_ptr<Slot> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionNotFoundError("no session '" + id + "'");
    return it->second;
  }

  std::vector<std::shared_ptr<Slot>> selected(const ExportFilter& filter) const {
    std::shared_lock lock(sessions_mu_);
    std::vector<std::shared_ptr<Slot>> out;
    for (const auto& id : order_) {
      const auto& slot = sessions_.at(id);
      if (filter.session_id && *filter.session_id != id) continue;
      if (filter.since && slot->session.created_at < *filter.since) continue;
      out.push_back(slot);
    }
    return out;
  }

  void load() {
    try {
      for (const auto& j : store_.read_all("sessions")) {
        auto slot = std::make_shared<Slot>();
        slot->session.session_id = j.at("session_id").get<std::string>();
        slot->session.profile = parse_profile(j.at("profile").get<std::string>());
        slot->session.question_id = j.at("question_id").get<std::string>();
        slot->session.created_at = j.at("created_at").get<std::string>();
        order_.push_back(slot->session.session_id);
        sessions_.emplace(slot->session.session_id, std::move(slot));
      }
      for (const auto& j : store_.read_all("exchanges")) {
        auto& s = sessions_.at(j.at("session_id").get<std::string>())->session;
        s.log.push_back(exchange_from_json(j));
      }
      for (const auto& j : store_.read_all("ratings")) {
        auto& s = sessions_.at(j.at("session_id").get<std::string>())->session;
        s.log.at(j.at("index").get<std::size_t>()).rating = j.at("score").get<int>();
      }
      for (const auto& j : store_.read_all("surveys")) {
        auto r = survey_from_json(j);
        auto& slot = *sessions_.at(r.session_id);
        if (r.phase == SurveyPhase::Post) slot.session.state = SessionState::Completed;
        slot.surveys.emplace(r.phase, std::move(r));
      }
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("store " + store_.dir().string() + " is inconsistent: " + ex.what());
    } catch (const std::out_of_range&) {
      throw ParseError("store " + store_.dir().string() + " references an unknown session or exchange");
    }
  }

  std::shared_ptr<const KnowledgeGraph> graph_;
  CompletionClient& client_;
  TutorConfig cfg_;
  Clock clock_;
  JsonlStore store_;
  std::map<std::pair<std::string, StudentProfile>, ExpertImpasse> impasses_;
  std::vector<std::string> band_questions_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::vector<std::string> order_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace aisensei
