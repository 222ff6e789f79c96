#pragma once

// Feedback-generation experiment: one question per difficulty band, one P1
// prompt per (band, profile) sent exactly once, then ROUGE tables comparing
// the standard solution against each profile's feedback and the profiles'
// feedback against each other.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aisensei/error.hpp"
#include "aisensei/eval_metrics.hpp"
#include "aisensei/hash.hpp"
#include "aisensei/kgraph.hpp"
#include "aisensei/llm_gateway.hpp"
#include "aisensei/prompt.hpp"
#include "aisensei/student_model.hpp"

namespace aisensei {

namespace fs = std::filesystem;

struct ExperimentConfig {
  fs::path graph_path;
  std::vector<fs::path> impasse_files;
  MasteryThresholds thresholds;
  double temperature = 0.2;
  int max_tokens = 1024;
  std::string provider_id = "openai";
  std::string model = "gpt-4";
  GatewayMode mode = GatewayMode::Replay;
  fs::path cassette_dir;
  fs::path output_dir = "out";
  std::map<DifficultyBand, std::string> question_overrides;
  bool tiered = false;
  PromptOptions prompt_options;

  // The fields that determine the generated prompts and scores. Paths are
  // kept as written in the config file; output_dir is left out so reports
  // written to different directories hash the same.
  nlohmann::json snapshot;
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  ExperimentConfig cfg;
  try {
    cfg.graph_path = resolve(j.at("graph").get<std::string>());
    for (const auto& p : j.at("impasses")) cfg.impasse_files.push_back(resolve(p.get<std::string>()));
    if (j.contains("thresholds")) {
      cfg.thresholds.good_min = j["thresholds"].value("good_min", cfg.thresholds.good_min);
      cfg.thresholds.avg_min = j["thresholds"].value("avg_min", cfg.thresholds.avg_min);
    }
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
    cfg.provider_id = j.value("provider", cfg.provider_id);
    cfg.model = j.value("model", cfg.model);
    cfg.mode = parse_gateway_mode(j.value("mode", std::string("replay")));
    cfg.cassette_dir = resolve(j.value("cassette_dir", std::string("cassettes")));
    cfg.output_dir = resolve(j.value("output_dir", std::string("out")));
    if (j.contains("questions")) {
      for (const auto& [band, qid] : j["questions"].items()) {
        cfg.question_overrides[parse_band(band)] = qid.get<std::string>();
      }
    }
    cfg.tiered = j.value("tiered", false);
    cfg.prompt_options.normalize_impasse_colon = j.value("normalize_impasse_colon", false);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed experiment config: ") + ex.what());
  }
  if (cfg.thresholds.avg_min >= cfg.thresholds.good_min) throw ThresholdError("avg_min must be below good_min");
  cfg.snapshot = j;
  cfg.snapshot.erase("output_dir");
  cfg.snapshot.erase("mode");
  cfg.snapshot["temperature"] = cfg.temperature;
  cfg.snapshot["max_tokens"] = cfg.max_tokens;
  cfg.snapshot["model"] = cfg.model;
  cfg.snapshot["provider"] = cfg.provider_id;
  cfg.snapshot["tiered"] = cfg.tiered;
  cfg.snapshot["thresholds"] = {{"good_min", cfg.thresholds.good_min}, {"avg_min", cfg.thresholds.avg_min}};
  return cfg;
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment_config(read_json_file(path), path.parent_path());
}

struct ExperimentCell {
  DifficultyBand band;
  StudentProfile profile;
  ImpasseRecord impasse;
  CompletionRequest request;
};

struct ExperimentPlan {
  KnowledgeGraph graph;
  std::map<DifficultyBand, Question> questions;
  std::vector<ExperimentCell> cells;  // band-major, then S1, S2, S3
};

inline std::string cell_name(DifficultyBand b, StudentProfile p) {
  return "(" + std::string(to_string(b)) + "," + std::string(to_string(p)) + ")";
}

// Loads the graph and impasses and renders every prompt, without calling
// any provider.
inline ExperimentPlan plan_experiment(const ExperimentConfig& cfg) {
  ExperimentPlan plan;
  plan.graph = load_graph_file(cfg.graph_path);

  for (auto band : kAllBands) {
    auto it = cfg.question_overrides.find(band);
    if (it != cfg.question_overrides.end()) {
      if (!plan.graph.questions().contains(it->second)) {
        throw ConfigError("question override '" + it->second + "' is not in the graph");
      }
      const Question& q = plan.graph.question_at(it->second);
      if (q.difficulty != band) {
        throw ConfigError("question '" + q.id + "' is band " + std::string(to_string(q.difficulty)) +
                          ", not " + std::string(to_string(band)));
      }
      plan.questions.emplace(band, q);
      continue;
    }
    auto candidates = questions_for_band(plan.graph, band);
    if (candidates.empty()) {
      throw ConfigError("graph has no band " + std::string(to_string(band)) + " question");
    }
    auto lowest = std::min_element(candidates.begin(), candidates.end(),
                                   [](const Question& a, const Question& b) { return a.id < b.id; });
    plan.questions.emplace(band, *lowest);
  }

  std::map<std::pair<std::string, StudentProfile>, ExpertImpasse> impasses;
  for (const auto& path : cfg.impasse_files) {
    auto e = parse_expert_impasse(read_json_file(path));
    auto key = std::make_pair(e.question_id, e.profile);
    if (!impasses.emplace(key, std::move(e)).second) {
      throw ConfigError("duplicate impasse for question '" + key.first + "' profile " +
                        std::string(to_string(key.second)));
    }
  }

  for (auto band : kAllBands) {
    const Question& q = plan.questions.at(band);
    for (auto profile : kAllProfiles) {
      auto it = impasses.find({q.id, profile});
      if (it == impasses.end()) {
        throw MissingImpasseError("no impasse for cell " + cell_name(band, profile) + " (question '" +
                                  q.id + "')");
      }
      ImpasseRecord impasse = resolve_impasse(it->second, plan.graph);
      PromptRequest req{q.text, q.standard_solution, impasse.impasse_text, {}, std::nullopt};
      for (const auto& r : impasse.ranked_prerequisites) req.ranked_prerequisites.push_back(r.title);
      if (cfg.tiered) req.tier = profile_tier(profile);
      CompletionRequest creq{render_p1(req, cfg.prompt_options), cfg.temperature, cfg.max_tokens,
                             cfg.provider_id, cfg.model};
      plan.cells.push_back({band, profile, std::move(impasse), std::move(creq)});
    }
  }
  return plan;
}

struct BandResult {
  DifficultyBand band = DifficultyBand::A;
  std::string question_id;
  std::string concept_id;
  std::vector<PairScore> standard_vs_profile;  // S vs S1, S vs S2, S vs S3
  std::vector<PairScore> pairwise;             // S1 vs S2, S1 vs S3, S2 vs S3
  std::map<std::string, std::string> cassette_keys;  // profile label -> key
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<BandResult> bands;
  std::vector<FeedbackArtifact> artifacts;

  std::size_t score_rows() const {
    std::size_t n = 0;
    for (const auto& b : bands) n += b.standard_vs_profile.size() + b.pairwise.size();
    return n;
  }
};

inline ExperimentReport run_experiment(const ExperimentConfig& cfg, CompletionClient& client) {
  const ExperimentPlan plan = plan_experiment(cfg);
  ExperimentReport report;
  report.config = cfg.snapshot;

  std::map<std::pair<DifficultyBand, StudentProfile>, const FeedbackArtifact*> by_cell;
  report.artifacts.reserve(plan.cells.size());
  for (const auto& cell : plan.cells) {
    report.artifacts.push_back(client.complete(cell.request));
  }
  for (std::size_t i = 0; i < plan.cells.size(); ++i) {
    by_cell[{plan.cells[i].band, plan.cells[i].profile}] = &report.artifacts[i];
  }

  for (auto band : kAllBands) {
    const Question& q = plan.questions.at(band);
    BandResult br;
    br.band = band;
    br.question_id = q.id;
    br.concept_id = q.concept_id;
    std::vector<LabeledText> texts{{"S", q.standard_solution}};
    for (auto p : kAllProfiles) {
      const FeedbackArtifact* a = by_cell.at({band, p});
      texts.push_back({std::string(to_string(p)), a->response_text});
      br.cassette_keys[std::string(to_string(p))] = a->cassette_key;
    }
    br.standard_vs_profile = pairwise_matrix(texts, {default_rouge_metrics(), true});
    texts.erase(texts.begin());
    br.pairwise = pairwise_matrix(texts, {default_rouge_metrics(), false});
    report.bands.push_back(std::move(br));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const PairScore& r, const BandResult& band) {
  auto key_of = [&](const std::string& label) -> nlohmann::json {
    auto it = band.cassette_keys.find(label);
    return it == band.cassette_keys.end() ? nlohmann::json(nullptr) : nlohmann::json(it->second);
  };
  return {{"reference", r.reference_label},
          {"candidate", r.candidate_label},
          {"metric", r.metric},
          {"recall", r.score.recall},
          {"precision", r.score.precision},
          {"f_score", r.score.f_score},
          {"reference_cassette", key_of(r.reference_label)},
          {"candidate_cassette", key_of(r.candidate_label)}};
}

inline PairScore pair_score_from_json(const nlohmann::json& j) {
  return {j.at("reference").get<std::string>(), j.at("candidate").get<std::string>(),
          j.at("metric").get<std::string>(),
          {j.at("recall").get<double>(), j.at("precision").get<double>(), j.at("f_score").get<double>()}};
}

inline nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : report.bands) {
    nlohmann::json sv = nlohmann::json::array(), pw = nlohmann::json::array();
    for (const auto& r : b.standard_vs_profile) sv.push_back(to_json(r, b));
    for (const auto& r : b.pairwise) pw.push_back(to_json(r, b));
    bands.push_back({{"band", to_string(b.band)},
                     {"question_id", b.question_id},
                     {"concept_id", b.concept_id},
                     {"cassette_keys", b.cassette_keys},
                     {"standard_vs_profile", sv},
                     {"pairwise", pw}});
  }
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : report.artifacts) artifacts.push_back(to_json(a));
  return {{"config", report.config}, {"bands", bands}, {"artifacts", artifacts}};
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.config = j.at("config");
    for (const auto& b : j.at("bands")) {
      BandResult br;
      br.band = parse_band(b.at("band").get<std::string>());
      br.question_id = b.at("question_id").get<std::string>();
      br.concept_id = b.at("concept_id").get<std::string>();
      br.cassette_keys = b.at("cassette_keys").get<std::map<std::string, std::string>>();
      for (const auto& row : b.at("standard_vs_profile")) br.standard_vs_profile.push_back(pair_score_from_json(row));
      for (const auto& row : b.at("pairwise")) br.pairwise.push_back(pair_score_from_json(row));
      r.bands.push_back(std::move(br));
    }
    for (const auto& a : j.at("artifacts")) r.artifacts.push_back(artifact_from_json(a));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed experiment report: ") + ex.what());
  }
  return r;
}

inline std::string report_hash(const ExperimentReport& report) { return sha256_hex(to_json(report).dump()); }

inline std::string_view band_word(DifficultyBand b) {
  switch (b) {
    case DifficultyBand::A: return "easy";
    case DifficultyBand::B: return "moderate";
    case DifficultyBand::C: return "hard";
  }
  return "";
}

// Six tables in band order, each standard-vs-feedback then pairwise.
inline std::string render_report_text(const ExperimentReport& report) {
  std::ostringstream out;
  for (const auto& b : report.bands) {
    out << "Band " << to_string(b.band) << " (" << band_word(b.band) << ", question " << b.question_id
        << "): standard solution (S) vs feedback\n";
    out << "pair     metric   recall  precision  f-score\n";
    out << render_score_table(b.standard_vs_profile) << "\n";
    out << "Band " << to_string(b.band) << " (" << band_word(b.band) << ", question " << b.question_id
        << "): feedback vs feedback\n";
    out << "pair      metric   recall  precision  f-score\n";
    out << render_score_table(b.pairwise) << "\n";
  }
  return out.str();
}

struct CsvTable {
  std::string name;  // e.g. "A-standard"
  std::string csv;
};

inline std::vector<CsvTable> render_report_csv(const ExperimentReport& report) {
  std::vector<CsvTable> out;
  for (const auto& b : report.bands) {
    const std::string band(to_string(b.band));
    out.push_back({band + "-standard", render_score_csv(b.standard_vs_profile)});
    out.push_back({band + "-pairwise", render_score_csv(b.pairwise)});
  }
  return out;
}

enum class ReportFormat { Text, Csv, Json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw ConfigError("unknown report format '" + std::string(s) + "' (expected text|csv|json)");
}

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << content) || !f.flush()) throw IoError("cannot write " + path.string());
}

// Returns the files written: report.txt, report.json, or one
// table-<band>-<kind>.csv per table.
inline std::vector<fs::path> render_report(const ExperimentReport& report, ReportFormat format,
                                           const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  switch (format) {
    case ReportFormat::Text:
      written.push_back(dir / "report.txt");
      write_file(written.back(), render_report_text(report));
      break;
    case ReportFormat::Json:
      written.push_back(dir / "report.json");
      write_file(written.back(), to_json(report).dump(2) + "\n");
      break;
    case ReportFormat::Csv:
      for (const auto& t : render_report_csv(report)) {
        written.push_back(dir / ("table-" + t.name + ".csv"));
        write_file(written.back(), t.csv);
      }
      break;
  }
  return written;
}

inline ExperimentReport load_report(const fs::path& path) { return report_from_json(read_json_file(path)); }

// Writes one cassette per cell from hand-supplied responses keyed "A/S1".
// Used to build offline fixtures; the prompts are rendered exactly as a live
// run would render them.
inline std::vector<RecordResult> record_fixture_cassettes(const ExperimentConfig& cfg,
                                                          const nlohmann::json& responses,
                                                          const std::string& timestamp) {
  const ExperimentPlan plan = plan_experiment(cfg);
  std::vector<RecordResult> out;
  for (const auto& cell : plan.cells) {
    const std::string key = std::string(to_string(cell.band)) + "/" + std::string(to_string(cell.profile));
    if (!responses.contains(key)) throw ConfigError("no fixture response for cell " + key);
    FeedbackArtifact a;
    a.request = cell.request;
    a.response_text = responses.at(key).get<std::string>();
    a.timestamp = timestamp;
    a.cassette_key = cassette_key(a.request);
    out.push_back(record_cassette(a, cfg.cassette_dir));
  }
  return out;
}

}  // namespace aisensei
