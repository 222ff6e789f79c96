#include "aisensei/experiment.hpp"

#include <gtest/gtest.h>

#include <regex>

#include "test_support.hpp"

namespace {

using namespace aisensei;
using aisensei::testing::PanickingTransport;
using aisensei::testing::TempDir;

const fs::path kData = AISENSEI_DATA_DIR;

ExperimentConfig shipped_config() { return load_experiment_config(kData / "experiment.json"); }

// Answers every prompt with a fixed function of the call index.
class FakeClient : public CompletionClient {
 public:
  explicit FakeClient(std::function<std::string(const CompletionRequest&, std::size_t)> reply)
      : reply_(std::move(reply)) {}
  FeedbackArtifact complete(const CompletionRequest& req) override {
    requests.push_back(req);
    FeedbackArtifact a;
    a.request = req;
    a.response_text = reply_(req, requests.size() - 1);
    a.cassette_key = cassette_key(req);
    a.timestamp = "2024-01-01T00:00:00Z";
    return a;
  }
  std::vector<CompletionRequest> requests;

 private:
  std::function<std::string(const CompletionRequest&, std::size_t)> reply_;
};

TEST(Config, ShippedConfigResolvesRelativePaths) {
  auto cfg = shipped_config();
  EXPECT_EQ(cfg.graph_path, kData / "algebra2.kg.json");
  EXPECT_EQ(cfg.impasse_files.size(), 9u);
  EXPECT_EQ(cfg.cassette_dir, kData / "cassettes");
  EXPECT_DOUBLE_EQ(cfg.temperature, 0.2);
  EXPECT_EQ(cfg.model, "gpt-4");
  EXPECT_FALSE(cfg.snapshot.contains("output_dir"));
  EXPECT_FALSE(cfg.snapshot.contains("mode"));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"impasses":[]})"), "."), ParseError);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"graph":"g","impasses":[],"mode":"x"})"), "."),
               ConfigError);
  EXPECT_THROW(
      parse_experiment_config(
          nlohmann::json::parse(R"({"graph":"g","impasses":[],"thresholds":{"good_min":0.4,"avg_min":0.5}})"), "."),
      ThresholdError);
  EXPECT_THROW(load_experiment_config("/nonexistent/cfg.json"), ConfigError);
}

TEST(Plan, OnePromptPerCell) {
  auto plan = plan_experiment(shipped_config());
  ASSERT_EQ(plan.cells.size(), 9u);
  EXPECT_EQ(plan.questions.at(DifficultyBand::A).id, "q-1-2-01");
  EXPECT_EQ(plan.questions.at(DifficultyBand::B).id, "q-1-3-01");
  EXPECT_EQ(plan.questions.at(DifficultyBand::C).id, "q-3-2-01");
  std::set<std::string> fingerprints;
  for (const auto& c : plan.cells) {
    fingerprints.insert(c.request.prompt.fingerprint);
    EXPECT_EQ(c.request.prompt.template_id, "P1");
    EXPECT_DOUBLE_EQ(c.request.temperature, 0.2);
    EXPECT_TRUE(c.request.prompt.text.starts_with("Solve this question: "));
    EXPECT_TRUE(c.request.prompt.text.ends_with("?"));
  }
  EXPECT_EQ(fingerprints.size(), 9u);
  // (C,S2) carries the expert ranking in order.
  EXPECT_TRUE(plan.cells[7].request.prompt.text.ends_with(
      "This impasse exists because: Solving Equations, Linear Equations, Graphing Systems of Equations?"));
}

TEST(Plan, TieredPromptsCarryDirective) {
  auto cfg = shipped_config();
  cfg.tiered = true;
  auto plan = plan_experiment(cfg);
  EXPECT_TRUE(plan.cells[0].request.prompt.text.ends_with(" Provide an in-depth explanation of the prerequisites."));
  EXPECT_TRUE(plan.cells[2].request.prompt.text.ends_with(" Provide advanced assistance."));
  EXPECT_EQ(plan.cells[1].request.prompt.template_id, "P1+tier");
}

TEST(Plan, MissingCellNamed) {
  auto cfg = shipped_config();
  cfg.impasse_files.pop_back();  // C-S3
  try {
    plan_experiment(cfg);
    FAIL();
  } catch (const MissingImpasseError& e) {
    EXPECT_NE(std::string(e.what()).find("(C,S3)"), std::string::npos);
  }
}

TEST(Plan, QuestionOverrides) {
  auto cfg = shipped_config();
  cfg.question_overrides[DifficultyBand::A] = "q-3-2-01";
  EXPECT_THROW(plan_experiment(cfg), ConfigError);
  cfg.question_overrides[DifficultyBand::A] = "q-none";
  EXPECT_THROW(plan_experiment(cfg), ConfigError);
  cfg.question_overrides[DifficultyBand::A] = "q-1-2-01";
  EXPECT_NO_THROW(plan_experiment(cfg));
}

TEST(Run, NineCallsFiftyFourRows) {
  FakeClient client([](const CompletionRequest&, std::size_t i) { return "feedback number " + std::to_string(i); });
  auto report = run_experiment(shipped_config(), client);
  EXPECT_EQ(client.requests.size(), 9u);
  EXPECT_EQ(report.artifacts.size(), 9u);
  ASSERT_EQ(report.bands.size(), 3u);
  EXPECT_EQ(report.score_rows(), 54u);
  for (const auto& b : report.bands) {
    ASSERT_EQ(b.standard_vs_profile.size(), 9u);
    ASSERT_EQ(b.pairwise.size(), 9u);
    EXPECT_EQ(b.standard_vs_profile[0].pair_label(), "S vs S1");
    EXPECT_EQ(b.pairwise[8].pair_label(), "S2 vs S3");
  }
}

TEST(Run, IdenticalFeedbackScoresOne) {
  FakeClient client([](const CompletionRequest&, std::size_t) { return "the same feedback for everyone"; });
  auto report = run_experiment(shipped_config(), client);
  for (const auto& b : report.bands) {
    for (const auto& r : b.pairwise) {
      EXPECT_EQ(r.score.recall, 1.0);
      EXPECT_EQ(r.score.precision, 1.0);
      EXPECT_EQ(r.score.f_score, 1.0);
    }
  }
}

TEST(Run, StandardScoresMatchDirectRouge) {
  FakeClient client([](const CompletionRequest& r, std::size_t) { return r.prompt.text; });
  auto cfg = shipped_config();
  auto report = run_experiment(cfg, client);
  auto plan = plan_experiment(cfg);
  const auto& b = report.bands[0];
  auto want = rouge_l(tokenize(plan.questions.at(DifficultyBand::A).standard_solution),
                      tokenize(plan.cells[0].request.prompt.text));
  EXPECT_EQ(b.standard_vs_profile[2].metric, "rouge-l");
  EXPECT_DOUBLE_EQ(b.standard_vs_profile[2].score.f_score, want.f_score);
}

TEST(Run, ShippedCassettesReplayOffline) {
  auto cfg = shipped_config();
  GatewayConfig g;
  g.cassette_dir = cfg.cassette_dir;
  LlmGateway gw(g, std::make_shared<PanickingTransport>());
  auto first = run_experiment(cfg, gw);
  auto second = run_experiment(cfg, gw);
  EXPECT_EQ(gw.cassette_lookups(), 18u);
  EXPECT_EQ(gw.network_calls(), 0u);
  EXPECT_EQ(report_hash(first), report_hash(second));
}

TEST(Report, JsonRoundTrip) {
  FakeClient client([](const CompletionRequest&, std::size_t i) { return "text " + std::to_string(i % 4); });
  auto report = run_experiment(shipped_config(), client);
  auto back = report_from_json(to_json(report));
  EXPECT_EQ(report_hash(back), report_hash(report));
  auto j = to_json(report);
  const auto& row = j["bands"][1]["pairwise"][0];
  EXPECT_EQ(row["reference_cassette"], report.bands[1].cassette_keys.at("S1"));
  EXPECT_EQ(row["candidate_cassette"], report.bands[1].cassette_keys.at("S2"));
  EXPECT_TRUE(j["bands"][0]["standard_vs_profile"][0]["reference_cassette"].is_null());
  EXPECT_THROW(report_from_json(nlohmann::json::parse("{}")), ParseError);
}

TEST(Report, Rendering) {
  FakeClient client([](const CompletionRequest&, std::size_t i) { return "answer " + std::to_string(i); });
  auto report = run_experiment(shipped_config(), client);
  const auto text = render_report_text(report);
  std::regex row(R"(^S\d? vs S\d\s+rouge-[12l]\s+\d\.\d\d  \d\.\d\d  \d\.\d\d$)");
  std::istringstream in(text);
  std::string line;
  int rows = 0, titles = 0;
  while (std::getline(in, line)) {
    if (std::regex_match(line, row)) ++rows;
    if (line.starts_with("Band ")) ++titles;
  }
  EXPECT_EQ(rows, 54);
  EXPECT_EQ(titles, 6);

  auto tables = render_report_csv(report);
  ASSERT_EQ(tables.size(), 6u);
  EXPECT_EQ(tables[0].name, "A-standard");
  for (const auto& t : tables) EXPECT_TRUE(t.csv.starts_with("pair,metric,recall,precision,f_score\n"));

  TempDir dir;
  EXPECT_EQ(render_report(report, ReportFormat::Csv, dir.path()).size(), 6u);
  auto json_files = render_report(report, ReportFormat::Json, dir.path());
  EXPECT_EQ(report_hash(load_report(json_files.at(0))), report_hash(report));
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
}

TEST(FixtureCassettes, MissingResponse) {
  TempDir dir;
  auto cfg = shipped_config();
  cfg.cassette_dir = dir.path();
  EXPECT_THROW(record_fixture_cassettes(cfg, nlohmann::json::object({{"A/S1", "x"}}), "t"), ConfigError);
}

}  // namespace
