// aisensei command-line tool.
//
//   aisensei experiment run --config cfg.json [--mode replay] [--out dir]
//   aisensei experiment report [--in dir] --format text|csv|json
//   aisensei kappa --ratings ratings.csv --method pairwise|fleiss
//   aisensei stats --ratings ratings.csv
//   aisensei graph --graph kg.json
//   aisensei cassette seed --config cfg.json --responses responses.json
//   aisensei serve --config service.json [--host 127.0.0.1] [--port 8080]
//
// Exit codes: 0 success, 2 configuration/input errors, 3 provider errors.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "aisensei/aisensei.hpp"

namespace {

using namespace aisensei;

constexpr int kExitConfig = 2;
constexpr int kExitProvider = 3;

GatewayConfig gateway_for(const ExperimentConfig& cfg, const std::string& mode_flag) {
  GatewayConfig base;
  base.mode = cfg.mode;
  base.model = cfg.model;
  base.provider_id = cfg.provider_id;
  base.cassette_dir = cfg.cassette_dir;
  GatewayConfig g = GatewayConfig::from_env(base);
  if (!mode_flag.empty()) g.mode = parse_gateway_mode(mode_flag);
  return g;
}

int cmd_experiment_run(const std::string& config_path, const std::string& mode, const std::string& out) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  GatewayConfig gcfg = gateway_for(cfg, mode);
  cfg.model = gcfg.model;
  cfg.cassette_dir = gcfg.cassette_dir;
  if (!out.empty()) cfg.output_dir = out;
  LlmGateway gateway(gcfg);
  ExperimentReport report = run_experiment(cfg, gateway);
  for (auto fmt : {ReportFormat::Json, ReportFormat::Text, ReportFormat::Csv}) {
    render_report(report, fmt, cfg.output_dir);
  }
  std::cout << render_report_text(report);
  std::cout << "report hash: " << report_hash(report) << "\n";
  std::cout << "score rows: " << report.score_rows() << ", gateway calls: " << report.artifacts.size()
            << ", written to " << cfg.output_dir.string() << "\n";
  return 0;
}

int cmd_experiment_report(const std::string& in_dir, const std::string& format, const std::string& out) {
  ExperimentReport report = load_report(std::filesystem::path(in_dir) / "report.json");
  const ReportFormat fmt = parse_report_format(format);
  if (!out.empty()) {
    for (const auto& p : render_report(report, fmt, out)) std::cout << p.string() << "\n";
    return 0;
  }
  switch (fmt) {
    case ReportFormat::Text: std::cout << render_report_text(report); break;
    case ReportFormat::Json: std::cout << to_json(report).dump(2) << "\n"; break;
    case ReportFormat::Csv: {
      bool first = true;
      for (const auto& t : render_report_csv(report)) {
        if (!first) std::cout << "\n";
        first = false;
        std::cout << "# table " << t.name << "\n" << t.csv;
      }
      break;
    }
  }
  return 0;
}

std::vector<RatingRecord> read_ratings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ratings file " + path);
  return parse_ratings_csv(in);
}

int cmd_kappa(const std::string& ratings_path, const std::string& method_name) {
  const auto method = parse_multi_rater_method(method_name);
  const auto records = read_ratings(ratings_path);
  std::cout << "band  raters  items  kappa (" << method_name << ")\n";
  for (auto band : kAllBands) {
    auto vectors = rater_vectors(records, band);
    if (vectors.empty()) continue;
    if (vectors.size() < 2) {
      std::cout << to_string(band) << "     " << vectors.size() << "       " << vectors.front().size()
                << "      n/a (one rater)\n";
      continue;
    }
    std::cout << to_string(band) << "     " << vectors.size() << "       " << vectors.front().size() << "      "
              << format_fixed(multi_rater_kappa(vectors, method)) << "\n";
  }
  return 0;
}

int cmd_stats(const std::string& ratings_path) {
  std::cout << render_rating_table(rating_stats(read_ratings(ratings_path)));
  return 0;
}

int cmd_graph(const std::string& path) {
  const KnowledgeGraph g = load_graph_file(path);
  std::cout << "id    band  title  (prerequisites)\n";
  for (const auto& id : g.topological_order()) {
    const auto& c = g.concept_at(id);
    std::cout << id << "  " << to_string(classify_difficulty(g, id)) << "     " << c.title << "  (";
    auto closure = prerequisite_closure(g, id);
    for (std::size_t i = 0; i < closure.size(); ++i) std::cout << (i ? ", " : "") << closure[i];
    std::cout << ")\n";
  }
  for (auto band : kAllBands) {
    std::cout << "band " << to_string(band) << " questions:";
    for (const auto& q : questions_for_band(g, band)) std::cout << " " << q.id;
    std::cout << "\n";
  }
  return 0;
}

int cmd_cassette_seed(const std::string& config_path, const std::string& responses_path,
                      const std::string& timestamp) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const auto responses = read_json_file(responses_path);
  for (const auto& r : record_fixture_cassettes(cfg, responses, timestamp)) {
    std::cout << r.key << (r.overwritten ? "  (overwritten)" : "") << "\n";
  }
  return 0;
}

TutorHttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::string& config_path, const std::string& host, int port) {
  const auto j = read_json_file(config_path);
  const auto base = std::filesystem::path(config_path).parent_path();
  auto resolve = [&](const std::string& p) {
    return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
  };

  TutorConfig tcfg;
  GatewayConfig gbase;
  std::shared_ptr<const KnowledgeGraph> graph;
  try {
    graph = std::make_shared<const KnowledgeGraph>(load_graph_file(resolve(j.at("graph").get<std::string>())));
    for (const auto& p : j.value("impasses", nlohmann::json::array())) {
      tcfg.impasses.push_back(parse_expert_impasse(read_json_file(resolve(p.get<std::string>()))));
    }
    tcfg.store_dir = resolve(j.value("store_dir", std::string("store")));
    tcfg.seed = j.value("seed", tcfg.seed);
    tcfg.temperature = j.value("temperature", tcfg.temperature);
    tcfg.max_tokens = j.value("max_tokens", tcfg.max_tokens);
    if (j.contains("refresher_template")) {
      std::ifstream in(resolve(j["refresher_template"].get<std::string>()));
      if (!in) throw ConfigError("cannot open refresher template");
      std::ostringstream ss;
      ss << in.rdbuf();
      tcfg.refresher_template = ss.str();
      tcfg.refresher_template_id = j.value("refresher_template_id", tcfg.refresher_template_id);
    }
    gbase.mode = parse_gateway_mode(j.value("mode", std::string("replay")));
    gbase.cassette_dir = resolve(j.value("cassette_dir", std::string("cassettes")));
    gbase.model = j.value("model", gbase.model);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed service config: ") + ex.what());
  }
  GatewayConfig gcfg = GatewayConfig::from_env(gbase);
  tcfg.model = gcfg.model;
  tcfg.provider_id = gcfg.provider_id;

  LlmGateway gateway(gcfg);
  TutorService service(graph, gateway, tcfg);
  TutorHttpServer server(service);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "aisensei tutor service listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph-guided LLM tutoring: experiment runner, metrics and tutor service"};
  app.require_subcommand(1);

  auto* experiment = app.add_subcommand("experiment", "Run or report the feedback-generation experiment");
  experiment->require_subcommand(1);

  std::string config, mode, out, in_dir = "out", format = "text";
  auto* run = experiment->add_subcommand("run", "Generate feedback for every (band, profile) cell and score it");
  run->add_option("--config", config, "Experiment config JSON")->required();
  run->add_option("--mode", mode, "LLM mode: live|replay|record (overrides LLM_MODE and the config)");
  run->add_option("--out", out, "Output directory (overrides the config)");

  auto* report = experiment->add_subcommand("report", "Render a previously written report.json");
  report->add_option("--in", in_dir, "Directory containing report.json")->capture_default_str();
  report->add_option("--format", format, "text|csv|json")->capture_default_str();
  report->add_option("--out", out, "Write files here instead of printing");

  std::string ratings, method = "pairwise";
  auto* kappa = app.add_subcommand("kappa", "Inter-rater agreement per difficulty band");
  kappa->add_option("--ratings", ratings, "CSV: rater_id,band,profile,metric,value")->required();
  kappa->add_option("--method", method, "pairwise|fleiss")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Mean/SD of expert ratings per band, profile and metric");
  stats->add_option("--ratings", ratings, "CSV: rater_id,band,profile,metric,value")->required();

  std::string graph_path;
  auto* graph = app.add_subcommand("graph", "Validate a graph document and show bands and closures");
  graph->add_option("--graph", graph_path, "Graph document JSON")->required();

  std::string responses, timestamp = "2024-01-01T00:00:00Z";
  auto* cassette = app.add_subcommand("cassette", "Cassette utilities");
  cassette->require_subcommand(1);
  auto* seed = cassette->add_subcommand("seed", "Write replay cassettes from hand-supplied responses");
  seed->add_option("--config", config, "Experiment config JSON")->required();
  seed->add_option("--responses", responses, "JSON object {\"A/S1\": text, ...}")->required();
  seed->add_option("--timestamp", timestamp, "Timestamp stored in the cassettes")->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the tutoring HTTP service");
  serve->add_option("--config", config, "Service config JSON")->required();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_experiment_run(config, mode, out);
    if (report->parsed()) return cmd_experiment_report(in_dir, format, out);
    if (kappa->parsed()) return cmd_kappa(ratings, method);
    if (stats->parsed()) return cmd_stats(ratings);
    if (graph->parsed()) return cmd_graph(graph_path);
    if (seed->parsed()) return cmd_cassette_seed(config, responses, timestamp);
    if (serve->parsed()) return cmd_serve(config, host, port);
  } catch (const ProviderError& e) {
    std::cerr << "provider error [" << e.code() << "]: " << e.what() << "\n";
    return kExitProvider;
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.code() << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
