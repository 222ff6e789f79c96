#pragma once

// Chat-completion client with cassette record/replay.
//
// Live mode makes one HTTP round-trip per request (retrying only transport
// failures, 429 and 5xx). Replay mode serves responses from cassette files
// keyed by prompt fingerprint, model and temperature, and never touches the
// transport. Record mode is live mode that also writes a cassette.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

#include "aisensei/error.hpp"
#include "aisensei/hash.hpp"
#include "aisensei/prompt.hpp"

namespace aisensei {

struct CompletionRequest {
  RenderedPrompt prompt;
  double temperature = 0.2;
  int max_tokens = 1024;
  std::string provider_id = "openai";
  std::string model_id = "gpt-4";
};

struct FeedbackArtifact {
  CompletionRequest request;
  std::string response_text;
  std::int64_t latency_ms = 0;
  std::string timestamp;  // ISO-8601 UTC
  std::string cassette_key;
};

inline void validate(const CompletionRequest& req) {
  if (!(req.temperature >= 0.0 && req.temperature <= 2.0)) {
    throw RangeError("temperature must lie in [0, 2]");
  }
  if (req.max_tokens <= 0) throw RangeError("max_tokens must be positive");
  if (req.prompt.text.empty()) throw EmptyFieldError("prompt text is empty");
}

inline std::string format_temperature(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", t);
  return buf;
}

inline std::string cassette_key(std::string_view prompt_fingerprint, std::string_view model_id,
                                double temperature) {
  std::string material(prompt_fingerprint);
  material += '|';
  material += model_id;
  material += '|';
  material += format_temperature(temperature);
  return sha256_hex(material);
}

inline std::string cassette_key(const CompletionRequest& req) {
  return cassette_key(req.prompt.fingerprint, req.model_id, req.temperature);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Wire body: {model, messages: [{role: "user", content}], temperature, max_tokens}.
inline nlohmann::json chat_request_body(const CompletionRequest& req) {
  return {{"model", req.model_id},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt.text}}})},
          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens}};
}

// ---------------------------------------------------------------------------
// Transport

struct HttpResponse {
  int status = 0;  // 0: no response (connection failure, timeout)
  std::string body;
  std::optional<double> retry_after_s;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& bearer_token,
                                 const std::string& body) = 0;
};

class HttpTransport : public Transport {
 public:
  // base_url such as "https://api.openai.com/v1"; the path prefix is kept.
  explicit HttpTransport(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = base_url.find('/', host_start);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  HttpResponse post_json(const std::string& path, const std::string& bearer_token,
                         const std::string& body) override {
    httplib::Client cli(origin_);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(180);
    httplib::Headers headers{{"Authorization", "Bearer " + bearer_token}};
    auto res = cli.Post(prefix_ + path, headers, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      char* end = nullptr;
      const std::string v = res->get_header_value("Retry-After");
      double s = std::strtod(v.c_str(), &end);
      if (end != v.c_str() && s >= 0) out.retry_after_s = s;
    }
    return out;
  }

 private:
  std::string origin_;
  std::string prefix_;
};

// Token bucket shared by all callers of one gateway. A non-positive rate
// disables limiting.
class RateLimiter {
 public:
  RateLimiter(double tokens_per_second = 0.0, double burst = 1.0)
      : rate_(tokens_per_second), burst_(std::max(1.0, burst)), tokens_(burst_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

// ---------------------------------------------------------------------------
// Cassettes

struct RecordResult {
  std::string key;
  std::filesystem::path path;
  bool overwritten = false;
};

inline nlohmann::json to_json(const FeedbackArtifact& a) {
  return {{"cassette_key", a.cassette_key},
          {"provider_id", a.request.provider_id},
          {"model_id", a.request.model_id},
          {"temperature", a.request.temperature},
          {"max_tokens", a.request.max_tokens},
          {"template_id", a.request.prompt.template_id},
          {"prompt_fingerprint", a.request.prompt.fingerprint},
          {"prompt", a.request.prompt.text},
          {"response_text", a.response_text},
          {"latency_ms", a.latency_ms},
          {"timestamp", a.timestamp}};
}

inline FeedbackArtifact artifact_from_json(const nlohmann::json& j) {
  try {
    FeedbackArtifact a;
    a.cassette_key = j.at("cassette_key").get<std::string>();
    a.request.provider_id = j.at("provider_id").get<std::string>();
    a.request.model_id = j.at("model_id").get<std::string>();
    a.request.temperature = j.at("temperature").get<double>();
    a.request.max_tokens = j.at("max_tokens").get<int>();
    a.request.prompt.template_id = j.at("template_id").get<std::string>();
    a.request.prompt.fingerprint = j.at("prompt_fingerprint").get<std::string>();
    a.request.prompt.text = j.at("prompt").get<std::string>();
    a.response_text = j.at("response_text").get<std::string>();
    a.latency_ms = j.at("latency_ms").get<std::int64_t>();
    a.timestamp = j.at("timestamp").get<std::string>();
    return a;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed cassette: ") + ex.what());
  }
}

// Writes <dir>/<key>.json. Re-recording an existing key overwrites it and
// prints a warning.
inline RecordResult record_cassette(const FeedbackArtifact& artifact, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  RecordResult out;
  out.key = cassette_key(artifact.request);
  out.path = dir / (out.key + ".json");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create cassette directory " + dir.string() + ": " + ec.message());
  out.overwritten = fs::exists(out.path, ec);
  FeedbackArtifact stored = artifact;
  stored.cassette_key = out.key;
  const std::string tmp = out.path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write cassette " + tmp);
    f << to_json(stored).dump(2) << '\n';
    if (!f.flush()) throw IoError("cannot write cassette " + tmp);
  }
  fs::rename(tmp, out.path, ec);
  if (ec) throw IoError("cannot write cassette " + out.path.string() + ": " + ec.message());
  if (out.overwritten) {
    std::cerr << "warning: cassette " << out.key << " re-recorded, previous response replaced\n";
  }
  return out;
}

inline std::optional<FeedbackArtifact> load_cassette(const std::filesystem::path& dir,
                                                     const std::string& key) {
  std::ifstream f(dir / (key + ".json"), std::ios::binary);
  if (!f) return std::nullopt;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("malformed cassette " + key + ": " + ex.what());
  }
  return artifact_from_json(j);
}

// ---------------------------------------------------------------------------
// Gateway

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual FeedbackArtifact complete(const CompletionRequest& req) = 0;
};

enum class GatewayMode { Live, Replay, Record };

inline GatewayMode parse_gateway_mode(std::string_view s) {
  if (s == "live") return GatewayMode::Live;
  if (s == "replay") return GatewayMode::Replay;
  if (s == "record") return GatewayMode::Record;
  throw ConfigError("unknown LLM mode '" + std::string(s) + "' (expected live|replay|record)");
}

struct GatewayConfig {
  GatewayMode mode = GatewayMode::Replay;
  std::string api_key;
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string provider_id = "openai";
  std::filesystem::path cassette_dir = "cassettes";
  int max_retries = 3;
  double requests_per_second = 0.0;

  // LLM_API_KEY, LLM_BASE_URL, LLM_MODEL, LLM_MODE, LLM_CASSETTE_DIR.
  static GatewayConfig from_env() { return from_env(GatewayConfig{}); }
  static GatewayConfig from_env(GatewayConfig base) {
    auto env = [](const char* name) -> std::optional<std::string> {
      const char* v = std::getenv(name);
      if (!v || !*v) return std::nullopt;
      return std::string(v);
    };
    if (auto v = env("LLM_API_KEY")) base.api_key = *v;
    if (auto v = env("LLM_BASE_URL")) base.base_url = *v;
    if (auto v = env("LLM_MODEL")) base.model = *v;
    if (auto v = env("LLM_MODE")) base.mode = parse_gateway_mode(*v);
    if (auto v = env("LLM_CASSETTE_DIR")) base.cassette_dir = *v;
    return base;
  }
};

class LlmGateway : public CompletionClient {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  explicit LlmGateway(GatewayConfig cfg, std::shared_ptr<Transport> transport = nullptr,
                      Sleeper sleeper = nullptr, Clock clock = nullptr)
      : cfg_(std::move(cfg)),
        transport_(std::move(transport)),
        sleeper_(sleeper ? std::move(sleeper)
                         : Sleeper([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); })),
        clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })),
        limiter_(cfg_.requests_per_second, 1.0) {
    if (cfg_.mode != GatewayMode::Replay && !transport_) {
      transport_ = std::make_shared<HttpTransport>(cfg_.base_url);
    }
  }

  const GatewayConfig& config() const { return cfg_; }

  // Fills provider/model from the gateway config.
  CompletionRequest make_request(RenderedPrompt prompt, double temperature = 0.2,
                                 int max_tokens = 1024) const {
    return {std::move(prompt), temperature, max_tokens, cfg_.provider_id, cfg_.model};
  }

  FeedbackArtifact complete(const CompletionRequest& req) override {
    validate(req);
    if (cfg_.mode == GatewayMode::Replay) return replay(req);
    auto artifact = live(req);
    if (cfg_.mode == GatewayMode::Record) record_cassette(artifact, cfg_.cassette_dir);
    return artifact;
  }

  std::size_t cassette_lookups() const { return lookups_.load(); }
  std::size_t network_calls() const { return network_calls_.load(); }

 private:
  FeedbackArtifact replay(const CompletionRequest& req) {
    ++lookups_;
    const std::string key = cassette_key(req);
    auto stored = load_cassette(cfg_.cassette_dir, key);
    if (!stored) {
      throw CassetteMissError("no cassette " + key + " in " + cfg_.cassette_dir.string() +
                              " (prompt " + req.prompt.fingerprint.substr(0, 12) + ")");
    }
    FeedbackArtifact out;
    out.request = req;
    out.response_text = std::move(stored->response_text);
    out.latency_ms = stored->latency_ms;
    out.timestamp = std::move(stored->timestamp);
    out.cassette_key = key;
    if (out.response_text.empty()) throw ProviderError("cassette " + key + " has an empty response");
    return out;
  }

  FeedbackArtifact live(const CompletionRequest& req) {
    if (cfg_.api_key.empty()) throw AuthError("LLM_API_KEY is not set");
    const std::string body = chat_request_body(req).dump();
    for (int attempt = 0;; ++attempt) {
      limiter_.acquire();
      const auto t0 = std::chrono::steady_clock::now();
      ++network_calls_;
      HttpResponse res = transport_->post_json("/chat/completions", cfg_.api_key, body);
      const auto elapsed = std::chrono::steady_clock::now() - t0;

      if (res.status == 200) {
        std::string text;
        try {
          auto j = nlohmann::json::parse(res.body);
          text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& ex) {
          throw ProviderError(std::string("unexpected completion payload: ") + ex.what());
        }
        if (text.empty()) throw ProviderError("provider returned an empty completion");
        FeedbackArtifact out;
        out.request = req;
        out.response_text = std::move(text);
        out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        out.timestamp = utc_timestamp(clock_());
        out.cassette_key = cassette_key(req);
        return out;
      }
      if (res.status == 401 || res.status == 403) {
        throw AuthError("provider rejected credentials (HTTP " + std::to_string(res.status) + ")");
      }
      const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
      if (!retryable || attempt >= cfg_.max_retries) {
        std::string what = res.status == 0 ? "transport failure: " + res.error
                                            : "HTTP " + std::to_string(res.status);
        throw ProviderError("completion failed after " + std::to_string(attempt + 1) +
                            " attempt(s): " + what);
      }
      const double wait = res.retry_after_s.value_or(std::pow(2.0, attempt));
      sleeper_(std::chrono::duration<double>(wait));
    }
  }

  GatewayConfig cfg_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  Clock clock_;
  RateLimiter limiter_;
  std::atomic<std::size_t> lookups_{0};
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace aisensei
