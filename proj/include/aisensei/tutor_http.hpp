#pragma once

// HTTP JSON front end for TutorService.
//
//   POST /sessions                               {profile?}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/question
//   POST /sessions/{id}/guidance                 {mode, input?}
//   POST /sessions/{id}/exchanges/{idx}/rating   {score}
//   POST /sessions/{id}/surveys/{pre|post}       {items, free_text?}
//   GET  /export?since=...&session=...
//   GET  /healthz
//
// Errors are {error: code, message}: 404 for unknown sessions/exchanges, 409
// for state conflicts, 422 for invalid input, 502 for provider failures.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <string>

#include "aisensei/error.hpp"
#include "aisensei/tutor_service.hpp"

namespace aisensei {

inline int http_status_for(const Error& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return 422;
  if (dynamic_cast<const ProviderError*>(&e)) return 502;
  if (dynamic_cast<const EmptyBankError*>(&e)) return 503;
  return 500;
}

class TutorHttpServer {
 public:
  explicit TutorHttpServer(TutorService& service) : service_(service) { routes(); }

  httplib::Server& server() { return server_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw ValidationError("request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("invalid JSON body: ") + ex.what());
    }
  }

  template <class F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send(res, http_status_for(e), {{"error", e.code()}, {"message", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        send(res, 422, {{"error", "validation_error"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", "internal"}, {"message", e.what()}});
      }
    };
  }

  nlohmann::json session_view(const Session& s) const {
    auto j = to_json(s);
    const Question& q = service_.graph().question_at(s.question_id);
    j["question"] = question_view(q);
    return j;
  }

  nlohmann::json question_view(const Question& q) const {
    return {{"question_id", q.id},
            {"concept_id", q.concept_id},
            {"concept_title", service_.graph().concept_at(q.concept_id).title},
            {"band", to_string(q.difficulty)},
            {"text", q.text}};
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send(res, 200, {{"status", "ok"}});
    });

    server_.Get("/survey-schema", [this](const httplib::Request&, httplib::Response& res) {
      const auto& s = service_.survey_schema();
      send(res, 200, {{"pre", s.pre_items}, {"post", s.post_items}});
    });

    server_.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      std::optional<StudentProfile> profile;
      if (body.contains("profile") && !body["profile"].is_null()) {
        try {
          profile = parse_profile(body["profile"].get<std::string>());
        } catch (const ParseError& e) {
          throw ValidationError(e.what());
        }
      }
      send(res, 201, session_view(service_.create_session(profile)));
    }));

    server_.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, session_view(service_.get_session(req.matches[1])));
    }));

    server_.Get(R"(/sessions/([^/]+)/question)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  send(res, 200, question_view(service_.question_for(req.matches[1])));
                }));

    server_.Post(R"(/sessions/([^/]+)/guidance)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto body = parse_body(req);
                   if (!body.contains("mode")) throw ValidationError("missing 'mode'");
                   const auto mode = parse_guidance_mode(body["mode"].get<std::string>());
                   std::optional<std::string> input;
                   if (body.contains("input") && !body["input"].is_null()) input = body["input"].get<std::string>();
                   const std::string id = req.matches[1];
                   auto e = service_.request_guidance(id, mode, input);
                   auto j = to_json(e);
                   j["index"] = service_.get_session(id).log.size() - 1;
                   send(res, 201, j);
                 }));

    server_.Post(R"(/sessions/([^/]+)/exchanges/(\d+)/rating)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto body = parse_body(req);
                   if (!body.contains("score") || !body["score"].is_number_integer()) {
                     throw ValidationError("'score' must be an integer");
                   }
                   const std::size_t idx = std::stoul(req.matches[2]);
                   auto e = service_.rate_exchange(req.matches[1], idx, body["score"].get<int>());
                   auto j = to_json(e);
                   j["index"] = idx;
                   send(res, 200, j);
                 }));

    server_.Post(R"(/sessions/([^/]+)/surveys/(pre|post))",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   auto body = parse_body(req);
                   SurveyResponse r;
                   r.session_id = req.matches[1];
                   r.phase = parse_survey_phase(req.matches[2].str());
                   if (!body.contains("items") || !body["items"].is_object()) {
                     throw ValidationError("'items' must be an object of 1-5 scores");
                   }
                   for (const auto& [k, v] : body["items"].items()) {
                     if (!v.is_number_integer()) throw ValidationError("survey item '" + k + "' must be an integer");
                     r.items[k] = v.get<int>();
                   }
                   if (body.contains("free_text") && body["free_text"].is_string()) {
                     r.free_text = body["free_text"].get<std::string>();
                   }
                   send(res, 201, to_json(service_.submit_survey(std::move(r))));
                 }));

    server_.Get("/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      ExportFilter f;
      if (req.has_param("since")) f.since = req.get_param_value("since");
      if (req.has_param("session")) f.session_id = req.get_param_value("session");
      res.status = 200;
      res.set_content(service_.export_logs(f), "application/x-ndjson");
    }));
  }

  TutorService& service_;
  httplib::Server server_;
};

}  // namespace aisensei
