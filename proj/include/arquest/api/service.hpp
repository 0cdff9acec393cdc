#pragma once

// HTTP session service. Every mutation is appended to the session's event
// log before the response is produced; requests to one session are
// serialised by a per-session mutex.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "arquest/api/event_log.hpp"
#include "arquest/embedding.hpp"
#include "arquest/engine.hpp"
#include "arquest/error.hpp"
#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/llm/mock.hpp"
#include "arquest/llm/remote.hpp"
#include "arquest/log.hpp"
#include "arquest/scoring.hpp"

namespace arquest::api {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string kb_path;
  std::string geo_path;  // labelled region profiles, as written by `geo label`
  std::string data_dir = "sessions";
  std::string gateway = "mock";  // mock | remote
  llm::RemoteConfig remote;
  bool review_phase = true;
  int question_cap = kDefaultQuestionCap;
};

// Relative paths resolve against `base_dir`.
inline ServiceConfig service_config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  ServiceConfig c;
  auto resolve = [&](const std::string& p) { return (base_dir / p).lexically_normal().string(); };
  try {
    if (j.contains("listen")) {
      const auto& l = j.at("listen");
      c.host = l.value("host", c.host);
      c.port = l.value("port", c.port);
    }
    c.kb_path = resolve(j.at("kb_path").get<std::string>());
    c.geo_path = resolve(j.at("geo_path").get<std::string>());
    c.data_dir = resolve(j.value("data_dir", c.data_dir));
    c.gateway = j.value("gateway", c.gateway);
    if (j.contains("remote")) c.remote = llm::remote_config_from_json(j.at("remote"));
    c.review_phase = j.value("review_phase", c.review_phase);
    c.question_cap = j.value("question_cap", c.question_cap);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  if (c.gateway != "mock" && c.gateway != "remote") throw ConfigError("gateway must be 'mock' or 'remote'");
  if (c.question_cap < 1) throw ConfigError("question_cap must be at least 1");
  if (c.port < 0 || c.port > 65535) throw ConfigError("listen port out of range");
  return c;
}

inline ServiceConfig load_service_config(const std::string& path) {
  return service_config_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

struct Response {
  int status = 200;
  json body = json::object();
};

class NotFound : public Error {
 public:
  using Error::Error;
};

inline int status_for(const std::exception& e) {
  if (dynamic_cast<const NotFound*>(&e)) return 404;
  if (dynamic_cast<const StateError*>(&e) || dynamic_cast<const OutOfTurn*>(&e)) return 409;
  if (dynamic_cast<const EndpointError*>(&e) || dynamic_cast<const ProviderError*>(&e)) return 502;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const InvalidProfile*>(&e) ||
      dynamic_cast<const InvalidChoice*>(&e) || dynamic_cast<const UnknownFactor*>(&e) ||
      dynamic_cast<const UnknownMunicipality*>(&e))
    return 422;
  return 500;
}

inline std::string error_kind(int status) {
  switch (status) {
    case 404: return "not_found";
    case 409: return "conflict";
    case 422: return "invalid_request";
    case 502: return "upstream_unavailable";
    default: return "internal";
  }
}

class Service {
 public:
  using Hook = std::function<void(const SessionEvent&)>;

  Service(KnowledgeBase kb, RegionIndex regions, ServiceConfig config, std::unique_ptr<llm::Gateway> gateway,
          std::unique_ptr<Embedder> embedder = nullptr)
      : kb_(std::move(kb)),
        regions_(std::move(regions)),
        config_(std::move(config)),
        gateway_(std::move(gateway)),
        embedder_(embedder ? std::move(embedder) : std::make_unique<LocalEmbedder>()),
        engine_(kb_, *embedder_, &regions_, EngineConfig{config_.question_cap, config_.review_phase}),
        store_(config_.data_dir) {}

  static std::unique_ptr<Service> from_config(const ServiceConfig& config) {
    auto kb = load_knowledge_base(config.kb_path);
    auto regions = load_region_index(config.geo_path);
    std::unique_ptr<llm::Gateway> gateway;
    if (config.gateway == "remote") {
      gateway = std::make_unique<llm::RemoteGateway>(config.remote);
    }
    auto service = std::make_unique<Service>(std::move(kb), std::move(regions), config, nullptr);
    if (!gateway) gateway = std::make_unique<llm::MockModel>(service->kb_);
    service->gateway_ = std::move(gateway);
    return service;
  }

  const Engine& engine() const { return engine_; }
  const EventStore& store() const { return store_; }

  // Fault injection: `before_append` runs before the event reaches disk,
  // `after_append` once it has been written and applied.
  void set_before_append(Hook h) { before_append_ = std::move(h); }
  void set_after_append(Hook h) { after_append_ = std::move(h); }

  Response handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      return route(method, path, body);
    } catch (const std::exception& e) {
      int status = status_for(e);
      if (status == 500) log::warn(std::string("request failed: ") + e.what());
      json err{{"error", error_kind(status)}, {"message", e.what()}};
      if (status == 502) err["retryable"] = true;
      return {status, err};
    }
  }

  void bind(httplib::Server& server) {
    auto adapt = [this](const httplib::Request& req, httplib::Response& res) {
      Response r = handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Post(R"(/sessions(/.*)?)", adapt);
    server.Get(R"(/sessions/.*)", adapt);
  }

  void listen() {
    httplib::Server server;
    bind(server);
    log::info("listening on " + config_.host + ":" + std::to_string(config_.port));
    if (!server.listen(config_.host, config_.port))
      throw ConfigError("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  }

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
    std::uint64_t next_seq = 0;
  };

  // A mutation returns the event payload to append (if any) and the body.
  struct Outcome {
    std::optional<std::pair<EventKind, json>> event;
    json body;
  };

  static std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos < path.size()) {
      auto next = path.find('/', pos);
      if (next == std::string::npos) next = path.size();
      if (next > pos) parts.push_back(path.substr(pos, next - pos));
      pos = next + 1;
    }
    return parts;
  }

  static bool valid_session_id(const std::string& id) {
    return id.size() == 32 && std::all_of(id.begin(), id.end(), [](char c) {
             return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
  }

  static json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("request body must be a JSON object");
    return j;
  }

  Response route(const std::string& method, const std::string& path, const std::string& body) {
    auto parts = split_path(path);
    if (parts.empty() || parts[0] != "sessions") throw NotFound("no route for " + path);
    if (parts.size() == 1 && method == "POST") return create(parse_body(body));
    if (parts.size() < 2 || parts.size() > 3) throw NotFound("no route for " + path);
    auto entry = lookup(parts[1]);
    if (parts.size() == 2) {
      if (method != "GET") throw NotFound("no route for " + method + " " + path);
      std::lock_guard lock(entry->mutex);
      return {200, to_json(entry->session)};
    }
    if (method != "POST") throw NotFound("no route for " + method + " " + path);
    const auto& action = parts[2];
    json req = parse_body(body);
    if (action == "sources") return mutate(*entry, [&](Session& s) { return link(s, req); });
    if (action == "forecast") return mutate(*entry, [&](Session& s) { return forecast(s); });
    if (action == "review") return mutate(*entry, [&](Session& s) { return review(s, req); });
    if (action == "next") return mutate(*entry, [&](Session& s) { return next(s); });
    if (action == "answers") return mutate(*entry, [&](Session& s) { return answer(s, req); });
    if (action == "finalize") return mutate(*entry, [&](Session& s) { return finalize(s); });
    throw NotFound("no route for " + path);
  }

  std::shared_ptr<Entry> lookup(const std::string& id) {
    if (!valid_session_id(id)) throw NotFound("unknown session '" + id + "'");
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it != sessions_.end()) return it->second;
    if (!store_.exists(id)) throw NotFound("unknown session '" + id + "'");
    auto loaded = store_.load(id);
    auto entry = std::make_shared<Entry>();
    entry->session = fold(loaded.events, engine_);
    entry->next_seq = loaded.events.size();
    sessions_[id] = entry;
    return entry;
  }

  SessionEvent append(Entry& entry, const std::string& id, EventKind kind, json payload) {
    SessionEvent e{id, entry.next_seq, utc_timestamp(), kind, std::move(payload)};
    if (before_append_) before_append_(e);
    store_.append(e);
    ++entry.next_seq;
    return e;
  }

  template <typename F>
  Response mutate(Entry& entry, F f) {
    std::lock_guard lock(entry.mutex);
    Session next = entry.session;
    Outcome out = f(next);
    if (out.event) {
      auto e = append(entry, next.id, out.event->first, std::move(out.event->second));
      entry.session = std::move(next);
      if (after_append_) after_append_(e);
    }
    return {200, std::move(out.body)};
  }

  Response create(const json& req) {
    if (!req.contains("mode") || !req.at("mode").is_string()) throw SchemaError("'mode' is required");
    if (!req.contains("personal_details")) throw SchemaError("'personal_details' is required");
    auto details = personal_details_from_json(req.at("personal_details"));
    Mode mode = mode_from_string(req.at("mode").get<std::string>());
    auto entry = std::make_shared<Entry>();
    std::lock_guard entry_lock(entry->mutex);
    SessionEvent e;
    {
      std::lock_guard lock(map_mutex_);
      std::string id;
      do {
        id = random_session_id();
      } while (sessions_.count(id) || store_.exists(id));
      Session s = engine_.start_session(details, mode, id);
      e = append(*entry, id, EventKind::Started, started_payload(s));
      entry->session = std::move(s);
      sessions_[id] = entry;
    }
    if (after_append_) after_append_(e);
    return {201, json{{"session_id", entry->session.id}, {"state", std::string(to_string(entry->session.state))}}};
  }

  Outcome link(Session& s, const json& req) {
    if (!req.value("terms_accepted", false)) throw ValidationError("the data-sharing terms must be accepted");
    auto source = external_source_from_json(req);
    auto added = engine_.link_source(s, source);
    json snippets = json::array();
    for (const auto& snip : s.profile.snippets) snippets.push_back(to_json(snip));
    json kinds = json::array();
    for (auto k : s.profile.shared_kinds) kinds.push_back(std::string(to_string(k)));
    return {{{EventKind::SourceLinked, source_linked_payload(source, true)}},
            json{{"added", added}, {"snippet_count", s.profile.snippets.size()}, {"shared_kinds", kinds},
                 {"snippets", snippets}}};
  }

  json question_view(const RiskFactor& f) const {
    json choices = json::array();
    for (const auto& c : f.choices) choices.push_back(c.label);
    return json{{"factor", f.id}, {"name", f.name}, {"category", std::string(to_string(f.category))},
                {"question", f.question_text}, {"choices", choices}};
  }

  json prefilled_view(const Session& s) const {
    json out = json::array();
    for (const auto& item : s.prefilled) {
      json v = question_view(kb_.factor(item.prediction.factor_id));
      v["predicted_index"] = item.prediction.choice_index;
      v["confidence"] = item.prediction.confidence;
      v["explanation"] = item.prediction.explanation;
      v["review"] = std::string(to_string(item.review));
      out.push_back(v);
    }
    return out;
  }

  Outcome forecast(Session& s) {
    auto outcome = engine_.run_forecast(s, *gateway_);
    engine_.apply_forecast(s, outcome);
    return {{{EventKind::Forecasted, forecasted_payload(outcome)}},
            json{{"prefilled", prefilled_view(s)}, {"state", std::string(to_string(s.state))}}};
  }

  Outcome review(Session& s, const json& req) {
    if (!req.contains("factor_id") || !req.at("factor_id").is_string()) throw SchemaError("'factor_id' is required");
    auto id = req.at("factor_id").get<std::string>();
    auto kind = req.value("decision", std::string());
    ReviewDecision d = Accept{};
    if (kind == "correct") {
      if (!req.contains("choice_index") || !req.at("choice_index").is_number_integer())
        throw SchemaError("a correction needs an integer 'choice_index'");
      d = Correct{req.at("choice_index").get<int>()};
    } else if (kind != "accept") {
      throw SchemaError("'decision' must be 'accept' or 'correct'");
    }
    engine_.review(s, id, d);
    return {{{EventKind::Reviewed, reviewed_payload(id, d)}},
            json{{"factor_id", id}, {"answer", s.answers.at(id)}, {"pending_reviews", s.pending_reviews()},
                 {"state", std::string(to_string(s.state))}}};
  }

  Outcome next(Session& s) {
    auto outcome = engine_.run_selection(s, gateway_.get());
    auto step = engine_.apply_selection(s, outcome);
    json body;
    if (const auto* ask = std::get_if<AskFactor>(&step)) {
      body = json{{"ask", question_view(kb_.factor(ask->factor_id))}};
    } else {
      body = json{{"done", true}, {"reason", std::get<Done>(step).reason}};
    }
    body["question_count"] = s.question_count();
    body["state"] = std::string(to_string(s.state));
    if (outcome.transition_only) return {std::nullopt, body};
    return {{{EventKind::Asked, asked_payload(outcome)}}, body};
  }

  Outcome answer(Session& s, const json& req) {
    if (!req.contains("factor_id") || !req.at("factor_id").is_string()) throw SchemaError("'factor_id' is required");
    if (!req.contains("choice_index") || !req.at("choice_index").is_number_integer())
      throw SchemaError("an integer 'choice_index' is required");
    auto id = req.at("factor_id").get<std::string>();
    int index = req.at("choice_index").get<int>();
    engine_.submit_answer(s, id, index);
    return {{{EventKind::Answered, answered_payload(id, index)}},
            json{{"factor_id", id}, {"choice_index", index}, {"state", std::string(to_string(s.state))}}};
  }

  // Finalizing again returns the same report without a new event.
  Outcome finalize(Session& s) {
    bool already = s.finalized;
    Session copy = s;
    auto q = engine_.finalize(already ? copy : s);
    json report = to_json(assess(q, kb_, *embedder_));
    if (already) return {std::nullopt, report};
    return {{{EventKind::Finalized, json::object()}}, report};
  }

  KnowledgeBase kb_;
  RegionIndex regions_;
  ServiceConfig config_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::unique_ptr<Embedder> embedder_;
  Engine engine_;
  EventStore store_;
  Hook before_append_;
  Hook after_append_;
  std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace arquest::api
