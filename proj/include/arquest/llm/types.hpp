#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "arquest/error.hpp"

namespace arquest::llm {

using json = nlohmann::json;

struct Prompt {
  std::string system;
  std::string user;
  bool want_token_probs = false;

  bool operator==(const Prompt&) const = default;
};

struct TokenProb {
  std::string token;
  double probability = 1.0;  // in (0, 1]

  bool operator==(const TokenProb&) const = default;
};

struct ModelReply {
  std::string text;
  std::optional<std::vector<TokenProb>> token_probs;
  double latency = 0;  // seconds

  bool operator==(const ModelReply&) const = default;
};

struct Prediction {
  std::string factor_id;
  int choice_index = 0;
  double confidence = 0.5;
  std::string explanation;

  bool operator==(const Prediction&) const = default;
};

struct Ask {
  std::string factor_id;
  bool operator==(const Ask&) const = default;
};

struct Stop {
  std::string reason;
  bool operator==(const Stop&) const = default;
};

using NextAction = std::variant<Ask, Stop>;

// One gateway round trip, kept for the session event log.
struct Exchange {
  Prompt prompt;
  ModelReply reply;
  std::optional<std::string> parse_error;

  bool operator==(const Exchange&) const = default;
};

class Gateway {
 public:
  virtual ~Gateway() = default;
  virtual ModelReply complete(const Prompt& prompt) = 0;
  virtual std::string model_name() const = 0;
};

// --- JSON ------------------------------------------------------------------

inline json to_json(const Prompt& p) {
  return json{{"system", p.system}, {"user", p.user}, {"want_token_probs", p.want_token_probs}};
}

inline Prompt prompt_from_json(const json& j) {
  return {j.at("system").get<std::string>(), j.at("user").get<std::string>(),
          j.at("want_token_probs").get<bool>()};
}

inline json to_json(const ModelReply& r) {
  json j{{"text", r.text}, {"latency", r.latency}};
  if (r.token_probs) {
    json tp = json::array();
    for (const auto& t : *r.token_probs) tp.push_back({{"token", t.token}, {"p", t.probability}});
    j["token_probs"] = tp;
  } else {
    j["token_probs"] = nullptr;
  }
  return j;
}

inline ModelReply model_reply_from_json(const json& j) {
  ModelReply r;
  r.text = j.at("text").get<std::string>();
  r.latency = j.at("latency").get<double>();
  if (j.contains("token_probs") && !j.at("token_probs").is_null()) {
    std::vector<TokenProb> tp;
    for (const auto& t : j.at("token_probs")) tp.push_back({t.at("token").get<std::string>(), t.at("p").get<double>()});
    r.token_probs = std::move(tp);
  }
  return r;
}

inline json to_json(const Exchange& e) {
  json j{{"prompt", to_json(e.prompt)}, {"reply", to_json(e.reply)}};
  j["parse_error"] = e.parse_error ? json(*e.parse_error) : json(nullptr);
  return j;
}

inline Exchange exchange_from_json(const json& j) {
  Exchange e{prompt_from_json(j.at("prompt")), model_reply_from_json(j.at("reply")), std::nullopt};
  if (j.contains("parse_error") && !j.at("parse_error").is_null()) e.parse_error = j.at("parse_error").get<std::string>();
  return e;
}

inline json to_json(const Prediction& p) {
  return json{{"factor_id", p.factor_id},
              {"choice_index", p.choice_index},
              {"confidence", p.confidence},
              {"explanation", p.explanation}};
}

inline Prediction prediction_from_json(const json& j) {
  return {j.at("factor_id").get<std::string>(), j.at("choice_index").get<int>(),
          j.at("confidence").get<double>(), j.at("explanation").get<std::string>()};
}

}  // namespace arquest::llm
