#pragma once

// Structured-reply parsing and token-probability confidence.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arquest/kb.hpp"
#include "arquest/llm/types.hpp"
#include "arquest/log.hpp"

namespace arquest::llm {

inline constexpr double kFallbackConfidence = 0.5;

struct JsonSpan {
  json value;
  std::size_t begin = 0;  // offset of '{'
  std::size_t end = 0;    // one past the matching '}'
};

// First balanced {...} region of `text` that parses as JSON.
inline std::optional<JsonSpan> extract_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char ch = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (ch == '\\') {
          escaped = true;
        } else if (ch == '"') {
          in_string = false;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '{') {
        ++depth;
      } else if (ch == '}') {
        if (--depth == 0) {
          auto candidate = text.substr(start, i + 1 - start);
          auto parsed = json::parse(candidate, nullptr, /*allow_exceptions=*/false);
          if (!parsed.is_discarded() && parsed.is_object()) return JsonSpan{std::move(parsed), start, i + 1};
          break;
        }
      }
    }
  }
  return std::nullopt;
}

namespace detail {

// Records, for every object in a JSON text, where each member's raw value sits.
class SpanScanner {
 public:
  using Members = std::map<std::string, std::pair<std::size_t, std::size_t>>;

  explicit SpanScanner(std::string_view text) : text_(text) {}

  std::vector<Members> scan(std::size_t pos) {
    objects_.clear();
    pos_ = pos;
    value();
    return objects_;
  }

 private:
  void ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\n' || text_[pos_] == '\r' || text_[pos_] == '\t'))
      ++pos_;
  }

  std::string string_token() {
    std::size_t begin = pos_;
    ++pos_;
    bool escaped = false;
    while (pos_ < text_.size()) {
      char ch = text_[pos_++];
      if (escaped) {
        escaped = false;
      } else if (ch == '\\') {
        escaped = true;
      } else if (ch == '"') {
        break;
      }
    }
    auto decoded = json::parse(text_.substr(begin, pos_ - begin), nullptr, false);
    return decoded.is_string() ? decoded.get<std::string>() : std::string();
  }

  void value() {
    ws();
    if (pos_ >= text_.size()) return;
    char ch = text_[pos_];
    if (ch == '{') {
      ++pos_;
      Members members;
      std::size_t slot = objects_.size();
      objects_.emplace_back();
      while (true) {
        ws();
        if (pos_ >= text_.size()) return;
        if (text_[pos_] == '}') {
          ++pos_;
          break;
        }
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] != '"') return;
        std::string key = string_token();
        ws();
        if (pos_ < text_.size() && text_[pos_] == ':') ++pos_;
        ws();
        std::size_t vbegin = pos_;
        value();
        members.emplace(std::move(key), std::make_pair(vbegin, pos_));
      }
      objects_[slot] = std::move(members);
    } else if (ch == '[') {
      ++pos_;
      while (true) {
        ws();
        if (pos_ >= text_.size()) return;
        if (text_[pos_] == ']') {
          ++pos_;
          break;
        }
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        value();
      }
    } else if (ch == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' && text_[pos_] != ']' &&
             text_[pos_] != ' ' && text_[pos_] != '\n' && text_[pos_] != '\r' && text_[pos_] != '\t')
        ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Members> objects_;
};

}  // namespace detail

// Geometric mean of the probabilities of the tokens that spell the
// choice_index value of `factor_id`'s prediction; 0.5 when that cannot be
// located.
inline double answer_confidence(const ModelReply& reply, const std::string& factor_id) {
  if (!reply.token_probs || reply.token_probs->empty()) return kFallbackConfidence;
  const auto& tokens = *reply.token_probs;

  std::string text;
  std::vector<std::size_t> offsets;
  offsets.reserve(tokens.size());
  for (const auto& t : tokens) {
    offsets.push_back(text.size());
    text += t.token;
  }

  auto root = extract_first_json_object(text);
  if (!root) return kFallbackConfidence;
  std::string_view view(text);
  auto objects = detail::SpanScanner(view).scan(root->begin);

  std::optional<std::pair<std::size_t, std::size_t>> span;
  for (const auto& members : objects) {
    auto fid = members.find("factor_id");
    auto idx = members.find("choice_index");
    if (fid == members.end() || idx == members.end()) continue;
    auto raw = view.substr(fid->second.first, fid->second.second - fid->second.first);
    auto decoded = json::parse(raw, nullptr, false);
    if (decoded.is_string() && decoded.get<std::string>() == factor_id) {
      span = idx->second;
      break;
    }
  }
  if (!span || span->first >= span->second) return kFallbackConfidence;

  double log_sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::size_t b = offsets[i];
    std::size_t e = b + tokens[i].token.size();
    if (b < span->second && e > span->first) {
      double p = tokens[i].probability;
      if (!(p > 0)) return kFallbackConfidence;
      log_sum += std::log(std::min(p, 1.0));
      ++n;
    }
  }
  if (n == 0) return kFallbackConfidence;
  return std::exp(log_sum / n);
}

// Entries naming unknown factors, out-of-range choices or repeated factors
// are dropped with a warning.
inline std::vector<Prediction> parse_forecast_reply(const ModelReply& reply, const std::vector<RiskFactor>& factors) {
  auto root = extract_first_json_object(reply.text);
  if (!root) throw MalformedReply("no JSON object in forecast reply");
  const json& doc = root->value;
  if (!doc.contains("predictions") || !doc.at("predictions").is_array())
    throw MalformedReply("forecast reply lacks a 'predictions' list");

  std::map<std::string, const RiskFactor*> known;
  for (const auto& f : factors) known[f.id] = &f;

  std::vector<Prediction> out;
  std::set<std::string> seen;
  for (const auto& entry : doc.at("predictions")) {
    if (!entry.is_object() || !entry.contains("factor_id") || !entry.at("factor_id").is_string() ||
        !entry.contains("choice_index") || !entry.at("choice_index").is_number_integer()) {
      log::warn("forecast reply: dropping malformed prediction entry");
      continue;
    }
    auto id = entry.at("factor_id").get<std::string>();
    auto it = known.find(id);
    if (it == known.end()) {
      log::warn("forecast reply: dropping prediction for unknown factor '" + id + "'");
      continue;
    }
    auto index = entry.at("choice_index").get<long long>();
    if (index < 0 || static_cast<std::size_t>(index) >= it->second->choices.size()) {
      log::warn("forecast reply: dropping out-of-range choice for '" + id + "'");
      continue;
    }
    if (!seen.insert(id).second) {
      log::warn("forecast reply: dropping repeated prediction for '" + id + "'");
      continue;
    }
    std::string explanation;
    if (entry.contains("explanation") && entry.at("explanation").is_string())
      explanation = entry.at("explanation").get<std::string>();
    if (explanation.empty()) explanation = "(no explanation given)";
    out.push_back({id, static_cast<int>(index), answer_confidence(reply, id), std::move(explanation)});
  }
  return out;
}

inline NextAction parse_selection_reply(const ModelReply& reply, const std::set<std::string>& remaining) {
  auto root = extract_first_json_object(reply.text);
  if (!root) throw MalformedReply("no JSON object in selection reply");
  const json& doc = root->value;
  if (!doc.contains("action") || !doc.at("action").is_string())
    throw MalformedReply("selection reply lacks an 'action'");
  auto action = doc.at("action").get<std::string>();
  if (action == "stop") {
    std::string reason;
    if (doc.contains("reason") && doc.at("reason").is_string()) reason = doc.at("reason").get<std::string>();
    return Stop{reason};
  }
  if (action == "ask") {
    if (!doc.contains("factor_id") || !doc.at("factor_id").is_string())
      throw MalformedReply("ask action without factor_id");
    auto id = doc.at("factor_id").get<std::string>();
    if (!remaining.count(id)) throw MalformedReply("factor '" + id + "' is not among the remaining factors");
    return Ask{id};
  }
  throw MalformedReply("unknown action '" + action + "'");
}

}  // namespace arquest::llm
