#pragma once

// Deterministic stand-in for the chat model. It reads the prompt layouts
// produced by prompts.hpp and answers from an optional ground-truth oracle:
//
//  forecasting  predict every factor whose top evidence relevance >= tau,
//               confidence = min(0.95, 0.5 + top relevance);
//  selection    ask the remaining factor maximising
//               max_weight * (0.5 + 0.25 * [linked indicator adverse]),
//               stop once that maximum < theta_fraction * global max weight.

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arquest/kb.hpp"
#include "arquest/llm/prompts.hpp"
#include "arquest/llm/types.hpp"

namespace arquest::llm {

struct MockConfig {
  double tau = 0.35;
  double confidence_cap = 0.95;
  double theta_fraction = 0.1;
};

class MockModel final : public Gateway {
 public:
  // Without an oracle, predictions fall back to the riskiest choice.
  MockModel(const KnowledgeBase& kb, std::optional<std::map<std::string, int>> oracle = std::nullopt,
            MockConfig config = {})
      : kb_(&kb), oracle_(std::move(oracle)), config_(config) {}

  std::string model_name() const override { return "mock"; }

  ModelReply complete(const Prompt& prompt) override {
    auto start = std::chrono::steady_clock::now();
    ModelReply reply;
    if (prompt.user.rfind(kForecastTitle, 0) == 0) {
      reply = forecast(prompt.user);
    } else if (prompt.user.rfind(kSelectionTitle, 0) == 0) {
      reply = select(prompt.user);
    } else {
      reply.text = "I can only help with forecasting and factor selection prompts.";
    }
    if (!prompt.want_token_probs) reply.token_probs.reset();
    reply.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return reply;
  }

 private:
  struct FactorEvidence {
    std::string id;
    double top = -1;
    std::string top_text;
  };

  static std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
  }

  static std::vector<std::string> section(const std::vector<std::string>& all, const std::string& header) {
    std::vector<std::string> out;
    bool inside = false;
    for (const auto& l : all) {
      if (l.rfind("## ", 0) == 0) {
        inside = (l == header);
        continue;
      }
      if (inside) out.push_back(l);
    }
    return out;
  }

  int predicted_choice(const RiskFactor& f) const {
    if (oracle_) {
      auto it = oracle_->find(f.id);
      if (it != oracle_->end() && f.valid_choice(it->second)) return it->second;
    }
    return static_cast<int>(f.choices.size()) - 1;
  }

  ModelReply forecast(const std::string& user) const {
    std::vector<FactorEvidence> factors;
    for (const auto& l : section(lines(user), "## Risk factors with evidence")) {
      if (l.rfind(kFactorHeader, 0) == 0) {
        factors.push_back({l.substr(std::string(kFactorHeader).size()), -1, {}});
        continue;
      }
      auto tag = l.find(kRelevanceTag);
      if (tag == std::string::npos || factors.empty()) continue;
      auto num_begin = tag + std::string(kRelevanceTag).size();
      auto close = l.find(')', num_begin);
      if (close == std::string::npos) continue;
      double score = std::stod(l.substr(num_begin, close - num_begin));
      if (score > factors.back().top) {
        factors.back().top = score;
        factors.back().top_text = l.substr(std::min(close + 2, l.size()));
      }
    }

    // Tokens are emitted piecewise so the choice index occupies its own token.
    std::vector<TokenProb> tokens;
    auto emit = [&](std::string piece, double p = 1.0) { tokens.push_back({std::move(piece), p}); };
    emit("{\"predictions\":[");
    bool first = true;
    for (const auto& fe : factors) {
      if (fe.top < config_.tau || !kb_->contains(fe.id)) continue;
      const auto& f = kb_->factor(fe.id);
      double confidence = std::min(config_.confidence_cap, 0.5 + fe.top);
      if (!first) emit(",");
      first = false;
      emit("{\"factor_id\":");
      emit(json(fe.id).dump());
      emit(",\"choice_index\":");
      emit(std::to_string(predicted_choice(f)), confidence);
      emit(",\"explanation\":");
      emit(json("Evidence: " + fe.top_text).dump());
      emit("}");
    }
    emit("]}");

    ModelReply reply;
    for (const auto& t : tokens) reply.text += t.token;
    reply.token_probs = std::move(tokens);
    return reply;
  }

  ModelReply select(const std::string& user) const {
    auto all = lines(user);
    std::vector<std::string> remaining;
    for (const auto& l : section(all, "## Remaining risk factors")) {
      if (l.rfind("- ", 0) != 0) continue;
      auto bar = l.find(" | ");
      remaining.push_back(l.substr(2, bar == std::string::npos ? std::string::npos : bar - 2));
    }
    std::set<std::string> adverse;
    for (const auto& l : section(all, "## Regional indicators flagged as adverse")) {
      if (l.rfind("- ", 0) != 0) continue;
      adverse.insert(l.substr(2, l.find(':') - 2));
    }

    const double theta = config_.theta_fraction * kb_->global_max_weight();
    std::optional<std::string> best;
    double best_score = -1;
    for (const auto& id : remaining) {
      if (!kb_->contains(id)) continue;
      const auto& f = kb_->factor(id);
      bool linked_adverse = std::any_of(f.linked_indicator_ids.begin(), f.linked_indicator_ids.end(),
                                        [&](const std::string& ind) { return adverse.count(ind) != 0; });
      double score = f.max_weight() * (0.5 + 0.25 * (linked_adverse ? 1.0 : 0.0));
      if (score > best_score) {
        best_score = score;
        best = id;
      }
    }
    ModelReply reply;
    if (!best || best_score < theta) {
      reply.text = R"({"action":"stop","reason":"no remaining factor is impactful enough to ask"})";
    } else {
      reply.text = json{{"action", "ask"}, {"factor_id", *best}}.dump();
    }
    return reply;
  }

  const KnowledgeBase* kb_;
  std::optional<std::map<std::string, int>> oracle_;
  MockConfig config_;
};

}  // namespace arquest::llm
