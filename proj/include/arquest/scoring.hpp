#pragma once

// Monotonic additive risk model: a score starts at zero and only grows with
// non-optimal answers and with interaction bonuses.

#include <algorithm>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "arquest/embedding.hpp"
#include "arquest/engine.hpp"
#include "arquest/error.hpp"
#include "arquest/kb.hpp"

namespace arquest {

struct Contribution {
  std::string factor_id;
  int points = 0;
  bool operator==(const Contribution&) const = default;
};

struct InteractionHit {
  std::string rule_id;
  int bonus = 0;
  bool operator==(const InteractionHit&) const = default;
};

struct Discrepancy {
  std::string factor_id;
  int predicted_index = 0;
  int corrected_index = 0;
  double prediction_confidence = 0;
  double answer_similarity = 0;
  bool operator==(const Discrepancy&) const = default;
};

struct RiskReport {
  std::string session_id;
  int raw_score = 0;
  double normalized_score = 0;
  std::vector<Contribution> contributions;
  std::vector<InteractionHit> interaction_hits;
  std::vector<Discrepancy> discrepancies;
  bool trust_flag = false;
  bool operator==(const RiskReport&) const = default;
};

struct DiscrepancyConfig {
  double min_confidence = 0.7;
  double max_similarity = 0.5;
  int min_distance = 2;
  int flag_count = 3;
  double flag_ratio = 0.25;
};

// Highest attainable raw score: every factor at its riskiest answer and
// every interaction firing.
inline int max_possible_score(const KnowledgeBase& kb) {
  int total = 0;
  for (const auto& f : kb.factors) total += f.max_weight();
  for (const auto& r : kb.interactions) total += r.bonus;
  return total;
}

struct ScoreBreakdown {
  int raw = 0;
  std::vector<Contribution> contributions;
  std::vector<InteractionHit> interaction_hits;
};

// Unanswered factors contribute nothing.
inline ScoreBreakdown score_answers(const std::map<std::string, int>& answers, const KnowledgeBase& kb) {
  for (const auto& [id, index] : answers) {
    const auto& f = kb.factor(id);
    if (!f.valid_choice(index))
      throw InvalidChoice("choice " + std::to_string(index) + " out of range for '" + id + "'");
  }
  ScoreBreakdown out;
  for (const auto& f : kb.factors) {
    auto it = answers.find(f.id);
    if (it == answers.end()) continue;
    int points = f.choices[static_cast<std::size_t>(it->second)].weight;
    out.contributions.push_back({f.id, points});
    out.raw += points;
  }
  for (const auto& rule : kb.interactions) {
    bool fires = std::all_of(rule.condition.begin(), rule.condition.end(), [&](const InteractionTerm& t) {
      auto it = answers.find(t.factor_id);
      return it != answers.end() && it->second >= t.min_index;
    });
    if (fires) {
      out.interaction_hits.push_back({rule.id, rule.bonus});
      out.raw += rule.bonus;
    }
  }
  return out;
}

inline RiskReport risk_score(const CompletedQuestionnaire& q, const KnowledgeBase& kb) {
  auto breakdown = score_answers(q.final_answers, kb);
  RiskReport r;
  r.session_id = q.session_id;
  r.raw_score = breakdown.raw;
  int max_score = max_possible_score(kb);
  r.normalized_score = max_score > 0 ? 100.0 * breakdown.raw / max_score : 0.0;
  r.contributions = std::move(breakdown.contributions);
  r.interaction_hits = std::move(breakdown.interaction_hits);
  return r;
}

// Score over the full ground truth; every KB factor must be answered.
inline int true_risk_score(const std::map<std::string, int>& ground_truth, const KnowledgeBase& kb) {
  for (const auto& f : kb.factors)
    if (!ground_truth.count(f.id)) throw MissingFactor("ground truth lacks factor '" + f.id + "'");
  return score_answers(ground_truth, kb).raw;
}

struct DiscrepancyResult {
  std::vector<Discrepancy> discrepancies;
  bool trust_flag = false;
};

// A high-confidence prediction that the applicant corrected to a
// semantically distant or ordinally far answer.
inline DiscrepancyResult detect_discrepancies(const CompletedQuestionnaire& q, const KnowledgeBase& kb,
                                              const Embedder& embedder, const DiscrepancyConfig& config = {}) {
  DiscrepancyResult out;
  for (const auto& p : q.predictions_snapshot) {
    auto prov = q.provenance.find(p.factor_id);
    if (prov == q.provenance.end() || prov->second != AnswerProvenance::PredictedCorrected) continue;
    auto ans = q.final_answers.find(p.factor_id);
    if (ans == q.final_answers.end() || ans->second == p.choice_index) continue;
    const auto& f = kb.factor(p.factor_id);
    double similarity = cosine(embedder.embed(f.choices.at(static_cast<std::size_t>(p.choice_index)).label),
                               embedder.embed(f.choices.at(static_cast<std::size_t>(ans->second)).label));
    bool confident = p.confidence >= config.min_confidence;
    bool drastic = similarity < config.max_similarity || std::abs(p.choice_index - ans->second) >= config.min_distance;
    if (confident && drastic)
      out.discrepancies.push_back({p.factor_id, p.choice_index, ans->second, p.confidence, similarity});
  }
  // Snapshot order is KB order already; sort anyway so the result does not
  // depend on how the snapshot was assembled.
  std::sort(out.discrepancies.begin(), out.discrepancies.end(), [&](const Discrepancy& a, const Discrepancy& b) {
    return kb.position(a.factor_id) < kb.position(b.factor_id);
  });
  const auto count = static_cast<double>(out.discrepancies.size());
  const auto prefilled = static_cast<double>(q.predictions_snapshot.size());
  out.trust_flag = static_cast<int>(out.discrepancies.size()) >= config.flag_count ||
                   (prefilled > 0 && count > 0 && count / prefilled >= config.flag_ratio);
  return out;
}

// Score plus discrepancy analysis; what a finalized session reports.
inline RiskReport assess(const CompletedQuestionnaire& q, const KnowledgeBase& kb, const Embedder& embedder,
                         const DiscrepancyConfig& config = {}) {
  RiskReport r = risk_score(q, kb);
  auto d = detect_discrepancies(q, kb, embedder, config);
  r.discrepancies = std::move(d.discrepancies);
  r.trust_flag = d.trust_flag;
  return r;
}

inline json to_json(const RiskReport& r) {
  json contributions = json::array();
  for (const auto& c : r.contributions) contributions.push_back({{"factor_id", c.factor_id}, {"points", c.points}});
  json hits = json::array();
  for (const auto& h : r.interaction_hits) hits.push_back({{"rule_id", h.rule_id}, {"bonus", h.bonus}});
  json discrepancies = json::array();
  for (const auto& d : r.discrepancies) {
    discrepancies.push_back({{"factor_id", d.factor_id},
                             {"predicted_index", d.predicted_index},
                             {"corrected_index", d.corrected_index},
                             {"prediction_confidence", d.prediction_confidence},
                             {"answer_similarity", d.answer_similarity}});
  }
  return json{{"session_id", r.session_id},
              {"raw_score", r.raw_score},
              {"normalized_score", r.normalized_score},
              {"contributions", contributions},
              {"interaction_hits", hits},
              {"discrepancies", discrepancies},
              {"trust_flag", r.trust_flag}};
}

}  // namespace arquest
