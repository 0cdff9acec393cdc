#pragma once

// Life-insurance risk-factor knowledge base: questions, weighted answer
// choices, interaction bonuses and the fixed traditional subset.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "arquest/error.hpp"

namespace arquest {

using json = nlohmann::json;

enum class Category { PersonalDetails, LifestyleHabits, FamilyHistory, HealthStatus };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::PersonalDetails: return "PersonalDetails";
    case Category::LifestyleHabits: return "LifestyleHabits";
    case Category::FamilyHistory: return "FamilyHistory";
    case Category::HealthStatus: return "HealthStatus";
  }
  return "?";
}

inline Category category_from_string(std::string_view s) {
  if (s == "PersonalDetails") return Category::PersonalDetails;
  if (s == "LifestyleHabits") return Category::LifestyleHabits;
  if (s == "FamilyHistory") return Category::FamilyHistory;
  if (s == "HealthStatus") return Category::HealthStatus;
  throw ParseError("unknown category '" + std::string(s) + "'");
}

struct AnswerChoice {
  std::string label;
  int weight = 0;  // risk points

  bool operator==(const AnswerChoice&) const = default;
};

struct RiskFactor {
  std::string id;
  Category category = Category::LifestyleHabits;
  std::string name;
  std::string summary;
  std::string question_text;
  std::vector<AnswerChoice> choices;  // index 0 is the optimal answer
  std::vector<std::string> evidence_keywords;
  std::vector<std::string> linked_indicator_ids;

  int max_weight() const {
    int w = 0;
    for (const auto& c : choices) w = std::max(w, c.weight);
    return w;
  }
  bool valid_choice(int index) const {
    return index >= 0 && static_cast<std::size_t>(index) < choices.size();
  }

  bool operator==(const RiskFactor&) const = default;
};

struct InteractionTerm {
  std::string factor_id;
  int min_index = 1;

  bool operator==(const InteractionTerm&) const = default;
};

// Bonus applied when every term's factor was answered at or above min_index.
struct InteractionRule {
  std::string id;
  std::vector<InteractionTerm> condition;
  int bonus = 0;

  bool operator==(const InteractionRule&) const = default;
};

inline constexpr std::size_t kMaxSummaryLength = 120;
inline constexpr int kTraditionalPerCategory = 10;

class KnowledgeBase {
 public:
  std::vector<RiskFactor> factors;
  std::vector<InteractionRule> interactions;
  std::vector<std::string> traditional_ids;

  KnowledgeBase() = default;
  KnowledgeBase(std::vector<RiskFactor> f, std::vector<InteractionRule> i,
                std::vector<std::string> t)
      : factors(std::move(f)), interactions(std::move(i)), traditional_ids(std::move(t)) {
    reindex();
  }

  // Rebuilds the id lookup; call after mutating `factors` directly.
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < factors.size(); ++i) index_.emplace(factors[i].id, i);
  }

  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

  std::optional<std::size_t> position(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const RiskFactor& factor(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw UnknownFactor("unknown factor '" + std::string(id) + "'");
    return factors[it->second];
  }

  int global_max_weight() const {
    int w = 0;
    for (const auto& f : factors) w = std::max(w, f.max_weight());
    return w;
  }

  bool operator==(const KnowledgeBase& o) const {
    return factors == o.factors && interactions == o.interactions &&
           traditional_ids == o.traditional_ids;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate_factor(const RiskFactor& f) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("factor '" + f.id + "': " + what);
  };
  if (f.id.empty()) throw ValidationError("factor with empty id");
  if (f.name.empty()) fail("empty name");
  if (f.summary.empty()) fail("empty summary");
  if (f.summary.size() > kMaxSummaryLength) fail("summary longer than 120 characters");
  if (f.question_text.empty()) fail("empty question_text");
  if (f.choices.size() < 2) fail("fewer than 2 choices");
  for (const auto& c : f.choices) {
    if (c.label.empty()) fail("choice with empty label");
    if (c.weight < 0) fail("negative weight on choice '" + c.label + "'");
  }
  if (f.category == Category::PersonalDetails) {
    // Collected at insights time, never scored.
    for (const auto& c : f.choices)
      if (c.weight != 0) fail("personal-details factor with non-zero weight");
    return;
  }
  auto zeros = std::count_if(f.choices.begin(), f.choices.end(),
                             [](const AnswerChoice& c) { return c.weight == 0; });
  if (zeros == 0) fail("no zero-weight choice");
  if (zeros > 1) fail("more than one zero-weight choice");
  for (std::size_t i = 1; i < f.choices.size(); ++i)
    if (f.choices[i].weight < f.choices[i - 1].weight) fail("choice weights decrease");
  for (const auto& k : f.evidence_keywords) {
    if (k.empty()) fail("empty evidence keyword");
    if (std::any_of(k.begin(), k.end(), [](unsigned char ch) { return std::isupper(ch); }))
      fail("evidence keyword '" + k + "' is not lowercase");
  }
}

inline void validate(const KnowledgeBase& kb) {
  std::set<std::string> ids;
  for (const auto& f : kb.factors) {
    validate_factor(f);
    if (!ids.insert(f.id).second) throw ValidationError("duplicate factor id '" + f.id + "'");
  }
  std::set<std::string> rule_ids;
  for (const auto& r : kb.interactions) {
    if (!rule_ids.insert(r.id).second)
      throw ValidationError("duplicate interaction id '" + r.id + "'");
    if (r.condition.size() < 2)
      throw ValidationError("interaction '" + r.id + "': condition needs at least 2 terms");
    if (r.bonus <= 0) throw ValidationError("interaction '" + r.id + "': bonus must be positive");
    for (const auto& t : r.condition) {
      if (!ids.count(t.factor_id))
        throw ValidationError("interaction '" + r.id + "': unknown factor '" + t.factor_id + "'");
      const auto& f = kb.factor(t.factor_id);
      if (t.min_index < 0 || !f.valid_choice(t.min_index))
        throw ValidationError("interaction '" + r.id + "': min index out of range for '" +
                              t.factor_id + "'");
    }
  }
  std::map<Category, int> histogram;
  std::set<std::string> seen;
  for (const auto& id : kb.traditional_ids) {
    if (!ids.count(id)) throw ValidationError("traditional id '" + id + "' not in factors");
    if (!seen.insert(id).second) throw ValidationError("traditional id '" + id + "' repeated");
    ++histogram[kb.factor(id).category];
  }
  for (Category c : {Category::LifestyleHabits, Category::FamilyHistory, Category::HealthStatus}) {
    if (histogram[c] != kTraditionalPerCategory) {
      throw ValidationError("traditional list has " + std::to_string(histogram[c]) + " " +
                            std::string(to_string(c)) + " entries, expected 10");
    }
  }
  if (histogram[Category::PersonalDetails] != 0)
    throw ValidationError("traditional list contains personal-details factors");
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(json& j, const AnswerChoice& c) { j = json{{"label", c.label}, {"weight", c.weight}}; }

inline void to_json(json& j, const RiskFactor& f) {
  j = json{{"id", f.id},
           {"category", std::string(to_string(f.category))},
           {"name", f.name},
           {"summary", f.summary},
           {"question_text", f.question_text},
           {"choices", f.choices},
           {"evidence_keywords", f.evidence_keywords},
           {"linked_indicator_ids", f.linked_indicator_ids}};
}

inline void to_json(json& j, const InteractionRule& r) {
  json cond = json::array();
  for (const auto& t : r.condition) cond.push_back({{"factor_id", t.factor_id}, {"min_index", t.min_index}});
  j = json{{"id", r.id}, {"condition", cond}, {"bonus", r.bonus}};
}

inline json to_json(const KnowledgeBase& kb) {
  return json{{"factors", kb.factors},
              {"interactions", kb.interactions},
              {"traditional_ids", kb.traditional_ids}};
}

namespace detail {

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": bad field '" + key + "': " + e.what());
  }
}

template <typename T>
T optional_field(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return require<T>(j, key, where);
}

}  // namespace detail

// Parses without validating; use load_knowledge_base for the checked path.
inline KnowledgeBase parse_knowledge_base(const json& doc) {
  using detail::require;
  if (!doc.is_object()) throw ParseError("knowledge base: document is not an object");
  std::vector<RiskFactor> factors;
  for (const auto& jf : require<json>(doc, "factors", "knowledge base")) {
    RiskFactor f;
    f.id = require<std::string>(jf, "id", "factor");
    const std::string where = "factor '" + f.id + "'";
    f.category = category_from_string(require<std::string>(jf, "category", where));
    f.name = require<std::string>(jf, "name", where);
    f.summary = require<std::string>(jf, "summary", where);
    f.question_text = require<std::string>(jf, "question_text", where);
    for (const auto& jc : require<json>(jf, "choices", where)) {
      f.choices.push_back({require<std::string>(jc, "label", where), require<int>(jc, "weight", where)});
    }
    f.evidence_keywords =
        detail::optional_field<std::vector<std::string>>(jf, "evidence_keywords", {}, where);
    f.linked_indicator_ids =
        detail::optional_field<std::vector<std::string>>(jf, "linked_indicator_ids", {}, where);
    factors.push_back(std::move(f));
  }
  std::vector<InteractionRule> rules;
  if (doc.contains("interactions")) {
    for (const auto& jr : require<json>(doc, "interactions", "knowledge base")) {
      InteractionRule r;
      r.id = require<std::string>(jr, "id", "interaction");
      const std::string where = "interaction '" + r.id + "'";
      for (const auto& jt : require<json>(jr, "condition", where)) {
        r.condition.push_back(
            {require<std::string>(jt, "factor_id", where), require<int>(jt, "min_index", where)});
      }
      r.bonus = require<int>(jr, "bonus", where);
      rules.push_back(std::move(r));
    }
  }
  auto traditional = require<std::vector<std::string>>(doc, "traditional_ids", "knowledge base");
  return KnowledgeBase(std::move(factors), std::move(rules), std::move(traditional));
}

inline KnowledgeBase knowledge_base_from_json(const json& doc) {
  KnowledgeBase kb = parse_knowledge_base(doc);
  validate(kb);
  return kb;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

inline KnowledgeBase load_knowledge_base(const std::string& path) {
  return knowledge_base_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Queries

inline std::vector<RiskFactor> traditional_subset(const KnowledgeBase& kb) {
  std::vector<RiskFactor> out;
  out.reserve(kb.traditional_ids.size());
  for (const auto& id : kb.traditional_ids) out.push_back(kb.factor(id));
  return out;
}

struct CatalogEntry {
  std::string id;
  std::string name;
  std::string summary;

  bool operator==(const CatalogEntry&) const = default;
};

// Name + one-line summary for each remaining factor, in KB order.
inline std::vector<CatalogEntry> selection_catalog(const KnowledgeBase& kb,
                                                   const std::set<std::string>& remaining) {
  for (const auto& id : remaining)
    if (!kb.contains(id)) throw UnknownFactor("unknown factor '" + id + "'");
  std::vector<CatalogEntry> out;
  for (const auto& f : kb.factors)
    if (remaining.count(f.id)) out.push_back({f.id, f.name, f.summary});
  return out;
}

}  // namespace arquest
