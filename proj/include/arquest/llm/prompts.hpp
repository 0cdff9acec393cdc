#pragma once

// Prompt templates for answer forecasting and next-factor selection.
// The mock model parses these layouts, so section headers are load-bearing.

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/llm/types.hpp"
#include "arquest/profile.hpp"

namespace arquest::llm {

inline constexpr const char* kForecastTitle = "# Answer forecasting";
inline constexpr const char* kSelectionTitle = "# Next factor selection";
inline constexpr const char* kFactorHeader = "### factor ";
inline constexpr const char* kRelevanceTag = "(relevance ";

inline std::string format_relevance(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", score);
  return buf;
}

namespace detail {

inline void write_details(std::ostringstream& out, const PersonalDetails& d) {
  out << "## Applicant\n";
  out << "age: " << d.age << "\n";
  out << "gender: " << to_string(d.gender) << "\n";
  out << "municipality: " << d.municipality << "\n";
  out << "occupation: " << (d.occupation ? *d.occupation : std::string("not stated")) << "\n\n";
}

inline void write_region(std::ostringstream& out, const std::optional<RegionProfile>& region) {
  out << "## Regional indicators flagged as adverse\n";
  bool any = false;
  if (region) {
    for (const auto& id : region->adverse_ids) {
      out << "- " << id << ": " << to_string(region->labels.at(id)) << "\n";
      any = true;
    }
  }
  if (!any) out << "none\n";
  out << "\n";
}

}  // namespace detail

// `bundles` are matched to factors by id; factors without hits are left out.
inline Prompt build_forecast_prompt(const std::vector<RiskFactor>& factors,
                                    const std::vector<EvidenceBundle>& bundles,
                                    const UserProfile& profile) {
  std::map<std::string, const EvidenceBundle*> by_id;
  for (const auto& b : bundles) by_id[b.factor_id] = &b;

  std::ostringstream out;
  out << kForecastTitle << "\n\n";
  detail::write_details(out, profile.details);
  detail::write_region(out, profile.region);

  out << "## Risk factors with evidence\n";
  int listed = 0;
  for (const auto& f : factors) {
    auto it = by_id.find(f.id);
    if (it == by_id.end() || it->second->hits.empty()) continue;
    ++listed;
    out << kFactorHeader << f.id << "\n";
    out << "question: " << f.question_text << "\n";
    out << "choices:\n";
    for (std::size_t i = 0; i < f.choices.size(); ++i) out << "  " << i << ": " << f.choices[i].label << "\n";
    out << "evidence:\n";
    for (const auto& hit : it->second->hits) {
      const auto* s = find_snippet(profile, hit.snippet_id);
      out << "  - " << kRelevanceTag << format_relevance(hit.score) << ") " << (s ? s->text : hit.snippet_id)
          << "\n";
    }
    out << "\n";
  }
  if (listed == 0) out << "none\n\n";

  out << "## Instructions\n"
         "Predict the applicant's answer only for factors where the evidence justifies it; leave the "
         "others out. Use the choice index from the list above. Give a short explanation that cites "
         "the evidence you relied on.\n\n";
  out << "## Reply format\n"
         "Reply with one JSON object and nothing else:\n"
         "{\"predictions\":[{\"factor_id\":\"<id>\",\"choice_index\":<integer>,\"explanation\":\"<text>\"}]}\n";

  Prompt p;
  p.system =
      "You are an underwriting assistant for a life insurance application. You read an applicant's "
      "shared data and pre-fill questionnaire answers that the applicant will review.";
  p.user = out.str();
  p.want_token_probs = true;
  return p;
}

struct AnsweredItem {
  std::string factor_name;
  std::string choice_label;

  bool operator==(const AnsweredItem&) const = default;
};

inline Prompt build_selection_prompt(const std::vector<CatalogEntry>& catalog,
                                     const std::vector<AnsweredItem>& answered,
                                     const std::optional<RegionProfile>& region) {
  if (catalog.empty()) throw ConfigError("selection prompt needs at least one remaining factor");
  std::ostringstream out;
  out << kSelectionTitle << "\n\n";
  out << "## Remaining risk factors\n";
  for (const auto& e : catalog) out << "- " << e.id << " | " << e.name << ": " << e.summary << "\n";
  out << "\n## Answers so far\n";
  if (answered.empty()) out << "none yet\n";
  for (const auto& a : answered) out << "- " << a.factor_name << ": " << a.choice_label << "\n";
  out << "\n";
  detail::write_region(out, region);
  out << "## Decision rule\n"
         "Choose the one remaining factor that is most worth asking next. Stop questioning when no "
         "remaining factor is both impactful and likely to yield a risky answer.\n\n";
  out << "## Reply format\n"
         "Reply with one JSON object and nothing else, either\n"
         "{\"action\":\"ask\",\"factor_id\":\"<id>\"}\n"
         "or\n"
         "{\"action\":\"stop\",\"reason\":\"<text>\"}\n";

  Prompt p;
  p.system =
      "You run an adaptive life insurance questionnaire. You pick which risk factor to ask about next, "
      "or decide that enough information has been collected.";
  p.user = out.str();
  p.want_token_probs = false;
  return p;
}

// Appended to the user message when a reply could not be parsed.
inline Prompt with_parse_feedback(const Prompt& base, const std::string& error) {
  Prompt p = base;
  p.user += "\n## Correction\nYour previous reply could not be used (" + error +
            "). Reply again with only the JSON object in the required format.\n";
  return p;
}

}  // namespace arquest::llm
