#pragma once

// Applicant profiling: personal details, shared external sources flattened
// into evidence snippets, and per-factor similarity retrieval over them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "arquest/embedding.hpp"
#include "arquest/error.hpp"
#include "arquest/geo.hpp"
#include "arquest/kb.hpp"

namespace arquest {

enum class Gender { Female, Male, Other };

inline std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::Female: return "female";
    case Gender::Male: return "male";
    case Gender::Other: return "other";
  }
  return "?";
}

inline Gender gender_from_string(std::string_view s) {
  if (s == "female") return Gender::Female;
  if (s == "male") return Gender::Male;
  if (s == "other") return Gender::Other;
  throw SchemaError("unknown gender '" + std::string(s) + "'");
}

inline constexpr int kMinAge = 18;
inline constexpr int kMaxAge = 100;

struct PersonalDetails {
  int age = 0;
  Gender gender = Gender::Other;
  std::string municipality;
  std::optional<std::string> occupation;

  bool operator==(const PersonalDetails&) const = default;
};

inline void validate(const PersonalDetails& d) {
  if (d.age < kMinAge || d.age > kMaxAge)
    throw InvalidProfile("age " + std::to_string(d.age) + " outside [18, 100]");
  if (d.municipality.empty()) throw InvalidProfile("municipality is required");
}

enum class SourceKind { HealthRecords, FitnessTracker, SocialPosts };

inline std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::HealthRecords: return "HealthRecords";
    case SourceKind::FitnessTracker: return "FitnessTracker";
    case SourceKind::SocialPosts: return "SocialPosts";
  }
  return "?";
}

inline SourceKind source_kind_from_string(std::string_view s) {
  if (s == "HealthRecords") return SourceKind::HealthRecords;
  if (s == "FitnessTracker") return SourceKind::FitnessTracker;
  if (s == "SocialPosts") return SourceKind::SocialPosts;
  throw SchemaError("unknown source kind '" + std::string(s) + "'");
}

struct ExternalSource {
  SourceKind kind = SourceKind::HealthRecords;
  json payload;

  bool operator==(const ExternalSource&) const = default;
};

struct Provenance {
  SourceKind kind = SourceKind::HealthRecords;
  std::string ref;  // source-local, e.g. "conditions[1]"

  bool operator==(const Provenance&) const = default;
};

inline constexpr std::size_t kMaxSnippetLength = 300;

struct EvidenceSnippet {
  std::string id;
  std::string text;
  Provenance provenance;
  std::optional<std::string> date;

  bool operator==(const EvidenceSnippet&) const = default;
};

struct UserProfile {
  PersonalDetails details;
  std::vector<EvidenceSnippet> snippets;
  std::set<SourceKind> shared_kinds;
  std::optional<RegionProfile> region;

  bool operator==(const UserProfile&) const = default;
};

struct EvidenceHit {
  std::string snippet_id;
  double score = 0;

  bool operator==(const EvidenceHit&) const = default;
};

struct EvidenceBundle {
  std::string factor_id;
  std::vector<EvidenceHit> hits;  // descending score, ties by snippet id

  bool operator==(const EvidenceBundle&) const = default;
};

// ---------------------------------------------------------------------------
// Snippets

inline std::string_view fitness_band(long mean_steps) {
  if (mean_steps < 5000) return "sedentary";
  if (mean_steps < 7500) return "low-active";
  if (mean_steps < 10000) return "somewhat-active";
  return "active";
}

namespace detail {

inline std::string clip_snippet(std::string text) {
  if (text.size() <= kMaxSnippetLength) return text;
  std::size_t cut = kMaxSnippetLength;
  // Do not split a UTF-8 sequence.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  text.resize(cut);
  return text;
}

inline std::optional<std::string> string_field(const json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (j.contains(k) && j.at(k).is_string()) return j.at(k).get<std::string>();
  return std::nullopt;
}

inline const json& array_field(const json& payload, const char* key, bool required) {
  static const json empty = json::array();
  if (!payload.contains(key)) {
    if (required) throw SchemaError(std::string("payload missing '") + key + "'");
    return empty;
  }
  const auto& a = payload.at(key);
  if (!a.is_array()) throw SchemaError(std::string("'") + key + "' must be a list");
  return a;
}

}  // namespace detail

inline std::vector<EvidenceSnippet> snippetize(const ExternalSource& source) {
  const json& p = source.payload;
  if (!p.is_object()) throw SchemaError(std::string(to_string(source.kind)) + " payload must be an object");
  std::vector<EvidenceSnippet> out;

  switch (source.kind) {
    case SourceKind::HealthRecords: {
      struct Section {
        const char* key;
        const char* label;
      };
      // Encounters are accepted but produce no snippets.
      for (Section s : {Section{"conditions", "condition"}, Section{"medications", "medication"},
                        Section{"procedures", "procedure"}}) {
        const auto& items = detail::array_field(p, s.key, false);
        for (std::size_t i = 0; i < items.size(); ++i) {
          const auto& item = items[i];
          if (!item.is_object()) throw SchemaError(std::string(s.key) + " entries must be objects");
          auto name = detail::string_field(item, {"name"});
          if (!name || name->empty()) throw SchemaError(std::string(s.key) + " entry without a name");
          auto date = detail::string_field(item, {"onset_date", "start_date", "date"});
          std::string text = std::string(s.label) + ": " + *name;
          if (date) text += " (" + *date + ")";
          out.push_back({std::string(s.key) + "[" + std::to_string(i) + "]",
                         detail::clip_snippet(std::move(text)),
                         {source.kind, std::string(s.key) + "[" + std::to_string(i) + "]"},
                         date});
        }
      }
      if (p.contains("encounters") && !p.at("encounters").is_array())
        throw SchemaError("'encounters' must be a list");
      break;
    }
    case SourceKind::FitnessTracker: {
      const auto& steps = detail::array_field(p, "daily_steps", true);
      if (steps.empty()) throw SchemaError("'daily_steps' is empty");
      double sum = 0;
      for (const auto& s : steps) {
        if (!s.is_number_integer() || s.get<long long>() < 0)
          throw SchemaError("'daily_steps' must hold non-negative integers");
        sum += static_cast<double>(s.get<long long>());
      }
      long mean = std::lround(sum / static_cast<double>(steps.size()));
      std::string text = "average daily steps: " + std::to_string(mean) + " (" +
                         std::string(fitness_band(mean)) + ")";
      out.push_back({"daily_steps", std::move(text), {source.kind, "daily_steps"}, std::nullopt});
      break;
    }
    case SourceKind::SocialPosts: {
      const auto& captions = detail::array_field(p, "captions", true);
      for (std::size_t i = 0; i < captions.size(); ++i) {
        const auto& c = captions[i];
        if (!c.is_object()) throw SchemaError("captions entries must be objects");
        auto text = detail::string_field(c, {"text"});
        if (!text || text->empty()) throw SchemaError("caption without text");
        auto ref = "captions[" + std::to_string(i) + "]";
        out.push_back({ref, detail::clip_snippet(*text), {source.kind, ref}, detail::string_field(c, {"date"})});
      }
      break;
    }
  }
  return out;
}

// Appends a source's snippets under profile-wide ids "ev-0000", "ev-0001", ...
inline std::size_t add_source(UserProfile& profile, const ExternalSource& source) {
  auto snippets = snippetize(source);
  for (auto& s : snippets) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ev-%04zu", profile.snippets.size());
    s.id = buf;
    profile.snippets.push_back(std::move(s));
  }
  profile.shared_kinds.insert(source.kind);
  return snippets.size();
}

inline const EvidenceSnippet* find_snippet(const UserProfile& profile, std::string_view id) {
  for (const auto& s : profile.snippets)
    if (s.id == id) return &s;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Retrieval

inline constexpr std::size_t kDefaultRetrievalWidth = 5;

inline std::string factor_query(const RiskFactor& factor) { return factor.name + " " + factor.summary; }

// Ranks precomputed snippet embeddings against one factor.
inline EvidenceBundle rank_evidence(const UserProfile& profile, const std::vector<Embedding>& snippet_vecs,
                                    const RiskFactor& factor, std::size_t m, const Embedder& embedder) {
  if (m < 1) throw ConfigError("retrieval width must be at least 1");
  EvidenceBundle bundle{factor.id, {}};
  if (profile.snippets.empty()) return bundle;
  const Embedding q = embedder.embed(factor_query(factor));
  for (std::size_t i = 0; i < profile.snippets.size(); ++i) {
    double s = cosine(q, snippet_vecs[i]);
    if (s < 0) continue;
    bundle.hits.push_back({profile.snippets[i].id, std::min(s, 1.0)});
  }
  std::sort(bundle.hits.begin(), bundle.hits.end(), [](const EvidenceHit& a, const EvidenceHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.snippet_id < b.snippet_id;
  });
  if (bundle.hits.size() > m) bundle.hits.resize(m);
  return bundle;
}

inline std::vector<Embedding> embed_snippets(const UserProfile& profile, const Embedder& embedder) {
  std::vector<Embedding> out;
  out.reserve(profile.snippets.size());
  for (const auto& s : profile.snippets) out.push_back(embedder.embed(s.text));
  return out;
}

inline EvidenceBundle retrieve_evidence(const UserProfile& profile, const RiskFactor& factor, std::size_t m,
                                        const Embedder& embedder) {
  return rank_evidence(profile, embed_snippets(profile, embedder), factor, m, embedder);
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const PersonalDetails& d) {
  json j{{"age", d.age}, {"gender", std::string(to_string(d.gender))}, {"municipality", d.municipality}};
  if (d.occupation) j["occupation"] = *d.occupation;
  return j;
}

inline PersonalDetails personal_details_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("personal_details must be an object");
  PersonalDetails d;
  try {
    d.age = j.at("age").get<int>();
    d.gender = gender_from_string(j.at("gender").get<std::string>());
    d.municipality = j.at("municipality").get<std::string>();
    if (j.contains("occupation") && !j.at("occupation").is_null())
      d.occupation = j.at("occupation").get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("personal_details: ") + e.what());
  }
  return d;
}

inline json to_json(const ExternalSource& s) {
  return json{{"kind", std::string(to_string(s.kind))}, {"payload", s.payload}};
}

inline ExternalSource external_source_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string() || !j.contains("payload"))
    throw SchemaError("source needs 'kind' and 'payload'");
  return {source_kind_from_string(j.at("kind").get<std::string>()), j.at("payload")};
}

inline json to_json(const EvidenceSnippet& s) {
  json j{{"id", s.id},
         {"text", s.text},
         {"provenance", {{"kind", std::string(to_string(s.provenance.kind))}, {"ref", s.provenance.ref}}}};
  if (s.date) j["date"] = *s.date;
  return j;
}

inline EvidenceSnippet snippet_from_json(const json& j) {
  EvidenceSnippet s;
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.provenance.kind = source_kind_from_string(j.at("provenance").at("kind").get<std::string>());
  s.provenance.ref = j.at("provenance").at("ref").get<std::string>();
  if (j.contains("date")) s.date = j.at("date").get<std::string>();
  return s;
}

inline json to_json(const UserProfile& p) {
  json snippets = json::array();
  for (const auto& s : p.snippets) snippets.push_back(to_json(s));
  json kinds = json::array();
  for (auto k : p.shared_kinds) kinds.push_back(std::string(to_string(k)));
  json j{{"details", to_json(p.details)}, {"snippets", snippets}, {"shared_kinds", kinds}};
  j["region"] = p.region ? to_json(*p.region) : json(nullptr);
  return j;
}

inline UserProfile user_profile_from_json(const json& j) {
  UserProfile p;
  p.details = personal_details_from_json(j.at("details"));
  for (const auto& s : j.at("snippets")) p.snippets.push_back(snippet_from_json(s));
  for (const auto& k : j.at("shared_kinds")) p.shared_kinds.insert(source_kind_from_string(k.get<std::string>()));
  if (j.contains("region") && !j.at("region").is_null()) p.region = region_profile_from_json(j.at("region"));
  return p;
}

}  // namespace arquest
