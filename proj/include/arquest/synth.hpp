#pragma once

// Reproducible synthetic applicant cohort and a scripted respondent that
// answers from each applicant's ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "arquest/engine.hpp"
#include "arquest/error.hpp"
#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/profile.hpp"
#include "arquest/scoring.hpp"

namespace arquest {

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// mt19937_64 output is fixed by the standard; the helpers below avoid the
// implementation-defined std distributions so cohorts match across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t index(std::size_t n) {
    if (n == 0) throw ConfigError("index() over an empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  std::size_t weighted(const std::vector<double>& weights) {
    double total = 0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0) return i;
    throw ConfigError("weighted() with no positive weight");
  }

 private:
  std::mt19937_64 engine_;
};

inline Rng applicant_stream(std::uint64_t seed, std::size_t index) {
  return Rng(splitmix64(seed ^ static_cast<std::uint64_t>(index)));
}

// ---------------------------------------------------------------------------
// Configuration and pools

struct AgeGenderBucket {
  Gender gender = Gender::Female;
  int age_min = kMinAge;
  int age_max = kMaxAge;
  double probability = 0;
};

struct Occupation {
  std::string name;
  double probability = 0;
  double mean_daily_steps = 0;
};

struct GroundTruthConfig {
  double base_optimal_mass = 0.7;
  double geometric_ratio = 0.5;
  double beta_evidence = 4.0;
  double beta_geo_high = 1.5;
  double beta_geo_very_high = 2.0;
};

struct CohortConfig {
  std::size_t size = 85;
  std::uint64_t seed = 0;
  std::vector<AgeGenderBucket> age_gender_distribution;
  std::map<std::string, double> municipality_weights;  // population, normalised on use
  std::vector<Occupation> occupation_table;
  std::map<SourceKind, double> share_probabilities;
  GroundTruthConfig ground_truth;
  int fitness_days = 30;
  std::string ehr_pool_path;
  std::string caption_pool_path;
};

struct EhrPoolEntry {
  std::string id;
  Gender gender = Gender::Female;
  int age_min = kMinAge;
  int age_max = kMaxAge;
  json record;
};

struct CaptionPersona {
  std::string persona;
  std::vector<json> captions;
};

struct Pools {
  std::vector<EhrPoolEntry> ehr;
  std::vector<CaptionPersona> personas;
  std::optional<double> caption_temperature;
  std::optional<double> caption_top_p;
};

inline void validate(const CohortConfig& c) {
  if (c.size < 1) throw ConfigError("cohort size must be at least 1");
  auto sums_to_one = [](double s) { return std::abs(s - 1.0) <= 1e-9; };
  double s = 0;
  for (const auto& b : c.age_gender_distribution) {
    if (b.probability < 0 || b.age_min > b.age_max || b.age_min < kMinAge || b.age_max > kMaxAge)
      throw ConfigError("bad age/gender bucket");
    s += b.probability;
  }
  if (c.age_gender_distribution.empty() || !sums_to_one(s))
    throw ConfigError("age/gender distribution must sum to 1");
  s = 0;
  for (const auto& o : c.occupation_table) {
    if (o.probability < 0 || o.mean_daily_steps < 0) throw ConfigError("bad occupation entry '" + o.name + "'");
    s += o.probability;
  }
  if (c.occupation_table.empty() || !sums_to_one(s)) throw ConfigError("occupation probabilities must sum to 1");
  double pop = 0;
  for (const auto& [m, w] : c.municipality_weights) {
    if (w < 0) throw ConfigError("negative population weight for '" + m + "'");
    pop += w;
  }
  if (pop <= 0) throw ConfigError("municipality weights must not all be zero");
  for (const auto& [k, p] : c.share_probabilities)
    if (p < 0 || p > 1) throw ConfigError("share probability outside [0, 1]");
  if (c.fitness_days < 1) throw ConfigError("fitness_days must be at least 1");
  const auto& g = c.ground_truth;
  if (g.base_optimal_mass <= 0 || g.base_optimal_mass > 1 || g.geometric_ratio <= 0 || g.beta_evidence <= 0 ||
      g.beta_geo_high <= 0 || g.beta_geo_very_high <= 0)
    throw ConfigError("bad ground-truth parameters");
}

// Pool paths are resolved relative to `base_dir`.
inline CohortConfig cohort_config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  CohortConfig c;
  try {
    c.size = j.value("size", std::size_t{85});
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& b : j.at("age_gender_distribution")) {
      c.age_gender_distribution.push_back({gender_from_string(b.at("gender").get<std::string>()),
                                           b.at("age_min").get<int>(), b.at("age_max").get<int>(),
                                           b.at("probability").get<double>()});
    }
    c.municipality_weights = j.at("municipality_weights").get<std::map<std::string, double>>();
    for (const auto& o : j.at("occupation_table")) {
      c.occupation_table.push_back({o.at("occupation").get<std::string>(), o.at("probability").get<double>(),
                                    o.at("mean_daily_steps").get<double>()});
    }
    for (const auto& [k, p] : j.at("share_probabilities").items())
      c.share_probabilities[source_kind_from_string(k)] = p.get<double>();
    if (j.contains("ground_truth")) {
      const auto& g = j.at("ground_truth");
      c.ground_truth.base_optimal_mass = g.value("base_optimal_mass", c.ground_truth.base_optimal_mass);
      c.ground_truth.geometric_ratio = g.value("geometric_ratio", c.ground_truth.geometric_ratio);
      c.ground_truth.beta_evidence = g.value("beta_evidence", c.ground_truth.beta_evidence);
      c.ground_truth.beta_geo_high = g.value("beta_geo_high", c.ground_truth.beta_geo_high);
      c.ground_truth.beta_geo_very_high = g.value("beta_geo_very_high", c.ground_truth.beta_geo_very_high);
    }
    c.fitness_days = j.value("fitness_days", 30);
    if (j.contains("pools")) {
      auto resolve = [&](const std::string& p) { return (base_dir / p).lexically_normal().string(); };
      c.ehr_pool_path = resolve(j.at("pools").at("ehr").get<std::string>());
      c.caption_pool_path = resolve(j.at("pools").at("captions").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cohort config: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("cohort config: ") + e.what());
  }
  validate(c);
  return c;
}

inline CohortConfig load_cohort_config(const std::string& path) {
  return cohort_config_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

inline Pools pools_from_json(const json& ehr_doc, const json& caption_doc) {
  Pools pools;
  try {
    for (const auto& e : ehr_doc) {
      EhrPoolEntry entry{e.at("id").get<std::string>(), gender_from_string(e.at("gender").get<std::string>()),
                         e.at("age_min").get<int>(), e.at("age_max").get<int>(), e.at("record")};
      snippetize({SourceKind::HealthRecords, entry.record});  // schema check
      pools.ehr.push_back(std::move(entry));
    }
    if (caption_doc.contains("caption_temperature")) pools.caption_temperature = caption_doc.at("caption_temperature").get<double>();
    if (caption_doc.contains("caption_top_p")) pools.caption_top_p = caption_doc.at("caption_top_p").get<double>();
    for (const auto& p : caption_doc.at("personas")) {
      CaptionPersona persona{p.at("persona").get<std::string>(), {}};
      for (const auto& c : p.at("captions")) persona.captions.push_back(c);
      pools.personas.push_back(std::move(persona));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pools: ") + e.what());
  }
  return pools;
}

inline Pools load_pools(const CohortConfig& config) {
  if (config.ehr_pool_path.empty() || config.caption_pool_path.empty())
    throw ConfigError("cohort config names no pools");
  return pools_from_json(read_json_file(config.ehr_pool_path), read_json_file(config.caption_pool_path));
}

// ---------------------------------------------------------------------------
// Ground truth

inline bool keyword_matches(const RiskFactor& f, const std::vector<std::string>& evidence_lower) {
  for (const auto& k : f.evidence_keywords)
    for (const auto& t : evidence_lower)
      if (t.find(k) != std::string::npos) return true;
  return false;
}

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Choice the evidence modifier favours: the riskiest choice whose label
// contains a matching keyword, else the riskiest choice overall.
inline std::size_t evidence_target(const RiskFactor& f, const std::vector<std::string>& evidence_lower) {
  std::vector<std::string> hit;
  for (const auto& k : f.evidence_keywords)
    for (const auto& t : evidence_lower)
      if (t.find(k) != std::string::npos) {
        hit.push_back(k);
        break;
      }
  for (std::size_t i = f.choices.size(); i-- > 1;) {
    auto label = lowercase(f.choices[i].label);
    for (const auto& k : hit)
      if (label.find(k) != std::string::npos) return i;
  }
  return f.choices.size() - 1;
}

// Answer distribution for a scored factor: base mass on the optimal choice,
// the rest geometric over riskier choices, then odds multipliers on the
// target choice for matching evidence and for adverse linked indicators.
inline std::vector<double> choice_distribution(const RiskFactor& f, const std::vector<std::string>& evidence_lower,
                                               const std::optional<RegionProfile>& region,
                                               const GroundTruthConfig& cfg) {
  const std::size_t n = f.choices.size();
  std::vector<double> mass(n, 0.0);
  mass[0] = cfg.base_optimal_mass;
  double geo_total = 0;
  for (std::size_t i = 1; i < n; ++i) geo_total += std::pow(cfg.geometric_ratio, static_cast<double>(i - 1));
  for (std::size_t i = 1; i < n; ++i)
    mass[i] = (1.0 - cfg.base_optimal_mass) * std::pow(cfg.geometric_ratio, static_cast<double>(i - 1)) / geo_total;

  const std::size_t target = evidence_target(f, evidence_lower);
  if (keyword_matches(f, evidence_lower)) mass[target] *= cfg.beta_evidence;
  if (region) {
    int severity = 0;
    for (const auto& ind : f.linked_indicator_ids) severity = std::max(severity, adverse_severity(*region, ind));
    if (severity == 2) mass[target] *= cfg.beta_geo_very_high;
    if (severity == 1) mass[target] *= cfg.beta_geo_high;
  }
  double total = 0;
  for (double m : mass) total += m;
  for (double& m : mass) m /= total;
  return mass;
}

namespace detail {

inline std::optional<std::size_t> personal_choice(const RiskFactor& f, const PersonalDetails& d) {
  for (std::size_t i = 0; i < f.choices.size(); ++i) {
    auto label = lowercase(f.choices[i].label);
    if (label == to_string(d.gender)) return i;
    if (d.occupation && label == lowercase(*d.occupation)) return i;
    int lo = 0, hi = 0;
    char plus = 0;
    if (std::sscanf(label.c_str(), "%d-%d", &lo, &hi) == 2 && d.age >= lo && d.age <= hi) return i;
    if (std::sscanf(label.c_str(), "%d%c", &lo, &plus) == 2 && plus == '+' && d.age >= lo) return i;
  }
  return std::nullopt;
}

}  // namespace detail

inline std::map<std::string, int> ground_truth_answers(const PersonalDetails& details,
                                                       const std::vector<std::string>& evidence_texts,
                                                       const KnowledgeBase& kb,
                                                       const std::optional<RegionProfile>& region,
                                                       const GroundTruthConfig& cfg, Rng& rng) {
  std::vector<std::string> lower;
  lower.reserve(evidence_texts.size());
  for (const auto& t : evidence_texts) lower.push_back(lowercase(t));
  std::map<std::string, int> out;
  for (const auto& f : kb.factors) {
    if (f.category == Category::PersonalDetails) {
      auto match = detail::personal_choice(f, details);
      out[f.id] = static_cast<int>(match ? *match : rng.index(f.choices.size()));
      continue;
    }
    out[f.id] = static_cast<int>(rng.weighted(choice_distribution(f, lower, region, cfg)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohort

struct RealizedSource {
  ExternalSource source;
  bool shared = false;
};

struct SyntheticApplicant {
  std::string applicant_id;
  std::string ehr_id;
  std::string persona;
  std::vector<RealizedSource> sources;
  UserProfile profile;
  std::map<std::string, int> ground_truth;
  int true_score = 0;

  bool shares_any_source() const {
    return std::any_of(sources.begin(), sources.end(), [](const RealizedSource& s) { return s.shared; });
  }
};

namespace detail {

// Largest-remainder allocation of `size` applicants over the buckets.
inline std::vector<std::size_t> bucket_quota(const std::vector<AgeGenderBucket>& buckets, std::size_t size) {
  std::vector<std::size_t> count(buckets.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    double exact = buckets[i].probability * static_cast<double>(size);
    count[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += count[i];
    remainder.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < size; ++r, ++assigned) ++count[remainder[r % remainder.size()].second];
  return count;
}

}  // namespace detail

inline std::vector<std::size_t> bucket_assignment(const CohortConfig& config) {
  auto quota = detail::bucket_quota(config.age_gender_distribution, config.size);
  std::vector<std::size_t> slots;
  for (std::size_t b = 0; b < quota.size(); ++b) slots.insert(slots.end(), quota[b], b);
  Rng rng(splitmix64(config.seed));
  for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[rng.index(i)]);
  return slots;
}

inline SyntheticApplicant generate_applicant(const CohortConfig& config, const KnowledgeBase& kb,
                                             const RegionIndex& regions, const Pools& pools, std::size_t index,
                                             std::size_t bucket_index) {
  Rng rng = applicant_stream(config.seed, index);
  const auto& bucket = config.age_gender_distribution.at(bucket_index);
  SyntheticApplicant a;
  char id[16];
  std::snprintf(id, sizeof id, "A%03zu", index + 1);
  a.applicant_id = id;

  PersonalDetails details;
  details.gender = bucket.gender;
  details.age = bucket.age_min + static_cast<int>(rng.index(static_cast<std::size_t>(bucket.age_max - bucket.age_min + 1)));

  std::vector<std::string> names;
  std::vector<double> weights;
  for (const auto& [m, w] : config.municipality_weights) {
    names.push_back(m);
    weights.push_back(w);
  }
  details.municipality = names[rng.weighted(weights)];

  std::vector<double> occ_weights;
  for (const auto& o : config.occupation_table) occ_weights.push_back(o.probability);
  const auto& occupation = config.occupation_table[rng.weighted(occ_weights)];
  details.occupation = occupation.name;

  std::vector<const EhrPoolEntry*> matching;
  for (const auto& e : pools.ehr)
    if (e.gender == details.gender && details.age >= e.age_min && details.age <= e.age_max) matching.push_back(&e);
  if (matching.empty())
    throw PoolExhausted("no health record for " + std::string(to_string(details.gender)) + " aged " +
                        std::to_string(details.age));
  const auto* ehr = matching[rng.index(matching.size())];
  a.ehr_id = ehr->id;

  double applicant_mean = occupation.mean_daily_steps * (0.85 + 0.3 * rng.uniform());
  json steps = json::array();
  for (int d = 0; d < config.fitness_days; ++d)
    steps.push_back(std::lround(applicant_mean * (0.85 + 0.3 * rng.uniform())));

  if (pools.personas.empty()) throw PoolExhausted("caption pool is empty");
  const auto& persona = pools.personas[rng.index(pools.personas.size())];
  if (persona.captions.empty()) throw PoolExhausted("persona '" + persona.persona + "' has no captions");
  a.persona = persona.persona;
  std::size_t upper = std::min<std::size_t>(5, persona.captions.size());
  std::size_t want = upper <= 2 ? upper : 2 + rng.index(upper - 1);
  std::vector<std::size_t> order(persona.captions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  json captions = json::array();
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(order[i], order[i + rng.index(order.size() - i)]);
    captions.push_back(persona.captions[order[i]]);
  }
  json social{{"captions", captions}};
  if (pools.caption_temperature) social["caption_temperature"] = *pools.caption_temperature;
  if (pools.caption_top_p) social["caption_top_p"] = *pools.caption_top_p;

  a.sources = {{{SourceKind::HealthRecords, ehr->record}, false},
               {{SourceKind::FitnessTracker, json{{"daily_steps", steps}}}, false},
               {{SourceKind::SocialPosts, social}, false}};
  for (auto& s : a.sources) {
    auto it = config.share_probabilities.find(s.source.kind);
    double p = it == config.share_probabilities.end() ? 0.0 : it->second;
    s.shared = rng.uniform() < p;
  }

  a.profile.details = details;
  auto region = regions.find(details.municipality);
  if (region == regions.end()) throw ConfigError("no region profile for '" + details.municipality + "'");
  a.profile.region = region->second;
  for (const auto& s : a.sources)
    if (s.shared) add_source(a.profile, s.source);

  // Ground truth reflects everything about the applicant, shared or not.
  std::vector<std::string> evidence;
  for (const auto& s : a.sources)
    for (const auto& snip : snippetize(s.source)) evidence.push_back(snip.text);
  a.ground_truth = ground_truth_answers(details, evidence, kb, a.profile.region, config.ground_truth, rng);
  a.true_score = true_risk_score(a.ground_truth, kb);
  return a;
}

inline std::vector<SyntheticApplicant> generate_cohort(const CohortConfig& config, const KnowledgeBase& kb,
                                                       const RegionIndex& regions, const Pools& pools) {
  validate(config);
  if (pools.ehr.empty()) throw PoolExhausted("health record pool is empty");
  auto buckets = bucket_assignment(config);
  std::vector<SyntheticApplicant> out;
  out.reserve(config.size);
  for (std::size_t i = 0; i < config.size; ++i)
    out.push_back(generate_applicant(config, kb, regions, pools, i, buckets[i]));
  return out;
}

// ---------------------------------------------------------------------------
// JSON Lines

inline json to_json(const SyntheticApplicant& a) {
  json sources = json::array();
  for (const auto& s : a.sources) {
    json j = to_json(s.source);
    j["shared"] = s.shared;
    sources.push_back(j);
  }
  return json{{"applicant_id", a.applicant_id}, {"ehr_id", a.ehr_id},   {"persona", a.persona},
              {"sources", sources},             {"profile", to_json(a.profile)},
              {"ground_truth", a.ground_truth}, {"true_score", a.true_score}};
}

inline SyntheticApplicant applicant_from_json(const json& j) {
  SyntheticApplicant a;
  try {
    a.applicant_id = j.at("applicant_id").get<std::string>();
    a.ehr_id = j.value("ehr_id", "");
    a.persona = j.value("persona", "");
    for (const auto& s : j.at("sources")) a.sources.push_back({external_source_from_json(s), s.at("shared").get<bool>()});
    a.profile = user_profile_from_json(j.at("profile"));
    a.ground_truth = j.at("ground_truth").get<std::map<std::string, int>>();
    a.true_score = j.at("true_score").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("applicant record: ") + e.what());
  }
  return a;
}

inline std::string cohort_to_jsonl(const std::vector<SyntheticApplicant>& cohort) {
  std::string out;
  for (const auto& a : cohort) {
    out += to_json(a).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SyntheticApplicant> cohort_from_jsonl(std::istream& in) {
  std::vector<SyntheticApplicant> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("cohort line " + std::to_string(n) + " is not JSON");
    out.push_back(applicant_from_json(j));
  }
  return out;
}

inline std::vector<SyntheticApplicant> load_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return cohort_from_jsonl(in);
}

// ---------------------------------------------------------------------------
// Scripted respondent

class ScriptedRespondent {
 public:
  explicit ScriptedRespondent(std::map<std::string, int> ground_truth) : truth_(std::move(ground_truth)) {}
  explicit ScriptedRespondent(const SyntheticApplicant& a) : truth_(a.ground_truth) {}

  int answer(const std::string& factor_id) const {
    auto it = truth_.find(factor_id);
    if (it == truth_.end()) throw UnknownFactor("no ground truth for '" + factor_id + "'");
    return it->second;
  }

  ReviewDecision review(const Prediction& p) const {
    int truth = answer(p.factor_id);
    if (truth == p.choice_index) return Accept{};
    return Correct{truth};
  }

 private:
  std::map<std::string, int> truth_;
};

}  // namespace arquest
