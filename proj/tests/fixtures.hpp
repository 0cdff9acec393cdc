#pragma once

#include <string>

#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/synth.hpp"

#ifndef ARQUEST_DATA_DIR
#error "ARQUEST_DATA_DIR must point at the data/ directory"
#endif

namespace fixtures {

inline std::string data(const std::string& rel) { return std::string(ARQUEST_DATA_DIR) + "/" + rel; }
inline std::string golden(const std::string& rel) { return std::string(ARQUEST_GOLDEN_DIR) + "/" + rel; }

inline const arquest::KnowledgeBase& kb() {
  static const auto k = arquest::load_knowledge_base(data("kb.json"));
  return k;
}

inline const arquest::RegionIndex& regions() {
  static const auto r = arquest::load_region_index(data("regions.json"));
  return r;
}

inline const arquest::CohortConfig& cohort_config() {
  static const auto c = arquest::load_cohort_config(data("cohort_config.json"));
  return c;
}

inline const arquest::Pools& pools() {
  static const auto p = arquest::load_pools(cohort_config());
  return p;
}

inline const std::vector<arquest::SyntheticApplicant>& cohort() {
  static const auto c = arquest::generate_cohort(cohort_config(), kb(), regions(), pools());
  return c;
}

inline arquest::PersonalDetails applicant(int age = 45, const std::string& town = "Lisboa") {
  return {age, arquest::Gender::Female, town, std::string("teacher")};
}

}  // namespace fixtures
