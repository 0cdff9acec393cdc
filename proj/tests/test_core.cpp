// kb, geo, embedding, profile, scoring, synth and eval.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "arquest/embedding.hpp"
#include "arquest/eval.hpp"
#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/profile.hpp"
#include "arquest/scoring.hpp"
#include "arquest/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace arquest;

namespace {

json kb_doc() { return read_json_file(fixtures::data("kb.json")); }

std::string validation_message(const json& doc) {
  try {
    knowledge_base_from_json(doc);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

// ---- kb -------------------------------------------------------------------

TEST(KnowledgeBase, ReferenceFileLoads) {
  const auto& kb = fixtures::kb();
  EXPECT_EQ(kb.factors.size(), 40u);
  EXPECT_EQ(kb.traditional_ids.size(), 30u);
}

TEST(KnowledgeBase, NineFamilyHistoryEntriesRejected) {
  auto doc = kb_doc();
  auto& ids = doc["traditional_ids"];
  for (auto it = ids.begin(); it != ids.end(); ++it) {
    if (it->get<std::string>().rfind("fh_", 0) == 0) {
      ids.erase(it);
      break;
    }
  }
  EXPECT_NE(validation_message(doc).find("FamilyHistory"), std::string::npos);
}

TEST(KnowledgeBase, FirstChoiceWithWeightRejected) {
  auto doc = kb_doc();
  for (auto& f : doc["factors"]) {
    if (f["id"] == "ls_smoking") f["choices"][0]["weight"] = 3;
  }
  EXPECT_NE(validation_message(doc).find("no zero-weight choice"), std::string::npos);
}

TEST(KnowledgeBase, OtherInvariants) {
  auto dup = kb_doc();
  dup["factors"].push_back(dup["factors"][5]);
  EXPECT_NE(validation_message(dup).find("duplicate factor id"), std::string::npos);

  auto long_summary = kb_doc();
  long_summary["factors"][5]["summary"] = std::string(121, 'x');
  EXPECT_NE(validation_message(long_summary).find("120"), std::string::npos);

  auto decreasing = kb_doc();
  for (auto& f : decreasing["factors"])
    if (f["id"] == "ls_smoking") f["choices"][3]["weight"] = 1;
  EXPECT_NE(validation_message(decreasing).find("decrease"), std::string::npos);

  auto bad_rule = kb_doc();
  bad_rule["interactions"][0]["condition"][0]["factor_id"] = "nope";
  EXPECT_NE(validation_message(bad_rule).find("unknown factor"), std::string::npos);
}

TEST(KnowledgeBase, RoundTrip) {
  const auto& kb = fixtures::kb();
  auto again = knowledge_base_from_json(to_json(kb));
  EXPECT_EQ(again, kb);
  EXPECT_EQ(to_json(again), to_json(kb));
}

TEST(KnowledgeBase, TraditionalSubsetTenPerCategory) {
  auto subset = traditional_subset(fixtures::kb());
  ASSERT_EQ(subset.size(), 30u);
  std::map<Category, int> histogram;
  for (const auto& f : subset) ++histogram[f.category];
  EXPECT_EQ(histogram[Category::LifestyleHabits], 10);
  EXPECT_EQ(histogram[Category::FamilyHistory], 10);
  EXPECT_EQ(histogram[Category::HealthStatus], 10);
  EXPECT_EQ(traditional_subset(fixtures::kb()), subset);
}

TEST(KnowledgeBase, TraditionalSubsetKeepsFileOrder) {
  auto doc = kb_doc();
  std::vector<std::string> ids = doc["traditional_ids"];
  std::mt19937_64 rng(11);
  std::shuffle(ids.begin(), ids.end(), rng);
  doc["traditional_ids"] = ids;
  auto kb = knowledge_base_from_json(doc);
  std::vector<std::string> got;
  for (const auto& f : traditional_subset(kb)) got.push_back(f.id);
  EXPECT_EQ(got, ids);
}

TEST(KnowledgeBase, SelectionCatalog) {
  const auto& kb = fixtures::kb();
  EXPECT_TRUE(selection_catalog(kb, {}).empty());
  std::set<std::string> all;
  for (const auto& f : kb.factors) all.insert(f.id);
  EXPECT_EQ(selection_catalog(kb, all).size(), kb.factors.size());

  // KB file order, not set order.
  auto cat = selection_catalog(kb, {"hs_bmi", "ls_smoking"});
  ASSERT_EQ(cat.size(), 2u);
  EXPECT_EQ(cat[0].id, "ls_smoking");
  EXPECT_EQ(cat[1].id, "hs_bmi");
  EXPECT_THROW(selection_catalog(kb, {"zz"}), UnknownFactor);
}

// ---- geo ------------------------------------------------------------------

namespace {

std::vector<IndicatorDef> two_defs() {
  return {{"x1", "mortality", Polarity::HighIsAdverse}, {"x2", "income", Polarity::HighIsFavorable}};
}

}  // namespace

TEST(Geo, IngestCountsValues) {
  std::istringstream csv("municipality,x1,x2\nA,1,2\nB,3,4\nC,5,6\n");
  auto t = parse_indicators(csv, two_defs());
  EXPECT_EQ(t.values.size(), 6u);
  EXPECT_EQ(t.municipalities, (std::vector<std::string>{"A", "B", "C"}));
}

TEST(Geo, EmptyCellIsMissing) {
  std::istringstream csv("municipality,x1,x2\nA,1,\nB,3,4\n");
  auto t = parse_indicators(csv, two_defs());
  EXPECT_FALSE(t.value("A", "x2").has_value());
  EXPECT_EQ(t.value("B", "x2"), 4.0);
}

TEST(Geo, UnknownColumn) {
  std::istringstream csv("municipality,x1,x9\nA,1,2\n");
  try {
    parse_indicators(csv, two_defs());
    FAIL();
  } catch (const UnknownIndicator& e) {
    EXPECT_STREQ(e.what(), "x9");
  }
}

TEST(Geo, FiveDistinctValues) {
  auto l = label_values({0, 10, 20, 30, 40});
  EXPECT_EQ(l, (std::vector<OrdinalLabel>{OrdinalLabel::VeryLow, OrdinalLabel::Low, OrdinalLabel::Moderate,
                                          OrdinalLabel::High, OrdinalLabel::VeryHigh}));
}

TEST(Geo, ConstantColumnIsModerate) {
  EXPECT_EQ(label_values({7, 7, 7}), std::vector<OrdinalLabel>(3, OrdinalLabel::Moderate));
}

TEST(Geo, TwelveRandomValuesMatchOracle) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<double> v;
  for (int i = 0; i < 12; ++i) v.push_back(std::round(u(rng) * 10) / 10);
  auto got = label_values(v);
  auto want = oracle::lloyd_ranks(v, 5);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(rank(got[i]), want[i]) << i;
}

TEST(Geo, ColumnMaximumIsVeryHighAndAdverse) {
  std::istringstream csv("municipality,x1,x2\nA,1,10\nB,2,20\nC,3,30\nD,4,40\nE,5,50\n");
  auto profiles = region_profiles(parse_indicators(csv, two_defs()));
  const auto& e = profiles.back();
  EXPECT_EQ(e.labels.at("x1"), OrdinalLabel::VeryHigh);
  EXPECT_TRUE(e.adverse_ids.count("x1"));
  EXPECT_FALSE(e.adverse_ids.count("x2"));
  // High-is-favourable at the bottom of its column is adverse.
  const auto& a = profiles.front();
  EXPECT_EQ(a.labels.at("x2"), OrdinalLabel::VeryLow);
  EXPECT_TRUE(a.adverse_ids.count("x2"));
  EXPECT_EQ(adverse_severity(a, "x2"), 2);
  EXPECT_EQ(adverse_severity(a, "x1"), 0);
}

TEST(Geo, TenByFourFixtureMatchesOracle) {
  std::vector<IndicatorDef> defs{{"a", "mortality", Polarity::HighIsAdverse},
                                 {"b", "prevalence", Polarity::HighIsAdverse},
                                 {"c", "income", Polarity::HighIsFavorable},
                                 {"d", "education", Polarity::HighIsFavorable}};
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 40);
  std::ostringstream csv;
  csv << "municipality,a,b,c,d\n";
  std::vector<std::vector<double>> cols(4);
  for (int m = 0; m < 10; ++m) {
    csv << "M" << m;
    for (int c = 0; c < 4; ++c) {
      double v = u(rng) / 2.0;
      cols[c].push_back(v);
      csv << "," << v;
    }
    csv << "\n";
  }
  std::istringstream in(csv.str());
  auto profiles = region_profiles(parse_indicators(in, defs));
  ASSERT_EQ(profiles.size(), 10u);
  for (int c = 0; c < 4; ++c) {
    auto ranks = oracle::lloyd_ranks(cols[c], 5);
    for (int m = 0; m < 10; ++m) {
      const auto& p = profiles[m];
      int r = rank(p.labels.at(defs[c].id));
      EXPECT_EQ(r, ranks[m]);
      bool adverse = defs[c].polarity == Polarity::HighIsAdverse ? ranks[m] >= 3 : ranks[m] <= 1;
      EXPECT_EQ(p.adverse_ids.count(defs[c].id) == 1, adverse);
    }
  }
  std::istringstream again(csv.str());
  EXPECT_EQ(region_profile(parse_indicators(again, defs), "M3"), profiles[3]);
}

TEST(Geo, UnknownMunicipality) {
  std::istringstream csv("municipality,x1,x2\nA,1,2\n");
  EXPECT_THROW(region_profile(parse_indicators(csv, two_defs()), "Z"), UnknownMunicipality);
}

TEST(Geo, ReferenceRegionsRoundTrip) {
  auto table = ingest_indicators(fixtures::data("indicators.csv"), load_indicator_defs(fixtures::data("indicator_defs.json")));
  auto profiles = region_profiles(table);
  auto index = region_index_from_json(region_index_to_json(profiles));
  EXPECT_EQ(index, fixtures::regions());
}

// ---- embedding and profile -----------------------------------------------

TEST(Embedding, DeterministicAndNormalised) {
  LocalEmbedder e;
  auto a = e.embed("Daily smoker, twenty cigarettes");
  EXPECT_EQ(a, e.embed("Daily smoker, twenty cigarettes"));
  EXPECT_NEAR(std::sqrt(dot(a, a)), 1.0, 1e-9);
  auto zero = e.embed("   ,,, ");
  EXPECT_EQ(dot(zero, zero), 0.0);
}

TEST(Profile, HealthRecordSnippets) {
  ExternalSource ehr{SourceKind::HealthRecords,
                     {{"conditions", {{{"name", "Hypertension"}, {"onset_date", "2019-03-01"}}, {{"name", "Asthma"}}}},
                      {"medications", {{{"name", "Lisinopril 10 MG"}}}},
                      {"encounters", json::array({{{"type", "checkup"}}})}}};
  auto s = snippetize(ehr);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].text, "condition: Hypertension (2019-03-01)");
  EXPECT_EQ(s[0].date, "2019-03-01");
  EXPECT_EQ(s[1].provenance.ref, "conditions[1]");
  EXPECT_EQ(s[2].text, "medication: Lisinopril 10 MG");
}

TEST(Profile, FitnessSummary) {
  ExternalSource fit{SourceKind::FitnessTracker, {{"daily_steps", {3500, 4100, 3800, 3800}}}};
  auto s = snippetize(fit);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].text, "average daily steps: 3800 (sedentary)");
  EXPECT_EQ(fitness_band(5000), "low-active");
  EXPECT_EQ(fitness_band(9999), "somewhat-active");
  EXPECT_EQ(fitness_band(10000), "active");
}

TEST(Profile, CaptionVerbatim) {
  ExternalSource social{SourceKind::SocialPosts, {{"captions", {{{"text", "a man riding a motorcycle on a dirt road"}}}}}};
  auto s = snippetize(social);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].text, "a man riding a motorcycle on a dirt road");
}

TEST(Profile, SchemaErrors) {
  EXPECT_THROW(snippetize({SourceKind::FitnessTracker, {{"daily_steps", json::array()}}}), SchemaError);
  EXPECT_THROW(snippetize({SourceKind::FitnessTracker, {{"daily_steps", {-1}}}}), SchemaError);
  EXPECT_THROW(snippetize({SourceKind::SocialPosts, json::object()}), SchemaError);
  EXPECT_THROW(snippetize({SourceKind::HealthRecords, {{"conditions", {{{"code", 1}}}}}}), SchemaError);
  EXPECT_THROW(snippetize({SourceKind::HealthRecords, json::array()}), SchemaError);
}

TEST(Profile, LongSnippetClippedOnCodepoint) {
  std::string text(299, 'a');
  text += "\xC3\xA9tail";
  auto s = snippetize({SourceKind::SocialPosts, {{"captions", {{{"text", text}}}}}});
  EXPECT_EQ(s[0].text, std::string(299, 'a'));
}

TEST(Profile, IdsAreProfileWide) {
  UserProfile p;
  add_source(p, {SourceKind::FitnessTracker, {{"daily_steps", {1000}}}});
  add_source(p, {SourceKind::SocialPosts, {{"captions", {{{"text", "x"}}, {{"text", "y"}}}}}});
  ASSERT_EQ(p.snippets.size(), 3u);
  EXPECT_EQ(p.snippets[2].id, "ev-0002");
  EXPECT_EQ(p.shared_kinds.size(), 2u);
  EXPECT_EQ(user_profile_from_json(to_json(p)), p);
}

TEST(Retrieval, EmptyProfile) {
  LocalEmbedder e;
  UserProfile p;
  EXPECT_TRUE(retrieve_evidence(p, fixtures::kb().factor("ls_smoking"), 5, e).hits.empty());
}

TEST(Retrieval, QueryTextRanksFirst) {
  LocalEmbedder e;
  const auto& f = fixtures::kb().factor("hs_diabetes");
  UserProfile p;
  add_source(p, {SourceKind::SocialPosts,
                 {{"captions", {{{"text", "a dog on a beach"}}, {{"text", factor_query(f)}}, {{"text", "glucose"}}}}}});
  auto b = retrieve_evidence(p, f, 5, e);
  ASSERT_FALSE(b.hits.empty());
  EXPECT_EQ(b.hits[0].snippet_id, "ev-0001");
  EXPECT_DOUBLE_EQ(b.hits[0].score, 1.0);
}

TEST(Retrieval, TwentySnippetsMatchExhaustiveRanking) {
  LocalEmbedder e;
  const auto& kb = fixtures::kb();
  std::mt19937_64 rng(20);
  const std::vector<std::string> words{"smoking", "diabetes", "glucose", "run", "beach", "tobacco", "heart",
                                       "pressure", "wine", "beer", "insulin", "walk", "cigarette", "dog"};
  UserProfile p;
  json captions = json::array();
  for (int i = 0; i < 20; ++i) {
    std::string t;
    int n = 1 + static_cast<int>(rng() % 4);
    for (int w = 0; w < n; ++w) t += words[rng() % words.size()] + " ";
    captions.push_back({{"text", t}});
  }
  add_source(p, {SourceKind::SocialPosts, {{"captions", captions}}});
  std::vector<std::pair<std::string, std::string>> id_text;
  for (const auto& s : p.snippets) id_text.push_back({s.id, s.text});
  for (const auto& f : kb.factors) {
    std::vector<std::string> got;
    for (const auto& h : retrieve_evidence(p, f, 5, e).hits) got.push_back(h.snippet_id);
    EXPECT_EQ(got, oracle::rank_ids(factor_query(f), id_text, 5)) << f.id;
  }
}

// ---- scoring --------------------------------------------------------------

namespace {

KnowledgeBase three_factor_kb(bool with_rule) {
  auto factor = [](std::string id, int w) {
    RiskFactor f;
    f.id = id;
    f.name = id;
    f.summary = id;
    f.question_text = id + "?";
    f.choices = {{"no", 0}, {"yes", w}};
    return f;
  };
  std::vector<InteractionRule> rules;
  if (with_rule) rules.push_back({"r", {{"f1", 1}, {"f2", 1}}, 4});
  return KnowledgeBase({factor("f1", 2), factor("f2", 3), factor("f3", 5)}, rules, {});
}

CompletedQuestionnaire questionnaire(std::map<std::string, int> answers) {
  CompletedQuestionnaire q;
  q.session_id = "s";
  q.final_answers = std::move(answers);
  return q;
}

}  // namespace

TEST(Scoring, AllOptimalIsZero) {
  std::map<std::string, int> zeros;
  for (const auto& f : fixtures::kb().factors) zeros[f.id] = 0;
  EXPECT_EQ(risk_score(questionnaire(zeros), fixtures::kb()).raw_score, 0);
  EXPECT_EQ(true_risk_score(zeros, fixtures::kb()), 0);
}

TEST(Scoring, HandExample) {
  auto q = questionnaire({{"f1", 1}, {"f2", 1}, {"f3", 0}});
  EXPECT_EQ(risk_score(q, three_factor_kb(false)).raw_score, 5);
  auto r = risk_score(q, three_factor_kb(true));
  EXPECT_EQ(r.raw_score, 9);
  ASSERT_EQ(r.interaction_hits.size(), 1u);
  EXPECT_EQ(r.interaction_hits[0].bonus, 4);
  EXPECT_DOUBLE_EQ(r.normalized_score, 100.0 * 9 / 14);
  EXPECT_EQ(to_json(r), to_json(risk_score(q, three_factor_kb(true))));
}

TEST(Scoring, Errors) {
  auto kb = three_factor_kb(false);
  EXPECT_THROW(risk_score(questionnaire({{"f1", 2}}), kb), InvalidChoice);
  EXPECT_THROW(risk_score(questionnaire({{"zz", 0}}), kb), UnknownFactor);
  EXPECT_THROW(true_risk_score({{"f1", 0}, {"f2", 0}}, kb), MissingFactor);
}

TEST(Scoring, RandomTenFactorKbMatchesOracle) {
  std::mt19937_64 rng(10);
  auto kb = oracle::random_kb(rng, 10, 3);
  for (int i = 0; i < 50; ++i) {
    auto answers = oracle::random_answers(rng, kb, true);
    EXPECT_EQ(true_risk_score(answers, kb), oracle::brute_score(answers, kb));
  }
}

namespace {

CompletedQuestionnaire trust_fixture(double confidence) {
  const auto& kb = fixtures::kb();
  CompletedQuestionnaire q;
  q.session_id = "t";
  q.mode = Mode::Dynamic;
  int n = 0;
  for (const auto& f : kb.factors) {
    if (f.category == Category::PersonalDetails || n == 10) continue;
    llm::Prediction p{f.id, 0, confidence, "e"};
    q.predictions_snapshot.push_back(p);
    // The first three are corrected to the riskiest answer.
    if (n < 3) {
      q.final_answers[f.id] = static_cast<int>(f.choices.size()) - 1;
      q.provenance[f.id] = AnswerProvenance::PredictedCorrected;
    } else {
      q.final_answers[f.id] = 0;
      q.provenance[f.id] = AnswerProvenance::PredictedAccepted;
    }
    ++n;
  }
  return q;
}

}  // namespace

TEST(Scoring, TrustFlagFixture) {
  LocalEmbedder e;
  auto high = detect_discrepancies(trust_fixture(0.9), fixtures::kb(), e);
  EXPECT_EQ(high.discrepancies.size(), 3u);
  EXPECT_TRUE(high.trust_flag);
  auto low = detect_discrepancies(trust_fixture(0.5), fixtures::kb(), e);
  EXPECT_TRUE(low.discrepancies.empty());
  EXPECT_FALSE(low.trust_flag);
}

TEST(Scoring, NoCorrectionsNoFlag) {
  auto q = trust_fixture(0.9);
  for (auto& [id, prov] : q.provenance) {
    prov = AnswerProvenance::PredictedAccepted;
    q.final_answers[id] = 0;
  }
  LocalEmbedder e;
  auto d = detect_discrepancies(q, fixtures::kb(), e);
  EXPECT_TRUE(d.discrepancies.empty());
  EXPECT_FALSE(d.trust_flag);
}

// ---- synth ----------------------------------------------------------------

TEST(Synth, SingleApplicantDeterministic) {
  auto c = fixtures::cohort_config();
  c.size = 1;
  auto a = cohort_to_jsonl(generate_cohort(c, fixtures::kb(), fixtures::regions(), fixtures::pools()));
  auto b = cohort_to_jsonl(generate_cohort(c, fixtures::kb(), fixtures::regions(), fixtures::pools()));
  EXPECT_EQ(a, b);
}

TEST(Synth, ApplicantRegeneratesAlone) {
  const auto& cohort = fixtures::cohort();
  auto buckets = bucket_assignment(fixtures::cohort_config());
  auto a = generate_applicant(fixtures::cohort_config(), fixtures::kb(), fixtures::regions(), fixtures::pools(), 41,
                              buckets[41]);
  EXPECT_EQ(to_json(a), to_json(cohort[41]));
}

TEST(Synth, NoSharingNoSnippets) {
  auto c = fixtures::cohort_config();
  for (auto& [kind, p] : c.share_probabilities) p = 0;
  for (const auto& a : generate_cohort(c, fixtures::kb(), fixtures::regions(), fixtures::pools())) {
    EXPECT_TRUE(a.profile.snippets.empty());
    EXPECT_FALSE(a.shares_any_source());
  }
}

TEST(Synth, AgeGenderHistogramWithinTenPercent) {
  const auto& c = fixtures::cohort_config();
  const auto& cohort = fixtures::cohort();
  ASSERT_EQ(cohort.size(), 85u);
  for (const auto& b : c.age_gender_distribution) {
    int n = 0;
    for (const auto& a : cohort) {
      const auto& d = a.profile.details;
      if (d.gender == b.gender && d.age >= b.age_min && d.age <= b.age_max) ++n;
    }
    double target = b.probability * 85;
    EXPECT_LE(std::abs(n - target), std::max(0.1 * target, 1.0)) << b.age_min;
  }
}

TEST(Synth, CohortConsistency) {
  const auto& kb = fixtures::kb();
  for (const auto& a : fixtures::cohort()) {
    ASSERT_EQ(a.ground_truth.size(), kb.factors.size());
    EXPECT_EQ(a.true_score, true_risk_score(a.ground_truth, kb));
    EXPECT_TRUE(a.profile.region.has_value());
    std::size_t shared_snippets = 0;
    for (const auto& s : a.sources)
      if (s.shared) shared_snippets += snippetize(s.source).size();
    EXPECT_EQ(a.profile.snippets.size(), shared_snippets);
  }
  std::istringstream in(cohort_to_jsonl(fixtures::cohort()));
  EXPECT_EQ(cohort_to_jsonl(cohort_from_jsonl(in)), cohort_to_jsonl(fixtures::cohort()));
}

TEST(Synth, BaseDistributionWithoutModifiers) {
  const auto& f = fixtures::kb().factor("hs_diabetes");
  auto d = choice_distribution(f, {"a dog on a beach"}, std::nullopt, {});
  EXPECT_NEAR(d[0], 0.7, 1e-15);
  EXPECT_NEAR(d[1], 0.3 / 1.75, 1e-15);
  EXPECT_NEAR(d[3], 0.075 / 1.75, 1e-15);
}

TEST(Synth, EvidenceAndRegionMultiplyOdds) {
  const auto& f = fixtures::kb().factor("hs_diabetes");
  const auto& region = fixtures::regions().at("Cascais");
  ASSERT_EQ(region.labels.at("diabetes_prevalence"), OrdinalLabel::VeryHigh);
  std::vector<std::string> evidence{"condition: diabetes mellitus type 2 (2016-05-30)"};
  auto d = choice_distribution(f, evidence, region, {});
  // Closed form: base masses with the riskiest choice multiplied by 4 and 2.
  const double want[] = {7.0 / 13, 12.0 / 91, 6.0 / 91, 24.0 / 91};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(d[i], want[i], 1e-12);

  Rng rng(622);
  std::vector<int> counts(4);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[rng.weighted(d)];
  for (int i = 0; i < 4; ++i) {
    double sd = std::sqrt(want[i] * (1 - want[i]) / n);
    EXPECT_NEAR(counts[i] / double(n), want[i], 4 * sd) << i;
  }
}

TEST(Synth, ScriptedRespondent) {
  ScriptedRespondent r(std::map<std::string, int>{{"f", 2}});
  EXPECT_EQ(r.answer("f"), 2);
  EXPECT_TRUE(std::holds_alternative<Accept>(r.review({"f", 2, 0.9, ""})));
  auto c = r.review({"f", 0, 0.9, ""});
  ASSERT_TRUE(std::holds_alternative<Correct>(c));
  EXPECT_EQ(std::get<Correct>(c).choice_index, 2);
  EXPECT_THROW(r.answer("g"), UnknownFactor);
}

TEST(Synth, ConfigValidation) {
  auto c = fixtures::cohort_config();
  c.age_gender_distribution[0].probability += 0.2;
  EXPECT_THROW(validate(c), ConfigError);
  auto d = fixtures::cohort_config();
  d.size = 0;
  EXPECT_THROW(validate(d), ConfigError);
}

// ---- eval -----------------------------------------------------------------

TEST(Metrics, Mae) {
  EXPECT_EQ(mae({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(mae({1, 2}, {3, 2}), 1.0);
  EXPECT_EQ(mae({5}, {2}), 3.0);
  EXPECT_THROW(mae({1}, {1, 2}), LengthMismatch);
  EXPECT_THROW(mae({}, {}), EmptyInput);
}

TEST(Metrics, Pearson) {
  EXPECT_DOUBLE_EQ(pearson({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(pearson({1, 2, 3}, {-1, -2, -3}), -1.0);
  // 11 / sqrt(130)
  EXPECT_NEAR(pearson({1, 2, 3, 4}, {2, 4, 5, 9}), 0.96476382123773215, 1e-12);
  EXPECT_THROW(pearson({1}, {1}), DegenerateInput);
  EXPECT_THROW(pearson({1, 1}, {1, 2}), DegenerateInput);
}

TEST(Eval, SingleTraditionalApplicant) {
  std::vector<SyntheticApplicant> one{fixtures::cohort()[0]};
  auto records = run_experiment(one, fixtures::kb(), fixtures::regions(), parse_approaches("traditional"));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].questions_answered, 30);
  EXPECT_EQ(records[0].prefilled, 0);
}

TEST(Eval, DynamicWithoutSourcesStaysUnderCap) {
  auto a = fixtures::cohort()[0];
  for (auto& s : a.sources) s.shared = false;
  a.profile.snippets.clear();
  a.profile.shared_kinds.clear();
  auto records = run_experiment({a}, fixtures::kb(), fixtures::regions(), parse_approaches("dynamic-mock"));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].prefilled, 0);
  EXPECT_LE(records[0].questions_answered, 30);
  EXPECT_GT(records[0].asked, 0);
}

TEST(Eval, DeterministicRecords) {
  std::vector<SyntheticApplicant> some(fixtures::cohort().begin(), fixtures::cohort().begin() + 10);
  auto approaches = parse_approaches("traditional,dynamic-mock");
  auto a = run_experiment(some, fixtures::kb(), fixtures::regions(), approaches);
  auto b = run_experiment(some, fixtures::kb(), fixtures::regions(), approaches);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_outcome(a[i], b[i])) << i;
}

TEST(Eval, ThreeApproachRows) {
  std::vector<RunRecord> records;
  for (int i = 0; i < 85; ++i)
    for (const char* ap : {"traditional", "dynamic-mock", "dynamic-remote:m"})
      records.push_back({"A" + std::to_string(i), ap, 30, 0, 30, 0, i, i + (i % 3), 0, 0, false, false, {}});
  auto report = build_report(records);
  ASSERT_EQ(report.approaches.size(), 3u);
  EXPECT_EQ(report.approaches[2].approach, "dynamic-remote:m");
  EXPECT_EQ(report.approaches[0].records, 85u);

  std::vector<RunRecord> single(records.begin(), records.begin() + 1);
  EXPECT_EQ(build_report(single).approaches.size(), 1u);
  EXPECT_THROW(build_report({}), EmptyInput);
}

TEST(Eval, ReportRoundTripRecomputes) {
  std::vector<SyntheticApplicant> some(fixtures::cohort().begin(), fixtures::cohort().begin() + 12);
  auto report = build_report(run_experiment(some, fixtures::kb(), fixtures::regions(),
                                            parse_approaches("traditional,dynamic-mock")));
  auto parsed = eval_report_from_json(json::parse(to_json(report).dump()));
  ASSERT_EQ(parsed.approaches.size(), 2u);
  for (const auto& s : parsed.approaches) EXPECT_EQ(s, summarize(s.approach, parsed.records));
  EXPECT_EQ(parsed.records, report.records);
}

TEST(Eval, FailedRecordsExcluded) {
  std::vector<RunRecord> records{{"A", "x", 10, 0, 10, 0, 5, 5, 0, 0, false, false, {}},
                                 {"B", "x", 0, 0, 0, 0, 0, 90, 0, 0, false, true, "down"}};
  auto s = summarize("x", records);
  EXPECT_EQ(s.records, 2u);
  EXPECT_EQ(s.failed, 1u);
  EXPECT_EQ(s.mae, 0.0);
  EXPECT_FALSE(s.pearson.has_value());
}

TEST(Eval, ApproachNames) {
  EXPECT_EQ(approach_from_string("dynamic-remote:gpt-4o").model, "gpt-4o");
  EXPECT_EQ(approach_from_string("dynamic-remote").name(), "dynamic-remote");
  EXPECT_THROW(approach_from_string("psychic"), ConfigError);
}
