#pragma once

// Traditional-vs-dynamic comparison over a synthetic cohort.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "arquest/embedding.hpp"
#include "arquest/engine.hpp"
#include "arquest/error.hpp"
#include "arquest/kb.hpp"
#include "arquest/llm/mock.hpp"
#include "arquest/llm/remote.hpp"
#include "arquest/scoring.hpp"
#include "arquest/synth.hpp"

namespace arquest {

enum class ApproachKind { Traditional, DynamicMock, DynamicRemote };

struct Approach {
  ApproachKind kind = ApproachKind::Traditional;
  std::string model;  // DynamicRemote only

  std::string name() const {
    switch (kind) {
      case ApproachKind::Traditional: return "traditional";
      case ApproachKind::DynamicMock: return "dynamic-mock";
      case ApproachKind::DynamicRemote: return model.empty() ? "dynamic-remote" : "dynamic-remote:" + model;
    }
    return "?";
  }
  bool operator==(const Approach&) const = default;
};

// "traditional", "dynamic-mock", "dynamic-remote" or "dynamic-remote:<model>".
inline Approach approach_from_string(const std::string& s) {
  if (s == "traditional") return {ApproachKind::Traditional, {}};
  if (s == "dynamic-mock") return {ApproachKind::DynamicMock, {}};
  if (s == "dynamic-remote") return {ApproachKind::DynamicRemote, {}};
  if (s.rfind("dynamic-remote:", 0) == 0) return {ApproachKind::DynamicRemote, s.substr(15)};
  throw ConfigError("unknown approach '" + s + "'");
}

inline std::vector<Approach> parse_approaches(const std::string& list) {
  std::vector<Approach> out;
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(approach_from_string(item));
  if (out.empty()) throw ConfigError("no approaches given");
  return out;
}

struct RunRecord {
  std::string applicant_id;
  std::string approach;
  int questions_answered = 0;
  int prefilled = 0;
  int asked = 0;
  int shared_sources = 0;
  int raw_score = 0;
  int true_score = 0;
  double forecast_latency = 0;
  double selection_latency = 0;
  bool trust_flag = false;
  bool failed = false;
  std::string error;

  bool operator==(const RunRecord&) const = default;
};

// Equality ignoring wall-clock fields.
inline bool same_outcome(const RunRecord& a, const RunRecord& b) {
  RunRecord x = a, y = b;
  x.forecast_latency = y.forecast_latency = 0;
  x.selection_latency = y.selection_latency = 0;
  return x == y;
}

inline json to_json(const RunRecord& r) {
  json j{{"applicant_id", r.applicant_id},
         {"approach", r.approach},
         {"questions_answered", r.questions_answered},
         {"prefilled", r.prefilled},
         {"asked", r.asked},
         {"shared_sources", r.shared_sources},
         {"raw_score", r.raw_score},
         {"true_score", r.true_score},
         {"forecast_latency", r.forecast_latency},
         {"selection_latency", r.selection_latency},
         {"trust_flag", r.trust_flag},
         {"failed", r.failed}};
  if (r.failed) j["error"] = r.error;
  return j;
}

inline RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  try {
    r.applicant_id = j.at("applicant_id").get<std::string>();
    r.approach = j.at("approach").get<std::string>();
    r.questions_answered = j.at("questions_answered").get<int>();
    r.prefilled = j.value("prefilled", 0);
    r.asked = j.value("asked", 0);
    r.shared_sources = j.value("shared_sources", 0);
    r.raw_score = j.at("raw_score").get<int>();
    r.true_score = j.at("true_score").get<int>();
    r.forecast_latency = j.at("forecast_latency").get<double>();
    r.selection_latency = j.at("selection_latency").get<double>();
    r.trust_flag = j.at("trust_flag").get<bool>();
    r.failed = j.at("failed").get<bool>();
    r.error = j.value("error", "");
  } catch (const json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

inline double mae(const std::vector<double>& scores, const std::vector<double>& truths) {
  if (scores.size() != truths.size()) throw LengthMismatch("mae: vectors differ in length");
  if (scores.empty()) throw EmptyInput("mae: empty input");
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += std::abs(scores[i] - truths[i]);
  return total / static_cast<double>(scores.size());
}

// Two-pass product-moment correlation, clamped to [-1, 1].
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson: vectors differ in length");
  if (x.size() < 2) throw DegenerateInput("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw DegenerateInput("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Experiment driver

struct ExperimentConfig {
  EngineConfig engine;
  llm::MockConfig mock;
  std::optional<llm::RemoteConfig> remote;
  DiscrepancyConfig discrepancy;
};

// Drives one full session with the scripted respondent.
inline RunRecord run_applicant(const SyntheticApplicant& a, const Approach& approach, const Engine& engine,
                               const Embedder& embedder, llm::Gateway* gateway, const DiscrepancyConfig& dcfg) {
  RunRecord r;
  r.applicant_id = a.applicant_id;
  r.approach = approach.name();
  r.true_score = a.true_score;
  for (const auto& s : a.sources) r.shared_sources += s.shared ? 1 : 0;
  const ScriptedRespondent respondent(a);
  const Mode mode = approach.kind == ApproachKind::Traditional ? Mode::Traditional : Mode::Dynamic;

  try {
    Session s = engine.start_session(a.profile.details, mode, a.applicant_id + "-" + r.approach);
    for (const auto& src : a.sources)
      if (src.shared) engine.link_source(s, src.source);
    if (mode == Mode::Dynamic) {
      engine.forecast(s, *gateway);
      for (const auto& item : std::vector<PrefilledItem>(s.prefilled))
        if (item.review == ReviewStatus::Pending)
          engine.review(s, item.prediction.factor_id, respondent.review(item.prediction));
    }
    const std::size_t guard = engine.kb().factors.size() + 1;
    for (std::size_t round = 0; round <= guard; ++round) {
      NextStep step = engine.next_question(s, gateway);
      if (std::holds_alternative<Done>(step)) break;
      const auto& id = std::get<AskFactor>(step).factor_id;
      engine.submit_answer(s, id, respondent.answer(id));
    }
    if (s.state != SessionState::Completed) throw StateError("session did not complete");
    auto q = engine.finalize(s);
    auto report = assess(q, engine.kb(), embedder, dcfg);
    r.prefilled = static_cast<int>(s.prefilled.size());
    r.asked = static_cast<int>(s.asked.size());
    r.questions_answered = static_cast<int>(s.question_count());
    r.raw_score = report.raw_score;
    r.trust_flag = report.trust_flag;
    r.forecast_latency = s.clock.count("forecast") ? s.clock.at("forecast") : 0.0;
    r.selection_latency = s.clock.count("selection") ? s.clock.at("selection") : 0.0;
  } catch (const EndpointError& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

inline std::vector<RunRecord> run_experiment(const std::vector<SyntheticApplicant>& cohort, const KnowledgeBase& kb,
                                             const RegionIndex& regions, const std::vector<Approach>& approaches,
                                             const ExperimentConfig& config = {},
                                             const Embedder* embedder = nullptr) {
  LocalEmbedder local;
  const Embedder& emb = embedder ? *embedder : local;
  Engine engine(kb, emb, &regions, config.engine);
  std::unique_ptr<llm::RemoteGateway> remote;
  for (const auto& ap : approaches) {
    if (ap.kind != ApproachKind::DynamicRemote || remote) continue;
    llm::RemoteConfig rc = config.remote.value_or(llm::RemoteConfig{});
    if (!ap.model.empty()) rc.model = ap.model;
    remote = std::make_unique<llm::RemoteGateway>(rc);
  }

  std::vector<RunRecord> out;
  for (const auto& a : cohort) {
    for (const auto& f : kb.factors)
      if (!a.ground_truth.count(f.id))
        throw ConfigError("applicant " + a.applicant_id + " lacks ground truth for '" + f.id + "'");
    for (const auto& ap : approaches) {
      if (ap.kind == ApproachKind::DynamicMock) {
        llm::MockModel mock(kb, a.ground_truth, config.mock);
        out.push_back(run_applicant(a, ap, engine, emb, &mock, config.discrepancy));
      } else {
        out.push_back(run_applicant(a, ap, engine, emb, remote.get(), config.discrepancy));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct ApproachSummary {
  std::string approach;
  std::size_t records = 0;
  std::size_t failed = 0;
  double mean_questions = 0;
  double mae = 0;
  std::optional<double> pearson;
  double mean_forecast_latency = 0;
  double mean_selection_latency = 0;
  double trust_flag_rate = 0;

  bool operator==(const ApproachSummary&) const = default;
};

struct EvalReport {
  std::vector<ApproachSummary> approaches;  // first-appearance order
  std::vector<RunRecord> records;
};

// Aggregates over the approach's non-failed records.
inline ApproachSummary summarize(const std::string& approach, const std::vector<RunRecord>& records) {
  ApproachSummary s;
  s.approach = approach;
  std::vector<double> scores, truths;
  double questions = 0, fl = 0, sl = 0, flags = 0;
  for (const auto& r : records) {
    if (r.approach != approach) continue;
    ++s.records;
    if (r.failed) {
      ++s.failed;
      continue;
    }
    scores.push_back(r.raw_score);
    truths.push_back(r.true_score);
    questions += r.questions_answered;
    fl += r.forecast_latency;
    sl += r.selection_latency;
    flags += r.trust_flag ? 1 : 0;
  }
  if (scores.empty()) return s;
  const double n = static_cast<double>(scores.size());
  s.mean_questions = questions / n;
  s.mae = mae(scores, truths);
  try {
    s.pearson = pearson(scores, truths);
  } catch (const DegenerateInput&) {
    s.pearson.reset();
  }
  s.mean_forecast_latency = fl / n;
  s.mean_selection_latency = sl / n;
  s.trust_flag_rate = flags / n;
  return s;
}

inline EvalReport build_report(const std::vector<RunRecord>& records) {
  if (records.empty()) throw EmptyInput("build_report: no records");
  EvalReport report;
  report.records = records;
  std::vector<std::string> order;
  for (const auto& r : records)
    if (std::find(order.begin(), order.end(), r.approach) == order.end()) order.push_back(r.approach);
  for (const auto& name : order) report.approaches.push_back(summarize(name, records));
  return report;
}

inline json to_json(const ApproachSummary& s) {
  json j{{"approach", s.approach},
         {"records", s.records},
         {"failed", s.failed},
         {"mean_questions", s.mean_questions},
         {"mae", s.mae},
         {"mean_forecast_latency", s.mean_forecast_latency},
         {"mean_selection_latency", s.mean_selection_latency},
         {"trust_flag_rate", s.trust_flag_rate}};
  j["pearson"] = s.pearson ? json(*s.pearson) : json(nullptr);
  return j;
}

inline ApproachSummary approach_summary_from_json(const json& j) {
  ApproachSummary s;
  s.approach = j.at("approach").get<std::string>();
  s.records = j.at("records").get<std::size_t>();
  s.failed = j.at("failed").get<std::size_t>();
  s.mean_questions = j.at("mean_questions").get<double>();
  s.mae = j.at("mae").get<double>();
  if (!j.at("pearson").is_null()) s.pearson = j.at("pearson").get<double>();
  s.mean_forecast_latency = j.at("mean_forecast_latency").get<double>();
  s.mean_selection_latency = j.at("mean_selection_latency").get<double>();
  s.trust_flag_rate = j.at("trust_flag_rate").get<double>();
  return s;
}

inline json to_json(const EvalReport& r) {
  json approaches = json::array();
  for (const auto& a : r.approaches) approaches.push_back(to_json(a));
  json records = json::array();
  for (const auto& rec : r.records) records.push_back(to_json(rec));
  return json{{"approaches", approaches}, {"records", records}};
}

inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    for (const auto& a : j.at("approaches")) r.approaches.push_back(approach_summary_from_json(a));
    for (const auto& rec : j.at("records")) r.records.push_back(run_record_from_json(rec));
  } catch (const json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
  return r;
}

inline std::string summary_table(const EvalReport& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %7s %6s %9s %8s %8s %10s %10s %7s\n", "approach", "records", "failed",
                "questions", "MAE", "pearson", "forecast_s", "select_s", "trust");
  out += line;
  for (const auto& a : r.approaches) {
    char pearson[16];
    if (a.pearson)
      std::snprintf(pearson, sizeof pearson, "%.4f", *a.pearson);
    else
      std::snprintf(pearson, sizeof pearson, "n/a");
    std::snprintf(line, sizeof line, "%-24s %7zu %6zu %9.2f %8.3f %8s %10.4f %10.4f %7.3f\n", a.approach.c_str(),
                  a.records, a.failed, a.mean_questions, a.mae, pearson, a.mean_forecast_latency,
                  a.mean_selection_latency, a.trust_flag_rate);
    out += line;
  }
  return out;
}

}  // namespace arquest
