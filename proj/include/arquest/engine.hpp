#pragma once

// Subscription session state machine for the traditional and dynamic flows.
//
//   Created -> InsightsLinked -> (Forecasted, dynamic only) -> Questioning -> Completed
//
// Operations that consult the model are split into a const `run_*` step,
// which talks to the gateway, and an `apply_*` step that mutates the
// session. The event log records the outcome of the former so sessions can
// be rebuilt without calling the model again.

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "arquest/embedding.hpp"
#include "arquest/error.hpp"
#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/llm/prompts.hpp"
#include "arquest/llm/replies.hpp"
#include "arquest/llm/types.hpp"
#include "arquest/log.hpp"
#include "arquest/profile.hpp"

namespace arquest {

using llm::Prediction;

enum class Mode { Traditional, Dynamic };
enum class SessionState { Created, InsightsLinked, Forecasted, Questioning, Completed };
enum class ReviewStatus { Pending, Accepted, Corrected };
enum class AnswerProvenance { PredictedAccepted, PredictedCorrected, AskedDirectly };

inline std::string_view to_string(Mode m) { return m == Mode::Traditional ? "traditional" : "dynamic"; }

inline Mode mode_from_string(std::string_view s) {
  if (s == "traditional") return Mode::Traditional;
  if (s == "dynamic") return Mode::Dynamic;
  throw SchemaError("unknown mode '" + std::string(s) + "'");
}

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Created: return "Created";
    case SessionState::InsightsLinked: return "InsightsLinked";
    case SessionState::Forecasted: return "Forecasted";
    case SessionState::Questioning: return "Questioning";
    case SessionState::Completed: return "Completed";
  }
  return "?";
}

inline std::string_view to_string(ReviewStatus r) {
  switch (r) {
    case ReviewStatus::Pending: return "Pending";
    case ReviewStatus::Accepted: return "Accepted";
    case ReviewStatus::Corrected: return "Corrected";
  }
  return "?";
}

inline std::string_view to_string(AnswerProvenance p) {
  switch (p) {
    case AnswerProvenance::PredictedAccepted: return "PredictedAccepted";
    case AnswerProvenance::PredictedCorrected: return "PredictedCorrected";
    case AnswerProvenance::AskedDirectly: return "AskedDirectly";
  }
  return "?";
}

struct PrefilledItem {
  Prediction prediction;
  ReviewStatus review = ReviewStatus::Pending;
  std::optional<int> corrected_index;

  bool operator==(const PrefilledItem&) const = default;
};

inline constexpr int kDefaultQuestionCap = 30;

struct Session {
  std::string id;
  Mode mode = Mode::Traditional;
  SessionState state = SessionState::Created;
  UserProfile profile;
  std::vector<PrefilledItem> prefilled;
  std::vector<std::string> asked;
  std::map<std::string, int> answers;
  int question_cap = kDefaultQuestionCap;
  bool review_phase = true;
  std::map<std::string, double> clock;  // phase -> elapsed seconds
  std::optional<std::string> stop_reason;
  bool finalized = false;

  std::size_t pending_reviews() const {
    return static_cast<std::size_t>(std::count_if(prefilled.begin(), prefilled.end(), [](const PrefilledItem& p) {
      return p.review == ReviewStatus::Pending;
    }));
  }
  // Most recent Ask still waiting for an answer.
  std::optional<std::string> pending_ask() const {
    if (asked.empty() || answers.count(asked.back())) return std::nullopt;
    return asked.back();
  }
  std::size_t question_count() const { return prefilled.size() + asked.size(); }

  bool operator==(const Session&) const = default;
};

struct CompletedQuestionnaire {
  std::string session_id;
  Mode mode = Mode::Traditional;
  std::map<std::string, int> final_answers;
  std::map<std::string, AnswerProvenance> provenance;
  std::vector<Prediction> predictions_snapshot;

  bool operator==(const CompletedQuestionnaire&) const = default;
};

struct Accept {
  bool operator==(const Accept&) const = default;
};
struct Correct {
  int choice_index = 0;
  bool operator==(const Correct&) const = default;
};
using ReviewDecision = std::variant<Accept, Correct>;

struct AskFactor {
  std::string factor_id;
  bool operator==(const AskFactor&) const = default;
};
struct Done {
  std::string reason;
  bool operator==(const Done&) const = default;
};
using NextStep = std::variant<AskFactor, Done>;

struct ForecastOutcome {
  std::vector<Prediction> predictions;
  std::vector<llm::Exchange> exchanges;
  double latency = 0;
};

struct SelectionOutcome {
  NextStep step;
  std::vector<llm::Exchange> exchanges;
  double latency = 0;
  bool transition_only = false;  // re-issued pending ask; nothing to record
};

struct EngineConfig {
  int question_cap = kDefaultQuestionCap;
  bool review_phase = true;
  std::size_t retrieval_width = kDefaultRetrievalWidth;
  int max_reprompts = 2;
};

inline std::string random_session_id() {
  static thread_local std::mt19937_64 rng{[] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

class Engine {
 public:
  Engine(const KnowledgeBase& kb, const Embedder& embedder, const RegionIndex* regions = nullptr,
         EngineConfig config = {})
      : kb_(&kb), embedder_(&embedder), regions_(regions), config_(config) {
    if (config_.question_cap < 1) throw ConfigError("question cap must be at least 1");
  }

  const KnowledgeBase& kb() const { return *kb_; }
  const EngineConfig& config() const { return config_; }

  // ---- insights ----------------------------------------------------------

  Session start_session(const PersonalDetails& details, Mode mode, std::string id = {}) const {
    return start_session(details, mode, std::move(id), config_.question_cap, config_.review_phase);
  }

  Session start_session(const PersonalDetails& details, Mode mode, std::string id, int question_cap,
                        bool review_phase) const {
    validate(details);
    Session s;
    s.id = id.empty() ? random_session_id() : std::move(id);
    s.mode = mode;
    s.question_cap = question_cap;
    s.review_phase = review_phase;
    s.profile.details = details;
    if (regions_) {
      auto it = regions_->find(details.municipality);
      if (it == regions_->end()) throw InvalidProfile("unknown municipality '" + details.municipality + "'");
      s.profile.region = it->second;
    }
    s.state = SessionState::InsightsLinked;
    return s;
  }

  std::size_t link_source(Session& s, const ExternalSource& source) const {
    require_state(s, SessionState::InsightsLinked, "link a source");
    UserProfile next = s.profile;
    auto n = add_source(next, source);
    s.profile = std::move(next);
    return n;
  }

  // ---- forecasting -------------------------------------------------------

  std::vector<EvidenceBundle> gather_evidence(const UserProfile& profile) const {
    std::vector<EvidenceBundle> out;
    auto vecs = embed_snippets(profile, *embedder_);
    for (const auto& f : kb_->factors) {
      if (f.category == Category::PersonalDetails) continue;
      out.push_back(rank_evidence(profile, vecs, f, config_.retrieval_width, *embedder_));
    }
    return out;
  }

  ForecastOutcome run_forecast(const Session& s, llm::Gateway& gateway) const {
    if (s.mode != Mode::Dynamic) throw StateError("forecast is only available in dynamic sessions");
    require_state(s, SessionState::InsightsLinked, "forecast");
    auto start = std::chrono::steady_clock::now();
    ForecastOutcome out;

    auto bundles = gather_evidence(s.profile);
    std::vector<RiskFactor> prompted;
    for (const auto& b : bundles)
      if (!b.hits.empty()) prompted.push_back(kb_->factor(b.factor_id));

    if (!prompted.empty()) {
      const llm::Prompt base = llm::build_forecast_prompt(prompted, bundles, s.profile);
      auto parsed = with_reprompts(gateway, base, out.exchanges, [&](const llm::ModelReply& r) {
        return llm::parse_forecast_reply(r, prompted);
      });
      if (parsed) {
        out.predictions = std::move(*parsed);
      } else {
        log::warn("forecast: giving up after repeated malformed replies; continuing without predictions");
      }
    }
    // Keep KB order and respect the question budget.
    std::sort(out.predictions.begin(), out.predictions.end(), [&](const Prediction& a, const Prediction& b) {
      return *kb_->position(a.factor_id) < *kb_->position(b.factor_id);
    });
    if (out.predictions.size() > static_cast<std::size_t>(s.question_cap))
      out.predictions.resize(static_cast<std::size_t>(s.question_cap));
    out.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

  void apply_forecast(Session& s, const ForecastOutcome& outcome) const {
    if (s.mode != Mode::Dynamic) throw StateError("forecast is only available in dynamic sessions");
    require_state(s, SessionState::InsightsLinked, "forecast");
    std::set<std::string> seen;
    for (const auto& p : outcome.predictions) {
      const auto& f = kb_->factor(p.factor_id);
      if (!f.valid_choice(p.choice_index)) throw InvalidChoice("prediction for '" + p.factor_id + "' out of range");
      if (!seen.insert(p.factor_id).second) throw StateError("duplicate prediction for '" + p.factor_id + "'");
    }
    if (outcome.predictions.size() > static_cast<std::size_t>(s.question_cap))
      throw StateError("more predictions than the question cap");
    s.prefilled.clear();
    for (const auto& p : outcome.predictions) s.prefilled.push_back({p, ReviewStatus::Pending, std::nullopt});
    s.clock["forecast"] += outcome.latency;
    s.state = SessionState::Forecasted;
    if (!s.review_phase) {
      for (auto& item : s.prefilled) {
        item.review = ReviewStatus::Accepted;
        s.answers[item.prediction.factor_id] = item.prediction.choice_index;
      }
      s.state = SessionState::Questioning;
    }
  }

  void forecast(Session& s, llm::Gateway& gateway) const { apply_forecast(s, run_forecast(s, gateway)); }

  void review(Session& s, const std::string& factor_id, const ReviewDecision& decision) const {
    require_state(s, SessionState::Forecasted, "review a prediction");
    auto it = std::find_if(s.prefilled.begin(), s.prefilled.end(),
                           [&](const PrefilledItem& p) { return p.prediction.factor_id == factor_id; });
    if (it == s.prefilled.end()) throw UnknownFactor("no prediction for factor '" + factor_id + "'");
    if (it->review != ReviewStatus::Pending) throw StateError("prediction for '" + factor_id + "' already reviewed");
    if (const auto* c = std::get_if<Correct>(&decision)) {
      if (!kb_->factor(factor_id).valid_choice(c->choice_index))
        throw InvalidChoice("choice " + std::to_string(c->choice_index) + " out of range for '" + factor_id + "'");
      if (c->choice_index == it->prediction.choice_index) {
        it->review = ReviewStatus::Accepted;
      } else {
        it->review = ReviewStatus::Corrected;
        it->corrected_index = c->choice_index;
      }
      s.answers[factor_id] = c->choice_index;
    } else {
      it->review = ReviewStatus::Accepted;
      s.answers[factor_id] = it->prediction.choice_index;
    }
    if (s.pending_reviews() == 0) s.state = SessionState::Questioning;
  }

  // ---- questioning -------------------------------------------------------

  std::set<std::string> remaining_factors(const Session& s) const {
    std::set<std::string> excluded(s.asked.begin(), s.asked.end());
    for (const auto& p : s.prefilled) excluded.insert(p.prediction.factor_id);
    std::set<std::string> out;
    for (const auto& f : kb_->factors)
      if (f.category != Category::PersonalDetails && !excluded.count(f.id) && !s.answers.count(f.id))
        out.insert(f.id);
    return out;
  }

  // Answers so far, including accepted and corrected predictions, in KB order.
  std::vector<llm::AnsweredItem> answered_items(const Session& s) const {
    std::vector<llm::AnsweredItem> out;
    for (const auto& f : kb_->factors) {
      auto it = s.answers.find(f.id);
      if (it != s.answers.end()) out.push_back({f.name, f.choices.at(static_cast<std::size_t>(it->second)).label});
    }
    return out;
  }

  // Gateway may be null for traditional sessions.
  SelectionOutcome run_selection(const Session& s, llm::Gateway* gateway) const {
    check_can_question(s);
    if (s.state == SessionState::Completed) return {Done{s.stop_reason.value_or("completed")}, {}, 0, true};
    if (auto pending = s.pending_ask()) return {AskFactor{*pending}, {}, 0, true};

    if (s.mode == Mode::Traditional) {
      for (const auto& id : kb_->traditional_ids)
        if (!s.answers.count(id)) return {AskFactor{id}, {}, 0, false};
      return {Done{"traditional questionnaire complete"}, {}, 0, false};
    }

    if (s.question_count() >= static_cast<std::size_t>(s.question_cap))
      return {Done{"question cap reached"}, {}, 0, false};
    auto remaining = remaining_factors(s);
    if (remaining.empty()) return {Done{"no remaining factors"}, {}, 0, false};
    if (!gateway) throw ConfigError("dynamic questioning needs a model gateway");

    auto start = std::chrono::steady_clock::now();
    SelectionOutcome out{Done{}, {}, 0, false};
    const auto base = llm::build_selection_prompt(selection_catalog(*kb_, remaining), answered_items(s),
                                                  s.profile.region);
    auto action = with_reprompts(*gateway, base, out.exchanges, [&](const llm::ModelReply& r) {
      return llm::parse_selection_reply(r, remaining);
    });
    if (!action) {
      log::warn("selection: giving up after repeated malformed replies; stopping");
      out.step = Done{"parse-failure"};
    } else if (const auto* ask = std::get_if<llm::Ask>(&*action)) {
      out.step = AskFactor{ask->factor_id};
    } else {
      out.step = Done{std::get<llm::Stop>(*action).reason};
    }
    out.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

  NextStep apply_selection(Session& s, const SelectionOutcome& outcome) const {
    check_can_question(s);
    if (s.state == SessionState::Completed) return outcome.step;
    enter_questioning(s);
    if (const auto* ask = std::get_if<AskFactor>(&outcome.step)) {
      if (auto pending = s.pending_ask()) {
        if (*pending != ask->factor_id) throw OutOfTurn("question '" + *pending + "' is still unanswered");
        return outcome.step;
      }
      if (!kb_->contains(ask->factor_id)) throw UnknownFactor("unknown factor '" + ask->factor_id + "'");
      if (std::find(s.asked.begin(), s.asked.end(), ask->factor_id) != s.asked.end() ||
          s.answers.count(ask->factor_id))
        throw StateError("factor '" + ask->factor_id + "' was already asked");
      if (s.mode == Mode::Dynamic && s.question_count() >= static_cast<std::size_t>(s.question_cap))
        throw StateError("question cap reached");
      s.asked.push_back(ask->factor_id);
    } else {
      if (s.pending_ask()) throw OutOfTurn("cannot finish while a question is unanswered");
      s.stop_reason = std::get<Done>(outcome.step).reason;
      s.state = SessionState::Completed;
    }
    if (s.mode == Mode::Dynamic) s.clock["selection"] += outcome.latency;
    return outcome.step;
  }

  NextStep next_question(Session& s, llm::Gateway* gateway) const {
    return apply_selection(s, run_selection(s, gateway));
  }

  void submit_answer(Session& s, const std::string& factor_id, int choice_index) const {
    require_state(s, SessionState::Questioning, "answer a question");
    auto pending = s.pending_ask();
    if (!pending || *pending != factor_id)
      throw OutOfTurn("factor '" + factor_id + "' is not the pending question");
    if (!kb_->factor(factor_id).valid_choice(choice_index))
      throw InvalidChoice("choice " + std::to_string(choice_index) + " out of range for '" + factor_id + "'");
    s.answers[factor_id] = choice_index;
  }

  CompletedQuestionnaire finalize(Session& s) const {
    require_state(s, SessionState::Completed, "finalize");
    CompletedQuestionnaire q;
    q.session_id = s.id;
    q.mode = s.mode;
    q.final_answers = s.answers;
    for (const auto& p : s.prefilled) {
      q.predictions_snapshot.push_back(p.prediction);
      q.provenance[p.prediction.factor_id] = p.review == ReviewStatus::Corrected
                                                 ? AnswerProvenance::PredictedCorrected
                                                 : AnswerProvenance::PredictedAccepted;
    }
    for (const auto& id : s.asked) q.provenance[id] = AnswerProvenance::AskedDirectly;
    s.finalized = true;
    return q;
  }

 private:
  static void require_state(const Session& s, SessionState expected, const char* action) {
    if (s.state != expected)
      throw StateError(std::string("cannot ") + action + " in state " + std::string(to_string(s.state)));
  }

  static void check_can_question(const Session& s) {
    switch (s.state) {
      case SessionState::Questioning:
      case SessionState::Completed:
        return;
      case SessionState::InsightsLinked:
        if (s.mode == Mode::Traditional) return;
        throw StateError("dynamic sessions must be forecast before questioning");
      case SessionState::Forecasted:
        if (s.pending_reviews() == 0) return;
        throw StateError("predictions are still awaiting review");
      case SessionState::Created:
        break;
    }
    throw StateError("cannot question in state " + std::string(to_string(s.state)));
  }

  static void enter_questioning(Session& s) {
    if (s.state == SessionState::InsightsLinked || s.state == SessionState::Forecasted)
      s.state = SessionState::Questioning;
  }

  template <typename Parse>
  auto with_reprompts(llm::Gateway& gateway, const llm::Prompt& base, std::vector<llm::Exchange>& log,
                      Parse parse) const -> std::optional<decltype(parse(std::declval<llm::ModelReply>()))> {
    llm::Prompt prompt = base;
    for (int attempt = 0; attempt <= config_.max_reprompts; ++attempt) {
      llm::ModelReply reply = gateway.complete(prompt);  // EndpointError propagates
      try {
        auto value = parse(reply);
        log.push_back({prompt, reply, std::nullopt});
        return value;
      } catch (const MalformedReply& e) {
        log.push_back({prompt, reply, std::string(e.what())});
        prompt = llm::with_parse_feedback(base, e.what());
      }
    }
    return std::nullopt;
  }

  const KnowledgeBase* kb_;
  const Embedder* embedder_;
  const RegionIndex* regions_;
  EngineConfig config_;
};

// ---------------------------------------------------------------------------
// JSON views

inline json to_json(const PrefilledItem& p) {
  json j{{"prediction", llm::to_json(p.prediction)}, {"review", std::string(to_string(p.review))}};
  j["corrected_index"] = p.corrected_index ? json(*p.corrected_index) : json(nullptr);
  return j;
}

inline json to_json(const Session& s) {
  json prefilled = json::array();
  for (const auto& p : s.prefilled) prefilled.push_back(to_json(p));
  json j{{"id", s.id},
         {"mode", std::string(to_string(s.mode))},
         {"state", std::string(to_string(s.state))},
         {"profile", to_json(s.profile)},
         {"prefilled", prefilled},
         {"asked", s.asked},
         {"answers", s.answers},
         {"question_cap", s.question_cap},
         {"review_phase", s.review_phase},
         {"clock", s.clock},
         {"finalized", s.finalized}};
  j["stop_reason"] = s.stop_reason ? json(*s.stop_reason) : json(nullptr);
  auto pending = s.pending_ask();
  j["pending_ask"] = pending ? json(*pending) : json(nullptr);
  return j;
}

inline json to_json(const CompletedQuestionnaire& q) {
  json provenance = json::object();
  for (const auto& [id, p] : q.provenance) provenance[id] = std::string(to_string(p));
  json snapshot = json::array();
  for (const auto& p : q.predictions_snapshot) snapshot.push_back(llm::to_json(p));
  return json{{"session_id", q.session_id},
              {"mode", std::string(to_string(q.mode))},
              {"final_answers", q.final_answers},
              {"provenance", provenance},
              {"predictions_snapshot", snapshot}};
}

}  // namespace arquest
