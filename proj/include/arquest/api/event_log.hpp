#pragma once

// Append-only JSON Lines event log, one file per session, and the fold that
// rebuilds a Session from it.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "arquest/engine.hpp"
#include "arquest/error.hpp"
#include "arquest/llm/types.hpp"
#include "arquest/log.hpp"
#include "arquest/profile.hpp"

namespace arquest::api {

enum class EventKind { Started, SourceLinked, Forecasted, Reviewed, Asked, Answered, Finalized };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Started: return "Started";
    case EventKind::SourceLinked: return "SourceLinked";
    case EventKind::Forecasted: return "Forecasted";
    case EventKind::Reviewed: return "Reviewed";
    case EventKind::Asked: return "Asked";
    case EventKind::Answered: return "Answered";
    case EventKind::Finalized: return "Finalized";
  }
  return "?";
}

inline EventKind event_kind_from_string(std::string_view s) {
  for (auto k : {EventKind::Started, EventKind::SourceLinked, EventKind::Forecasted, EventKind::Reviewed,
                 EventKind::Asked, EventKind::Answered, EventKind::Finalized})
    if (to_string(k) == s) return k;
  throw CorruptLog("unknown event kind '" + std::string(s) + "'");
}

struct SessionEvent {
  std::string session_id;
  std::uint64_t seq = 0;
  std::string timestamp;  // ISO 8601, UTC
  EventKind kind = EventKind::Started;
  json payload = json::object();

  bool operator==(const SessionEvent&) const = default;
};

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

inline json to_json(const SessionEvent& e) {
  return json{{"session_id", e.session_id},
              {"seq", e.seq},
              {"timestamp", e.timestamp},
              {"kind", std::string(to_string(e.kind))},
              {"payload", e.payload}};
}

inline SessionEvent session_event_from_json(const json& j) {
  try {
    return {j.at("session_id").get<std::string>(), j.at("seq").get<std::uint64_t>(),
            j.at("timestamp").get<std::string>(), event_kind_from_string(j.at("kind").get<std::string>()),
            j.at("payload")};
  } catch (const json::exception& e) {
    throw CorruptLog(std::string("malformed event: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Payload builders

inline json started_payload(const Session& s) {
  return json{{"mode", std::string(to_string(s.mode))},
              {"personal_details", to_json(s.profile.details)},
              {"question_cap", s.question_cap},
              {"review_phase", s.review_phase}};
}

inline json source_linked_payload(const ExternalSource& source, bool terms_accepted) {
  return json{{"source", to_json(source)}, {"terms_accepted", terms_accepted}};
}

inline json exchanges_json(const std::vector<llm::Exchange>& exchanges) {
  json out = json::array();
  for (const auto& x : exchanges) out.push_back(llm::to_json(x));
  return out;
}

inline json forecasted_payload(const ForecastOutcome& o) {
  json predictions = json::array();
  for (const auto& p : o.predictions) predictions.push_back(llm::to_json(p));
  return json{{"predictions", predictions}, {"latency", o.latency}, {"exchanges", exchanges_json(o.exchanges)}};
}

inline json reviewed_payload(const std::string& factor_id, const ReviewDecision& d) {
  if (const auto* c = std::get_if<Correct>(&d))
    return json{{"factor_id", factor_id}, {"decision", "correct"}, {"choice_index", c->choice_index}};
  return json{{"factor_id", factor_id}, {"decision", "accept"}};
}

inline json asked_payload(const SelectionOutcome& o) {
  json j{{"latency", o.latency}, {"exchanges", exchanges_json(o.exchanges)}};
  if (const auto* ask = std::get_if<AskFactor>(&o.step)) {
    j["factor_id"] = ask->factor_id;
  } else {
    j["done"] = true;
    j["reason"] = std::get<Done>(o.step).reason;
  }
  return j;
}

inline json answered_payload(const std::string& factor_id, int choice_index) {
  return json{{"factor_id", factor_id}, {"choice_index", choice_index}};
}

// ---------------------------------------------------------------------------
// Fold

// Applies one event through the engine, so replay obeys the same state
// machine as live requests. Model calls are never repeated: recorded
// outcomes are applied directly.
inline void apply_event(Session& s, const SessionEvent& e, const Engine& engine) {
  const json& p = e.payload;
  try {
    switch (e.kind) {
      case EventKind::Started:
        throw CorruptLog("Started event after the first position");
      case EventKind::SourceLinked:
        engine.link_source(s, external_source_from_json(p.at("source")));
        break;
      case EventKind::Forecasted: {
        ForecastOutcome o;
        for (const auto& x : p.at("predictions")) o.predictions.push_back(llm::prediction_from_json(x));
        o.latency = p.at("latency").get<double>();
        engine.apply_forecast(s, o);
        break;
      }
      case EventKind::Reviewed: {
        ReviewDecision d = Accept{};
        if (p.at("decision").get<std::string>() == "correct") d = Correct{p.at("choice_index").get<int>()};
        engine.review(s, p.at("factor_id").get<std::string>(), d);
        break;
      }
      case EventKind::Asked: {
        SelectionOutcome o{Done{}, {}, p.at("latency").get<double>(), false};
        if (p.contains("factor_id"))
          o.step = AskFactor{p.at("factor_id").get<std::string>()};
        else
          o.step = Done{p.at("reason").get<std::string>()};
        engine.apply_selection(s, o);
        break;
      }
      case EventKind::Answered:
        engine.submit_answer(s, p.at("factor_id").get<std::string>(), p.at("choice_index").get<int>());
        break;
      case EventKind::Finalized:
        engine.finalize(s);
        break;
    }
  } catch (const json::exception& ex) {
    throw CorruptLog("event " + std::to_string(e.seq) + " has a malformed payload: " + ex.what());
  }
}

inline Session fold(const std::vector<SessionEvent>& events, const Engine& engine) {
  if (events.empty()) throw CorruptLog("empty event log");
  const auto& first = events.front();
  if (first.kind != EventKind::Started) throw CorruptLog("event log does not begin with Started");
  Session s;
  try {
    const json& p = first.payload;
    s = engine.start_session(personal_details_from_json(p.at("personal_details")),
                             mode_from_string(p.at("mode").get<std::string>()), first.session_id,
                             p.at("question_cap").get<int>(), p.at("review_phase").get<bool>());
  } catch (const json::exception& ex) {
    throw CorruptLog(std::string("malformed Started payload: ") + ex.what());
  }
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (s.finalized) throw CorruptLog("event after Finalized at seq " + std::to_string(events[i].seq));
    apply_event(s, events[i], engine);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Storage

struct LoadedLog {
  std::vector<SessionEvent> events;
  bool recovered_truncation = false;
  std::size_t skipped_duplicates = 0;
};

class EventStore {
 public:
  explicit EventStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_for(const std::string& session_id) const { return dir_ / (session_id + ".jsonl"); }
  bool exists(const std::string& session_id) const { return std::filesystem::exists(path_for(session_id)); }

  // One line per event, flushed to stable storage before returning.
  void append(const SessionEvent& e) const {
    const auto path = path_for(e.session_id);
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw Error("cannot open event log '" + path.string() + "'");
    const std::string line = to_json(e).dump() + "\n";
    bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
              ::fsync(fileno(f)) == 0;
    std::fclose(f);
    if (!ok) throw Error("failed to append to event log '" + path.string() + "'");
  }

  // A torn final line is dropped and the file truncated after the last
  // complete event. Events repeating an already-seen sequence number are
  // skipped; a gap is fatal.
  LoadedLog load(const std::string& session_id) const {
    const auto path = path_for(session_id);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptLog("cannot open event log '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    in.close();

    LoadedLog out;
    std::size_t pos = 0, good_end = 0;
    std::uint64_t expected = 0;
    while (pos < data.size()) {
      auto nl = data.find('\n', pos);
      bool complete = nl != std::string::npos;
      std::string line = data.substr(pos, complete ? nl - pos : std::string::npos);
      auto j = json::parse(line, nullptr, false);
      bool last = !complete || nl + 1 >= data.size();
      if (j.is_discarded() || !complete) {
        if (!last) throw CorruptLog("unreadable event line in the middle of '" + path.string() + "'");
        out.recovered_truncation = true;
        break;
      }
      SessionEvent e = session_event_from_json(j);
      if (e.session_id != session_id) throw CorruptLog("event for session '" + e.session_id + "' in wrong log");
      if (e.seq < expected) {
        ++out.skipped_duplicates;
      } else if (e.seq > expected) {
        throw CorruptLog("sequence gap in '" + path.string() + "': expected " + std::to_string(expected) +
                         ", found " + std::to_string(e.seq));
      } else {
        out.events.push_back(std::move(e));
        ++expected;
      }
      pos = nl + 1;
      good_end = pos;
    }
    if (out.recovered_truncation) {
      log::warn("event log '" + path.string() + "' ends with a partial line; truncating to the last complete event");
      std::filesystem::resize_file(path, good_end);
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace arquest::api
