#pragma once

// Live-trial bookkeeping. Each trial is an append-only JSON-lines log of
// events; the trial state and every recommendation are recomputed from the
// log, so a restart that replays the files reproduces them exactly.
//
// Timestamps are ISO-8601 calendar times kept at nanosecond resolution.
// Model time is the elapsed time since the first enrollment in the trial's
// time unit (weeks unless configured otherwise).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "awtite/designs.hpp"

namespace awtite::conduct {

using Timestamp = std::chrono::sys_time<std::chrono::nanoseconds>;

// Accepts YYYY-MM-DD, optionally followed by T (or a space) and hh:mm,
// hh:mm:ss or hh:mm:ss.fraction, then Z, +hh:mm, -hh:mm, +hhmm or nothing
// (read as UTC).
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

enum class TimeUnit { Weeks, Days, Hours };

std::string_view to_string(TimeUnit u);
TimeUnit parse_time_unit(std::string_view name);
std::chrono::nanoseconds unit_length(TimeUnit u);

enum class EventKind { TrialCreated, PatientEnrolled, DltObserved, FollowupCompleted, Note };

std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view name);

struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Note;
  Timestamp recorded_at{};
  std::string patient_id;
  int dose = 0;                    // patient-enrolled
  std::optional<Timestamp> at;     // when it happened, for patient events
  std::string text;                // note
  std::string dedupe_token;
  nlohmann::json created;          // trial-created: id, name, time_unit, config
};

nlohmann::json to_json(const Event& e);
// pointer locates errors for the caller (e.g. "/events/2").
Event event_from_json(const nlohmann::json& j, const std::string& pointer = "");

// Rejected request. Codes map onto HTTP status by the service.
class ServiceError : public std::runtime_error {
 public:
  enum class Code { Invalid, NotFound, Conflict };
  ServiceError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Code code() const noexcept { return code_; }
  std::string_view code_name() const noexcept;

 private:
  Code code_;
};

// A log file that cannot be replayed.
class CorruptLog : public std::runtime_error {
 public:
  CorruptLog(std::filesystem::path file, std::size_t line, const std::string& reason);
  const std::filesystem::path& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::filesystem::path file_;
  std::size_t line_;
};

struct TrialSettings {
  std::string id;
  std::string name;
  TimeUnit unit = TimeUnit::Weeks;
  designs::DesignConfig design;
};

struct WeightEntry {
  std::string patient_id;
  int dose = 1;
  double followup = 0.0;
  FollowupStatus status = FollowupStatus::Pending;
  std::optional<double> weight;
  std::optional<double> rate;
  double event_coefficient = 0.0;
  double nonevent_coefficient = 0.0;
  designs::WeightSource source = designs::WeightSource::Dlt;
};

struct Recommendation {
  int dose = 1;
  int unconstrained_dose = 1;
  std::vector<double> mean_tox;
  std::vector<WeightEntry> weights;
  std::vector<std::string> active_constraints;
  Timestamp as_of{};
  double clock = 0.0;  // model time of as_of
  std::uint64_t through_seq = 0;
  bool hypothetical = false;
};

nlohmann::json to_json(const Recommendation& r, const TrialSettings& settings);

// Event log of one trial with its derived view. Not synchronized; the store
// guards each trial with its own lock.
class TrialLog {
 public:
  explicit TrialLog(TrialSettings settings, Timestamp created_at);

  const TrialSettings& settings() const noexcept { return settings_; }
  const std::vector<Event>& events() const noexcept { return events_; }
  std::uint64_t last_seq() const noexcept { return events_.size(); }

  // Checks e against the current state, fills in seq (and `at` from
  // recorded_at where it defaults) and returns the event as it would be
  // stored. Throws ServiceError.
  Event prepare(Event e) const;
  void apply(Event e);  // e must come from prepare

  // Dedupe token lookup: seq of an earlier event carrying the token.
  std::optional<std::uint64_t> find_token(const std::string& token) const;

  // Latest calendar time of any patient event.
  std::optional<Timestamp> latest_event_time() const;

  TrialState model_state() const;
  double model_time(Timestamp t) const;

  Recommendation recommend(Timestamp as_of) const;

  nlohmann::json state_view() const;

 private:
  struct PatientRecord {
    std::string id;
    int dose = 1;
    Timestamp enrolled{};
    std::optional<Timestamp> dlt;
    std::optional<Timestamp> completed;
  };

  TrialSettings settings_;
  std::vector<Event> events_;
  std::vector<PatientRecord> patients_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::uint64_t> tokens_;
};

struct AppendResult {
  std::uint64_t seq = 0;
  bool duplicate = false;  // dedupe token seen before; nothing written
};

// Directory of trial logs, one <id>.jsonl per trial. Appends are fsynced
// before they are acknowledged.
class EventStore {
 public:
  // Replays every log in dir; throws CorruptLog on the first bad line.
  explicit EventStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }

  // body: {"id"?, "name"?, "time_unit"?, "config"?: flat design config}
  TrialSettings create_trial(const nlohmann::json& body);
  std::vector<TrialSettings> list_trials() const;

  AppendResult append(const std::string& id, Event e);

  // as_of defaults to the later of now and the latest event time.
  Recommendation recommend(const std::string& id, std::optional<Timestamp> as_of = std::nullopt) const;
  Recommendation what_if(const std::string& id, std::vector<Event> hypothetical,
                         std::optional<Timestamp> as_of = std::nullopt) const;
  nlohmann::json trial_state(const std::string& id) const;
  nlohmann::json recommendation_json(const std::string& id, const Recommendation& r) const;

 private:
  struct Entry {
    mutable std::shared_mutex mutex;
    std::unique_ptr<TrialLog> log;
    std::filesystem::path file;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void load(const std::filesystem::path& file);

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> trials_;
  std::uint64_t next_id_ = 1;
};

}  // namespace awtite::conduct
