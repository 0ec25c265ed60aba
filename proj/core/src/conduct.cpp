#include "awtite/conduct.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>

#include "awtite/config.hpp"
#include "awtite/error.hpp"

namespace awtite::conduct {

using nlohmann::json;
using std::chrono::nanoseconds;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw ServiceError(ServiceError::Code::Invalid, msg); }
[[noreturn]] void conflict(const std::string& msg) { throw ServiceError(ServiceError::Code::Conflict, msg); }

Timestamp now() { return std::chrono::time_point_cast<nanoseconds>(std::chrono::system_clock::now()); }

}  // namespace

// ---- timestamps ---------------------------------------------------------------

Timestamp parse_timestamp(std::string_view s) {
  auto fail = [&]() -> void { invalid("invalid ISO-8601 timestamp '" + std::string(s) + "'"); };
  std::size_t i = 0;
  auto digits = [&](int n) {
    int v = 0;
    for (int k = 0; k < n; ++k, ++i) {
      if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) fail();
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  auto expect = [&](char c) {
    if (i >= s.size() || s[i] != c) fail();
    ++i;
  };

  const int y = digits(4);
  expect('-');
  const int mo = digits(2);
  expect('-');
  const int d = digits(2);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) fail();

  nanoseconds tod{0};
  std::chrono::minutes offset{0};
  if (i < s.size() && (s[i] == 'T' || s[i] == 't' || s[i] == ' ')) {
    ++i;
    const int h = digits(2);
    expect(':');
    const int mi = digits(2);
    int sec = 0;
    long long frac = 0;
    if (i < s.size() && s[i] == ':') {
      ++i;
      sec = digits(2);
      if (i < s.size() && (s[i] == '.' || s[i] == ',')) {
        ++i;
        int n = 0;
        long long scale = 100000000;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
          if (n < 9) frac += (s[i] - '0') * scale;
          scale /= 10;
          ++n;
          ++i;
        }
        if (n == 0) fail();
      }
    }
    if (h > 23 || mi > 59 || sec > 59) fail();
    tod = std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{sec} + nanoseconds{frac};
    if (i < s.size()) {
      if (s[i] == 'Z' || s[i] == 'z') {
        ++i;
      } else if (s[i] == '+' || s[i] == '-') {
        const int sign = s[i] == '-' ? -1 : 1;
        ++i;
        const int oh = digits(2);
        if (i < s.size() && s[i] == ':') ++i;
        const int om = digits(2);
        if (oh > 23 || om > 59) fail();
        offset = std::chrono::minutes{sign * (oh * 60 + om)};
      }
    }
  }
  if (i != s.size()) fail();
  return std::chrono::sys_days{ymd} + tod - offset;
}

std::string format_timestamp(Timestamp t) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{day};
  const std::chrono::hh_mm_ss<nanoseconds> hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  std::string out = buf;
  if (const auto ns = hms.subseconds().count(); ns != 0) {
    std::snprintf(buf, sizeof buf, ".%09lld", static_cast<long long>(ns));
    std::string frac = buf;
    frac.erase(frac.find_last_not_of('0') + 1);
    out += frac;
  }
  return out + "Z";
}

std::string_view to_string(TimeUnit u) {
  switch (u) {
    case TimeUnit::Weeks: return "weeks";
    case TimeUnit::Days: return "days";
    case TimeUnit::Hours: return "hours";
  }
  return "?";
}

TimeUnit parse_time_unit(std::string_view name) {
  for (TimeUnit u : {TimeUnit::Weeks, TimeUnit::Days, TimeUnit::Hours}) {
    if (name == to_string(u)) return u;
  }
  invalid("unknown time unit '" + std::string(name) + "' (expected weeks, days or hours)");
}

nanoseconds unit_length(TimeUnit u) {
  switch (u) {
    case TimeUnit::Weeks: return std::chrono::weeks{1};
    case TimeUnit::Days: return std::chrono::days{1};
    case TimeUnit::Hours: return std::chrono::hours{1};
  }
  return std::chrono::weeks{1};
}

// ---- events ---------------------------------------------------------------------

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::TrialCreated: return "trial-created";
    case EventKind::PatientEnrolled: return "patient-enrolled";
    case EventKind::DltObserved: return "dlt-observed";
    case EventKind::FollowupCompleted: return "followup-completed";
    case EventKind::Note: return "note";
  }
  return "?";
}

EventKind parse_event_kind(std::string_view name) {
  for (EventKind k : {EventKind::TrialCreated, EventKind::PatientEnrolled, EventKind::DltObserved,
                      EventKind::FollowupCompleted, EventKind::Note}) {
    if (name == to_string(k)) return k;
  }
  invalid("unknown event kind '" + std::string(name) + "'");
}

std::string_view ServiceError::code_name() const noexcept {
  switch (code_) {
    case Code::Invalid: return "invalid";
    case Code::NotFound: return "not-found";
    case Code::Conflict: return "conflict";
  }
  return "error";
}

CorruptLog::CorruptLog(std::filesystem::path file, std::size_t line, const std::string& reason)
    : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + reason),
      file_(std::move(file)),
      line_(line) {}

json to_json(const Event& e) {
  json j = {{"seq", e.seq}, {"kind", std::string(to_string(e.kind))}, {"recorded_at", format_timestamp(e.recorded_at)}};
  switch (e.kind) {
    case EventKind::TrialCreated: j["trial"] = e.created; break;
    case EventKind::PatientEnrolled: j["patient_id"] = e.patient_id; j["dose"] = e.dose; break;
    case EventKind::DltObserved:
    case EventKind::FollowupCompleted: j["patient_id"] = e.patient_id; break;
    case EventKind::Note: j["text"] = e.text; break;
  }
  if (e.at) j["at"] = format_timestamp(*e.at);
  if (!e.dedupe_token.empty()) j["dedupe_token"] = e.dedupe_token;
  return j;
}

Event event_from_json(const json& j, const std::string& pointer) {
  const std::string here = pointer.empty() ? "event" : pointer;
  if (!j.is_object()) invalid(here + ": expected an object");
  auto str = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_string()) invalid(pointer + "/" + key + ": expected a string");
    return it->get<std::string>();
  };
  auto kind = str("kind");
  if (!kind) invalid(pointer + "/kind: required");
  Event e;
  e.kind = parse_event_kind(*kind);

  std::set<std::string> allowed = {"kind", "seq", "recorded_at", "at", "dedupe_token"};
  switch (e.kind) {
    case EventKind::TrialCreated: allowed.insert("trial"); break;
    case EventKind::PatientEnrolled: allowed.insert({"patient_id", "dose"}); break;
    case EventKind::DltObserved:
    case EventKind::FollowupCompleted: allowed.insert("patient_id"); break;
    case EventKind::Note: allowed.insert("text"); break;
  }
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) invalid(pointer + "/" + item.key() + ": not allowed for " + *kind);
  }

  if (auto it = j.find("seq"); it != j.end()) {
    if (!it->is_number_unsigned()) invalid(pointer + "/seq: expected a positive integer");
    e.seq = it->get<std::uint64_t>();
  }
  if (auto s = str("recorded_at")) e.recorded_at = parse_timestamp(*s);
  if (auto s = str("at")) e.at = parse_timestamp(*s);
  if (auto s = str("dedupe_token")) e.dedupe_token = *s;
  if (auto s = str("patient_id")) e.patient_id = *s;
  if (auto s = str("text")) e.text = *s;
  if (auto it = j.find("dose"); it != j.end()) {
    if (!it->is_number_integer()) invalid(pointer + "/dose: expected an integer");
    e.dose = it->get<int>();
  }
  if (auto it = j.find("trial"); it != j.end()) e.created = *it;

  const bool needs_patient = e.kind == EventKind::PatientEnrolled || e.kind == EventKind::DltObserved ||
                             e.kind == EventKind::FollowupCompleted;
  if (needs_patient && e.patient_id.empty()) invalid(pointer + "/patient_id: required");
  if (e.kind == EventKind::PatientEnrolled && !j.contains("dose")) invalid(pointer + "/dose: required");
  if (e.kind == EventKind::Note && e.text.empty()) invalid(pointer + "/text: required");
  return e;
}

// ---- one trial ---------------------------------------------------------------------

namespace {

json trial_header(const TrialSettings& s) {
  return {{"id", s.id},
          {"name", s.name},
          {"time_unit", std::string(to_string(s.unit))},
          {"config", config::design_to_json(s.design)}};
}

std::string_view status_name(FollowupStatus s) {
  switch (s) {
    case FollowupStatus::Dlt: return "dlt";
    case FollowupStatus::Completed: return "completed";
    case FollowupStatus::Pending: return "pending";
  }
  return "?";
}

}  // namespace

TrialLog::TrialLog(TrialSettings settings, Timestamp created_at) : settings_(std::move(settings)) {
  Event e;
  e.seq = 1;
  e.kind = EventKind::TrialCreated;
  e.recorded_at = created_at;
  e.created = trial_header(settings_);
  events_.push_back(std::move(e));
}

double TrialLog::model_time(Timestamp t) const {
  if (patients_.empty()) return 0.0;
  const auto unit = static_cast<double>(unit_length(settings_.unit).count());
  return static_cast<double>((t - patients_.front().enrolled).count()) / unit;
}

Event TrialLog::prepare(Event e) const {
  e.seq = last_seq() + 1;
  const auto unit = static_cast<double>(unit_length(settings_.unit).count());
  const double t_max = settings_.design.t_max;
  constexpr double slack = 1e-9;  // model-time units
  auto elapsed = [unit](Timestamp from, Timestamp to) { return static_cast<double>((to - from).count()) / unit; };

  const PatientRecord* patient = nullptr;
  if (e.kind == EventKind::DltObserved || e.kind == EventKind::FollowupCompleted) {
    auto it = index_.find(e.patient_id);
    if (it == index_.end()) conflict("patient '" + e.patient_id + "' is not enrolled");
    patient = &patients_[it->second];
    if (patient->dlt || patient->completed) {
      conflict("patient '" + e.patient_id + "' already has a terminal event");
    }
  }
  if (e.kind != EventKind::Note && e.kind != EventKind::TrialCreated && !e.at) e.at = e.recorded_at;

  switch (e.kind) {
    case EventKind::TrialCreated:
      invalid("trial-created is recorded when the trial is created");
    case EventKind::PatientEnrolled:
      if (index_.count(e.patient_id)) conflict("patient '" + e.patient_id + "' is already enrolled");
      if (e.dose < 1 || e.dose > settings_.design.num_doses()) {
        invalid("dose must lie in 1.." + std::to_string(settings_.design.num_doses()));
      }
      if (!patients_.empty() && !(*e.at > patients_.back().enrolled)) {
        conflict("enrollment at " + format_timestamp(*e.at) + " is not after the previous enrollment at " +
                 format_timestamp(patients_.back().enrolled));
      }
      break;
    case EventKind::DltObserved: {
      const double t = elapsed(patient->enrolled, *e.at);
      if (t < 0.0 || t > t_max + slack) {
        conflict("DLT for patient '" + e.patient_id + "' lies outside the observation window");
      }
      break;
    }
    case EventKind::FollowupCompleted:
      if (elapsed(patient->enrolled, *e.at) < t_max - slack) {
        conflict("observation window for patient '" + e.patient_id + "' is not yet complete");
      }
      break;
    case EventKind::Note:
      if (e.text.empty()) invalid("note text is empty");
      break;
  }
  return e;
}

void TrialLog::apply(Event e) {
  switch (e.kind) {
    case EventKind::PatientEnrolled:
      index_[e.patient_id] = patients_.size();
      patients_.push_back({e.patient_id, e.dose, *e.at, std::nullopt, std::nullopt});
      break;
    case EventKind::DltObserved: patients_[index_.at(e.patient_id)].dlt = e.at; break;
    case EventKind::FollowupCompleted: patients_[index_.at(e.patient_id)].completed = e.at; break;
    default: break;
  }
  if (!e.dedupe_token.empty()) tokens_[e.dedupe_token] = e.seq;
  events_.push_back(std::move(e));
}

std::optional<std::uint64_t> TrialLog::find_token(const std::string& token) const {
  auto it = tokens_.find(token);
  if (it == tokens_.end()) return std::nullopt;
  return it->second;
}

std::optional<Timestamp> TrialLog::latest_event_time() const {
  std::optional<Timestamp> latest;
  for (const Event& e : events_) {
    if (e.at && (!latest || *e.at > *latest)) latest = e.at;
  }
  return latest;
}

TrialState TrialLog::model_state() const {
  TrialState state(settings_.design.num_doses());
  const auto unit = static_cast<double>(unit_length(settings_.unit).count());
  for (const PatientRecord& p : patients_) {
    Patient m{p.id, p.dose, model_time(p.enrolled), std::nullopt, p.completed.has_value()};
    if (p.dlt) m.dlt_time = static_cast<double>((*p.dlt - p.enrolled).count()) / unit;
    state.enroll(std::move(m));
  }
  return state;
}

Recommendation TrialLog::recommend(Timestamp as_of) const {
  if (auto latest = latest_event_time(); latest && as_of < *latest) {
    invalid("as-of time " + format_timestamp(as_of) + " precedes the latest event at " + format_timestamp(*latest));
  }
  const TrialState state = model_state();
  Recommendation r;
  r.as_of = as_of;
  r.clock = model_time(as_of);
  r.through_seq = last_seq();
  const designs::ModelEvaluation ev = designs::evaluate_model(state, r.clock, settings_.design);
  r.dose = ev.dose;
  r.unconstrained_dose = ev.unconstrained_dose;
  r.mean_tox = ev.posterior.mean_tox;
  r.active_constraints = ev.active_constraints;
  for (const auto& row : ev.rows) {
    r.weights.push_back({patients_[row.patient].id, row.dose, row.followup, row.status, row.weight, row.rate,
                         row.record.event_weight, row.record.nonevent_weight, row.source});
  }
  return r;
}

json TrialLog::state_view() const {
  json patients = json::array();
  for (const PatientRecord& p : patients_) {
    json j = {{"id", p.id},
              {"dose", p.dose},
              {"enrolled_at", format_timestamp(p.enrolled)},
              {"status", p.dlt ? "dlt" : p.completed ? "completed" : "pending"}};
    if (p.dlt) j["dlt_at"] = format_timestamp(*p.dlt);
    if (p.completed) j["completed_at"] = format_timestamp(*p.completed);
    patients.push_back(std::move(j));
  }
  json log = json::array();
  for (const Event& e : events_) log.push_back(to_json(e));
  json view = trial_header(settings_);
  view["created_at"] = format_timestamp(events_.front().recorded_at);
  view["patients"] = std::move(patients);
  view["events"] = std::move(log);
  view["event_count"] = events_.size();
  return view;
}

json to_json(const Recommendation& r, const TrialSettings& settings) {
  json weights = json::array();
  for (const WeightEntry& w : r.weights) {
    weights.push_back({{"patient_id", w.patient_id},
                       {"dose", w.dose},
                       {"followup", w.followup},
                       {"status", std::string(status_name(w.status))},
                       {"weight", w.weight ? json(*w.weight) : json(nullptr)},
                       {"rate", w.rate ? json(*w.rate) : json(nullptr)},
                       {"event_coefficient", w.event_coefficient},
                       {"nonevent_coefficient", w.nonevent_coefficient},
                       {"source", std::string(designs::to_string(w.source))}});
  }
  return {{"trial_id", settings.id},
          {"design", std::string(designs::to_string(settings.design.design))},
          {"target", settings.design.target},
          {"dose", r.dose},
          {"unconstrained_dose", r.unconstrained_dose},
          {"mean_tox", r.mean_tox},
          {"weights", weights},
          {"active_constraints", r.active_constraints},
          {"as_of", format_timestamp(r.as_of)},
          {"clock", r.clock},
          {"time_unit", std::string(to_string(settings.unit))},
          {"through_seq", r.through_seq},
          {"hypothetical", r.hypothetical}};
}

// ---- store -------------------------------------------------------------------------

namespace {

void append_line(const std::filesystem::path& file, const std::string& line, bool new_file) {
  const int fd = ::open(file.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + file.string() + ": " + std::strerror(errno));
  std::string data = line + "\n";
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw std::runtime_error("cannot write " + file.string() + ": " + std::strerror(err));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw std::runtime_error("cannot sync " + file.string());
  if (new_file) {
    const int dfd = ::open(file.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
  }
}

const std::regex& id_pattern() {
  static const std::regex re("[A-Za-z0-9][A-Za-z0-9._-]{0,63}");
  return re;
}

TrialSettings settings_from_json(const json& body) {
  if (!body.is_object()) invalid("trial body must be a JSON object");
  TrialSettings s;
  for (const auto& item : body.items()) {
    const std::string& k = item.key();
    if (k != "id" && k != "name" && k != "time_unit" && k != "config") invalid("/" + k + ": unknown key");
  }
  auto str = [&](const char* key) -> std::string {
    auto it = body.find(key);
    if (it == body.end()) return {};
    if (!it->is_string()) invalid(std::string("/") + key + ": expected a string");
    return it->get<std::string>();
  };
  s.id = str("id");
  s.name = str("name");
  if (auto unit = str("time_unit"); !unit.empty()) s.unit = parse_time_unit(unit);
  if (auto it = body.find("config"); it != body.end()) {
    try {
      s.design = config::design_from_json(*it, "/config");
    } catch (const ConfigError& e) {
      invalid(e.what());
    }
  }
  if (!designs::is_model_based(s.design.design)) {
    invalid("/config/design: live trials support TITE, AW-MLE and AW-BAYES");
  }
  if (!s.id.empty() && !std::regex_match(s.id, id_pattern())) {
    invalid("/id: use 1-64 letters, digits, '.', '_' or '-', starting with a letter or digit");
  }
  return s;
}

bool same_payload(const Event& a, const Event& b) {
  return a.kind == b.kind && a.patient_id == b.patient_id && a.dose == b.dose && a.text == b.text &&
         (!b.at || a.at == b.at);
}

}  // namespace

EventStore::EventStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) load(f);
}

void EventStore::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CorruptLog(file, 0, "cannot open");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.empty()) throw CorruptLog(file, 1, "empty log");
  if (content.back() != '\n') {
    const std::size_t lines = static_cast<std::size_t>(std::count(content.begin(), content.end(), '\n')) + 1;
    throw CorruptLog(file, lines, "truncated final line");
  }

  std::unique_ptr<TrialLog> log;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    const std::size_t end = content.find('\n', start);
    const std::string line = content.substr(start, end - start);
    start = end + 1;
    ++lineno;
    try {
      const Event e = event_from_json(json::parse(line));
      if (e.seq != lineno) throw CorruptLog(file, lineno, "sequence number " + std::to_string(e.seq) + " out of order");
      if (lineno == 1) {
        if (e.kind != EventKind::TrialCreated) throw CorruptLog(file, 1, "log must start with trial-created");
        TrialSettings s = settings_from_json(e.created);
        if (s.id != file.stem().string()) throw CorruptLog(file, 1, "trial id does not match the file name");
        log = std::make_unique<TrialLog>(std::move(s), e.recorded_at);
        continue;
      }
      Event prepared = log->prepare(e);
      if (prepared.at != e.at) throw CorruptLog(file, lineno, "event has no time");
      log->apply(std::move(prepared));
    } catch (const CorruptLog&) {
      throw;
    } catch (const std::exception& ex) {
      throw CorruptLog(file, lineno, ex.what());
    }
  }

  const std::string& id = log->settings().id;
  static const std::regex numbered("trial-([0-9]{1,18})");
  std::smatch m;
  if (std::regex_match(id, m, numbered)) next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(m[1].str()) + 1);
  auto entry = std::make_shared<Entry>();
  entry->log = std::move(log);
  entry->file = file;
  trials_[id] = std::move(entry);
}

std::shared_ptr<EventStore::Entry> EventStore::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = trials_.find(id);
  if (it == trials_.end()) throw ServiceError(ServiceError::Code::NotFound, "no trial '" + id + "'");
  return it->second;
}

TrialSettings EventStore::create_trial(const json& body) {
  TrialSettings s = settings_from_json(body);
  std::unique_lock lock(mutex_);
  if (s.id.empty()) {
    do {
      s.id = "trial-" + std::to_string(next_id_++);
    } while (trials_.count(s.id));
  }
  if (trials_.count(s.id)) conflict("trial '" + s.id + "' already exists");
  auto entry = std::make_shared<Entry>();
  entry->log = std::make_unique<TrialLog>(s, now());
  entry->file = dir_ / (s.id + ".jsonl");
  if (std::filesystem::exists(entry->file)) conflict("a log for trial '" + s.id + "' already exists");
  append_line(entry->file, to_json(entry->log->events().front()).dump(), true);
  trials_[s.id] = std::move(entry);
  return s;
}

std::vector<TrialSettings> EventStore::list_trials() const {
  std::shared_lock lock(mutex_);
  std::vector<TrialSettings> out;
  for (const auto& [id, entry] : trials_) {
    std::shared_lock trial_lock(entry->mutex);
    out.push_back(entry->log->settings());
  }
  return out;
}

AppendResult EventStore::append(const std::string& id, Event e) {
  auto entry = find(id);
  std::unique_lock lock(entry->mutex);
  TrialLog& log = *entry->log;
  if (!e.dedupe_token.empty()) {
    if (auto seq = log.find_token(e.dedupe_token)) {
      if (!same_payload(log.events()[*seq - 1], e)) conflict("dedupe token reused for a different event");
      return {*seq, true};
    }
  }
  e.recorded_at = now();
  Event prepared = log.prepare(std::move(e));
  append_line(entry->file, to_json(prepared).dump(), false);
  const std::uint64_t seq = prepared.seq;
  log.apply(std::move(prepared));
  return {seq, false};
}

namespace {

Timestamp default_as_of(const TrialLog& log) {
  const Timestamp t = now();
  const auto latest = log.latest_event_time();
  return latest && *latest > t ? *latest : t;
}

}  // namespace

Recommendation EventStore::recommend(const std::string& id, std::optional<Timestamp> as_of) const {
  auto entry = find(id);
  std::shared_lock lock(entry->mutex);
  return entry->log->recommend(as_of.value_or(default_as_of(*entry->log)));
}

Recommendation EventStore::what_if(const std::string& id, std::vector<Event> hypothetical,
                                   std::optional<Timestamp> as_of) const {
  auto entry = find(id);
  std::optional<TrialLog> copy;
  {
    std::shared_lock lock(entry->mutex);
    copy.emplace(*entry->log);
  }
  const Timestamp stamp = as_of.value_or(now());
  for (std::size_t i = 0; i < hypothetical.size(); ++i) {
    Event& e = hypothetical[i];
    e.recorded_at = stamp;
    try {
      copy->apply(copy->prepare(std::move(e)));
    } catch (const ServiceError& err) {
      throw ServiceError(err.code(), "hypothetical event " + std::to_string(i) + ": " + err.what());
    }
  }
  Recommendation r = copy->recommend(as_of.value_or(default_as_of(*copy)));
  r.hypothetical = true;
  return r;
}

json EventStore::trial_state(const std::string& id) const {
  auto entry = find(id);
  std::shared_lock lock(entry->mutex);
  return entry->log->state_view();
}

json EventStore::recommendation_json(const std::string& id, const Recommendation& r) const {
  auto entry = find(id);
  std::shared_lock lock(entry->mutex);
  return to_json(r, entry->log->settings());
}

}  // namespace awtite::conduct
