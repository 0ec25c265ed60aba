#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <thread>

#include "awtite/conduct.hpp"
#include "awtite/config.hpp"
#include "replay.hpp"
#include "temp_dir.hpp"

using namespace awtite;
using namespace awtite::conduct;
using nlohmann::json;

namespace {

Timestamp ts(std::string_view s) { return parse_timestamp(s); }

Event enroll(const std::string& id, int dose, std::string_view at) {
  Event e;
  e.kind = EventKind::PatientEnrolled;
  e.patient_id = id;
  e.dose = dose;
  e.at = ts(at);
  return e;
}

Event dlt(const std::string& id, std::string_view at) {
  Event e;
  e.kind = EventKind::DltObserved;
  e.patient_id = id;
  e.at = ts(at);
  return e;
}

Event completed(const std::string& id, std::string_view at) {
  Event e;
  e.kind = EventKind::FollowupCompleted;
  e.patient_id = id;
  e.at = ts(at);
  return e;
}

Event note(const std::string& text) {
  Event e;
  e.kind = EventKind::Note;
  e.text = text;
  return e;
}

ServiceError::Code code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ServiceError";
  return ServiceError::Code::Invalid;
}

std::string slurp(const std::filesystem::path& p) { return TempDir::read(p); }

}  // namespace

TEST(TimestampTest, ParsesTheAcceptedForms) {
  const Timestamp base = ts("2026-03-02T10:15:00Z");
  EXPECT_EQ(format_timestamp(base), "2026-03-02T10:15:00Z");
  EXPECT_EQ(ts("2026-03-02T10:15Z"), base);
  EXPECT_EQ(ts("2026-03-02 10:15:00"), base);
  EXPECT_EQ(ts("2026-03-02T12:15:00+02:00"), base);
  EXPECT_EQ(ts("2026-03-02T05:15:00-0500"), base);
  EXPECT_EQ(ts("2026-03-02"), ts("2026-03-02T00:00:00Z"));
  EXPECT_EQ(ts("2026-03-02T10:15:00.25Z") - base, std::chrono::milliseconds(250));
  EXPECT_EQ(format_timestamp(ts("2026-03-02T10:15:00.000000001Z")), "2026-03-02T10:15:00.000000001Z");
  EXPECT_EQ(format_timestamp(ts("1999-12-31T23:59:59.5Z")), "1999-12-31T23:59:59.5Z");
}

TEST(TimestampTest, RejectsMalformedText) {
  for (const char* bad : {"", "2026-02-30", "2026-3-02", "2026-03-02T25:00", "2026-03-02T10:15:00.Z",
                          "2026-03-02T10:15:00Q", "2026-03-02T10:15:00+1"}) {
    EXPECT_THROW(parse_timestamp(bad), ServiceError) << bad;
  }
}

TEST(TimestampTest, FormatRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<long long> ns(0, 4'000'000'000'000'000'000LL);
  for (int i = 0; i < 2000; ++i) {
    const Timestamp t{std::chrono::nanoseconds(ns(rng))};
    EXPECT_EQ(parse_timestamp(format_timestamp(t)), t);
  }
}

TEST(EventJsonTest, RoundTripAndUnknownKeys) {
  Event e = enroll("P1", 2, "2026-01-05T09:00:00Z");
  e.seq = 4;
  e.recorded_at = ts("2026-01-05T09:00:01Z");
  e.dedupe_token = "abc";
  const json j = to_json(e);
  EXPECT_EQ(j.at("kind"), "patient-enrolled");
  EXPECT_EQ(to_json(event_from_json(j)), j);
  json extra = j;
  extra["text"] = "x";
  EXPECT_THROW(event_from_json(extra, "/events/0"), ServiceError);
  EXPECT_THROW(event_from_json({{"kind", "patient-enrolled"}, {"patient_id", "P1"}}), ServiceError);
  EXPECT_THROW(event_from_json({{"kind", "dose-changed"}}), ServiceError);
}

class StoreTest : public ::testing::Test {
 protected:
  TempDir dir;
  std::string make_trial(EventStore& store) { return store.create_trial(json::object()).id; }
};

TEST_F(StoreTest, FreshTrialStartsAtTheLowestDose) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  EXPECT_EQ(id, "trial-1");
  const Recommendation r = store.recommend(id, ts("2026-01-05T09:00:00Z"));
  EXPECT_EQ(r.dose, 1);
  EXPECT_TRUE(r.weights.empty());
  EXPECT_EQ(r.mean_tox.size(), 5u);
  const json state = store.trial_state(id);
  EXPECT_TRUE(state.at("patients").empty());
  EXPECT_EQ(state.at("event_count"), 1);
  EXPECT_EQ(state.at("config"), config::design_to_json(designs::DesignConfig{}));
}

TEST_F(StoreTest, CreateValidatesTheBody) {
  EventStore store(dir.path());
  EXPECT_EQ(code_of([&] { store.create_trial({{"colour", "red"}}); }), ServiceError::Code::Invalid);
  EXPECT_EQ(code_of([&] { store.create_trial({{"config", {{"design", "BOIN"}}}}); }), ServiceError::Code::Invalid);
  EXPECT_EQ(code_of([&] { store.create_trial({{"config", {{"target", 2}}}}); }), ServiceError::Code::Invalid);
  EXPECT_EQ(code_of([&] { store.create_trial({{"id", "../etc"}}); }), ServiceError::Code::Invalid);
  EXPECT_EQ(code_of([&] { store.create_trial({{"time_unit", "fortnights"}}); }), ServiceError::Code::Invalid);
  store.create_trial({{"id", "study-7"}, {"name", "Study 7"}, {"time_unit", "days"}});
  EXPECT_EQ(code_of([&] { store.create_trial({{"id", "study-7"}}); }), ServiceError::Code::Conflict);
  ASSERT_EQ(store.list_trials().size(), 1u);
  EXPECT_EQ(store.list_trials()[0].unit, TimeUnit::Days);
  EXPECT_EQ(code_of([&] { store.trial_state("nope"); }), ServiceError::Code::NotFound);
  EXPECT_EQ(code_of([&] { store.append("nope", note("x")); }), ServiceError::Code::NotFound);
}

TEST_F(StoreTest, SequenceNumbersAreContiguous) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  EXPECT_EQ(store.append(id, enroll("P1", 1, "2026-01-05T09:00:00Z")).seq, 2u);
  EXPECT_EQ(store.append(id, note("first patient dosed")).seq, 3u);
  EXPECT_EQ(store.append(id, enroll("P2", 1, "2026-01-19T09:00:00Z")).seq, 4u);
  const json state = store.trial_state(id);
  EXPECT_EQ(state.at("events").size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(state.at("events")[i].at("seq"), i + 1);
}

TEST_F(StoreTest, RejectionsLeaveTheLogUnchanged) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  store.append(id, enroll("P1", 1, "2026-01-05T09:00:00Z"));
  store.append(id, enroll("P2", 1, "2026-01-19T09:00:00Z"));
  const std::string before = slurp(dir / (id + ".jsonl"));

  using C = ServiceError::Code;
  EXPECT_EQ(code_of([&] { store.append(id, enroll("P1", 1, "2026-02-02T09:00:00Z")); }), C::Conflict);
  EXPECT_EQ(code_of([&] { store.append(id, enroll("P3", 1, "2026-01-19T09:00:00Z")); }), C::Conflict);
  EXPECT_EQ(code_of([&] { store.append(id, enroll("P3", 6, "2026-02-02T09:00:00Z")); }), C::Invalid);
  EXPECT_EQ(code_of([&] { store.append(id, enroll("P3", 0, "2026-02-02T09:00:00Z")); }), C::Invalid);
  EXPECT_EQ(code_of([&] { store.append(id, dlt("P9", "2026-01-20T09:00:00Z")); }), C::Conflict);
  EXPECT_EQ(code_of([&] { store.append(id, dlt("P1", "2026-01-04T09:00:00Z")); }), C::Conflict);
  // 12-week window closes on 2026-03-30
  EXPECT_EQ(code_of([&] { store.append(id, dlt("P1", "2026-03-31T09:00:00Z")); }), C::Conflict);
  EXPECT_EQ(code_of([&] { store.append(id, completed("P1", "2026-03-29T09:00:00Z")); }), C::Conflict);
  EXPECT_EQ(code_of([&] { store.append(id, note("")); }), C::Invalid);
  Event created;
  created.kind = EventKind::TrialCreated;
  EXPECT_EQ(code_of([&] { store.append(id, created); }), C::Invalid);
  EXPECT_EQ(slurp(dir / (id + ".jsonl")), before);

  store.append(id, dlt("P1", "2026-03-30T09:00:00Z"));
  EXPECT_EQ(code_of([&] { store.append(id, dlt("P1", "2026-03-30T09:00:00Z")); }), C::Conflict);
  EXPECT_EQ(code_of([&] { store.append(id, completed("P1", "2026-04-01T09:00:00Z")); }), C::Conflict);
  store.append(id, completed("P2", "2026-04-13T09:00:00Z"));
  EXPECT_EQ(code_of([&] { store.append(id, dlt("P2", "2026-04-13T09:00:00Z")); }), C::Conflict);
}

TEST_F(StoreTest, RecommendRejectsAsOfBeforeTheLatestEvent) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  store.append(id, enroll("P1", 1, "2026-01-05T09:00:00Z"));
  store.append(id, enroll("P2", 1, "2026-01-19T09:00:00Z"));
  EXPECT_EQ(code_of([&] { store.recommend(id, ts("2026-01-18T09:00:00Z")); }), ServiceError::Code::Invalid);
  EXPECT_NO_THROW(store.recommend(id, ts("2026-01-19T09:00:00Z")));
}

TEST_F(StoreTest, WeightTableMatchesTheDesignEngine) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  store.append(id, enroll("P1", 1, "2026-01-05T00:00:00Z"));
  store.append(id, enroll("P2", 1, "2026-01-19T00:00:00Z"));
  store.append(id, enroll("P3", 2, "2026-02-02T00:00:00Z"));
  store.append(id, dlt("P2", "2026-02-09T00:00:00Z"));
  const Timestamp as_of = ts("2026-02-16T00:00:00Z");
  const Recommendation r = store.recommend(id, as_of);
  EXPECT_DOUBLE_EQ(r.clock, 6.0);

  TrialState state(5);
  state.enroll(Patient{"P1", 1, 0.0, std::nullopt, false});
  state.enroll(Patient{"P2", 1, 2.0, 3.0, false});
  state.enroll(Patient{"P3", 2, 4.0, std::nullopt, false});
  const designs::ModelEvaluation ev = designs::evaluate_model(state, 6.0, designs::DesignConfig{});
  EXPECT_EQ(r.dose, ev.dose);
  ASSERT_EQ(r.weights.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.weights[i].followup, ev.rows[i].followup);
    EXPECT_EQ(r.weights[i].event_coefficient, ev.rows[i].record.event_weight);
    EXPECT_EQ(r.weights[i].nonevent_coefficient, ev.rows[i].record.nonevent_weight);
  }
  EXPECT_EQ(r.weights[1].status, FollowupStatus::Dlt);
  EXPECT_EQ(r.weights[1].event_coefficient, 1.0);
  EXPECT_EQ(r.mean_tox, ev.posterior.mean_tox);

  const json j = store.recommendation_json(id, r);
  EXPECT_EQ(j.at("weights").size(), 3u);
  EXPECT_EQ(j.at("weights")[1].at("status"), "dlt");
  EXPECT_EQ(j.at("as_of"), "2026-02-16T00:00:00Z");
}

TEST_F(StoreTest, SaturatedWeightsIgnoreFurtherClockAdvance) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  store.append(id, enroll("P1", 1, "2026-01-05T00:00:00Z"));
  store.append(id, enroll("P2", 2, "2026-01-19T00:00:00Z"));
  store.append(id, enroll("P3", 3, "2026-02-02T00:00:00Z"));
  const Recommendation a = store.recommend(id, ts("2026-06-01T00:00:00Z"));
  for (const char* later : {"2026-09-01T00:00:00Z", "2027-06-01T00:00:00Z"}) {
    const Recommendation b = store.recommend(id, ts(later));
    EXPECT_EQ(b.dose, a.dose);
    EXPECT_EQ(b.mean_tox, a.mean_tox);
  }
}

TEST_F(StoreTest, DedupeTokens) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  Event e = enroll("P1", 1, "2026-01-05T09:00:00Z");
  e.dedupe_token = "form-17";
  const AppendResult first = store.append(id, e);
  const AppendResult again = store.append(id, e);
  EXPECT_FALSE(first.duplicate);
  EXPECT_TRUE(again.duplicate);
  EXPECT_EQ(again.seq, first.seq);
  EXPECT_EQ(store.trial_state(id).at("event_count"), 2);
  Event other = enroll("P2", 1, "2026-01-19T09:00:00Z");
  other.dedupe_token = "form-17";
  EXPECT_EQ(code_of([&] { store.append(id, other); }), ServiceError::Code::Conflict);

  EventStore reopened(dir.path());
  EXPECT_TRUE(reopened.append(id, e).duplicate);
}

TEST_F(StoreTest, RestartReproducesStateAndRecommendations) {
  const Timestamp as_of = ts("2026-03-01T00:00:00Z");
  json state_before, rec_before;
  std::string id;
  {
    EventStore store(dir.path());
    id = make_trial(store);
    store.append(id, enroll("P1", 1, "2026-01-05T00:00:00Z"));
    store.append(id, enroll("P2", 2, "2026-01-19T00:00:00Z"));
    store.append(id, dlt("P1", "2026-01-26T13:45:10.123Z"));
    store.append(id, enroll("P3", 2, "2026-02-02T00:00:00Z"));
    store.append(id, note("site 2 activated"));
    state_before = store.trial_state(id);
    rec_before = store.recommendation_json(id, store.recommend(id, as_of));
  }
  EventStore store(dir.path());
  EXPECT_EQ(store.trial_state(id), state_before);
  EXPECT_EQ(store.recommendation_json(id, store.recommend(id, as_of)), rec_before);
  EXPECT_EQ(make_trial(store), "trial-2");
}

TEST_F(StoreTest, WhatIfLeavesTheLogUntouched) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  store.append(id, enroll("P1", 1, "2026-01-05T00:00:00Z"));
  store.append(id, enroll("P2", 2, "2026-01-19T00:00:00Z"));
  const Timestamp as_of = ts("2026-02-02T00:00:00Z");
  const std::string file_before = slurp(dir / (id + ".jsonl"));
  const json state_before = store.trial_state(id);

  const Recommendation empty = store.what_if(id, {}, as_of);
  const Recommendation real = store.recommend(id, as_of);
  EXPECT_TRUE(empty.hypothetical);
  EXPECT_EQ(empty.dose, real.dose);
  EXPECT_EQ(empty.mean_tox, real.mean_tox);

  const Recommendation h = store.what_if(id, {dlt("P2", "2026-02-02T00:00:00Z"), enroll("P3", 1, "2026-02-02T00:00:00Z")},
                                         as_of);
  EXPECT_EQ(h.weights.size(), 3u);
  EXPECT_EQ(h.weights[1].status, FollowupStatus::Dlt);
  EXPECT_EQ(slurp(dir / (id + ".jsonl")), file_before);
  EXPECT_EQ(store.trial_state(id), state_before);
  EXPECT_EQ(store.recommend(id, as_of).mean_tox, real.mean_tox);

  EXPECT_EQ(code_of([&] { store.what_if(id, {dlt("P9", "2026-02-02T00:00:00Z")}, as_of); }),
            ServiceError::Code::Conflict);
  EXPECT_EQ(code_of([&] { store.what_if(id, {enroll("P3", 7, "2026-02-02T00:00:00Z")}, as_of); }),
            ServiceError::Code::Invalid);
}

// A hypothetical DLT on a pending patient never raises the recommendation.
TEST(WhatIfPropertyTest, HypotheticalDltDoesNotRaiseTheDose) {
  const auto scenarios = sim::reference_scenarios();
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int t = 0; t < 60; ++t) {
    TempDir dir;
    EventStore store(dir.path());
    sim::TrialConfig config;
    config.design.design = t % 3 == 0 ? designs::DesignId::Tite
                           : t % 3 == 1 ? designs::DesignId::AwMle
                                        : designs::DesignId::AwBayes;
    const auto& scenario = scenarios[static_cast<std::size_t>(t) % scenarios.size()];
    config.n_patients = 4 + static_cast<int>(rng() % 20);
    replay::replay_trial(store, "t", scenario, config, sim::derive_seed(99, static_cast<std::uint64_t>(t)));

    const json state = store.trial_state("t");
    const Timestamp as_of = ts(state.at("patients").back().at("enrolled_at").get<std::string>()) + std::chrono::hours(24);
    const Recommendation actual = store.recommend("t", as_of);
    for (const auto& p : state.at("patients")) {
      if (p.at("status") != "pending") continue;
      if (as_of - ts(p.at("enrolled_at").get<std::string>()) > std::chrono::weeks(12)) continue;
      const Recommendation h = store.what_if("t", {dlt(p.at("id").get<std::string>(), format_timestamp(as_of))}, as_of);
      EXPECT_LE(h.dose, actual.dose) << "trial " << t << " patient " << p.at("id");
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(SimulatorEquivalenceTest, ReplayedTrialsReproduceEveryDecision) {
  const auto scenarios = sim::reference_scenarios();
  TempDir dir;
  EventStore store(dir.path());
  std::size_t decisions = 0;
  for (int t = 0; t < 12; ++t) {
    sim::TrialConfig config;
    config.design.design = t % 3 == 0 ? designs::DesignId::Tite
                           : t % 3 == 1 ? designs::DesignId::AwMle
                                        : designs::DesignId::AwBayes;
    const auto out = replay::replay_trial(store, "sim-" + std::to_string(t), scenarios[t % 3], config,
                                          sim::derive_seed(2024, static_cast<std::uint64_t>(t)));
    EXPECT_EQ(out.mismatches, 0u) << out.first_mismatch;
    decisions += out.decisions;
  }
  EXPECT_EQ(decisions, 12u * 30u);
}

TEST_F(StoreTest, ConcurrentAppendsGetDistinctOrderedSequenceNumbers) {
  EventStore store(dir.path());
  const std::string id = make_trial(store);
  constexpr int threads = 8;
  constexpr int per_thread = 25;
  std::vector<std::vector<std::uint64_t>> seqs(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = 0; i < per_thread; ++i) {
        seqs[t].push_back(store.append(id, note("t" + std::to_string(t) + "-" + std::to_string(i))).seq);
      }
    });
  }
  for (auto& th : pool) th.join();
  std::set<std::uint64_t> all;
  for (const auto& s : seqs) {
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    all.insert(s.begin(), s.end());
  }
  EXPECT_EQ(all.size(), static_cast<std::size_t>(threads * per_thread));
  EXPECT_EQ(*all.begin(), 2u);
  EXPECT_EQ(*all.rbegin(), static_cast<std::uint64_t>(threads * per_thread + 1));
  EventStore reopened(dir.path());
  EXPECT_EQ(reopened.trial_state(id).at("event_count"), threads * per_thread + 1);
}

class CorruptLogTest : public StoreTest {
 protected:
  std::filesystem::path seeded_log() {
    {
      EventStore store(dir.path());
      store.create_trial({{"id", "a"}});
      store.append("a", enroll("P1", 1, "2026-01-05T00:00:00Z"));
      store.append("a", enroll("P2", 1, "2026-01-19T00:00:00Z"));
    }
    return dir / "a.jsonl";
  }

  std::size_t failing_line() {
    try {
      EventStore store(dir.path());
    } catch (const CorruptLog& e) {
      EXPECT_EQ(e.file(), dir / "a.jsonl");
      return e.line();
    }
    ADD_FAILURE() << "log was accepted";
    return 0;
  }

  std::vector<std::string> lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  void write_lines(const std::filesystem::path& p, const std::vector<std::string>& ls, bool final_newline = true) {
    std::ofstream out(p, std::ios::trunc);
    for (std::size_t i = 0; i < ls.size(); ++i) {
      out << ls[i];
      if (i + 1 < ls.size() || final_newline) out << '\n';
    }
  }
};

TEST_F(CorruptLogTest, ReportsTheOffendingLine) {
  const auto file = seeded_log();
  auto ls = lines(file);
  ASSERT_EQ(ls.size(), 3u);

  write_lines(file, {ls[0], "{not json", ls[2]});
  EXPECT_EQ(failing_line(), 2u);

  write_lines(file, {ls[0], ls[2], ls[1]});
  EXPECT_EQ(failing_line(), 2u);

  write_lines(file, {ls[0], ls[1], ls[2]}, false);
  EXPECT_EQ(failing_line(), 3u);

  json dup = json::parse(ls[2]);
  dup["patient_id"] = "P1";
  write_lines(file, {ls[0], ls[1], dup.dump()});
  EXPECT_EQ(failing_line(), 3u);

  write_lines(file, {ls[1]});
  EXPECT_EQ(failing_line(), 1u);

  std::filesystem::rename(file, dir / "b.jsonl");
  write_lines(dir / "b.jsonl", {ls[0]});
  try {
    EventStore store(dir.path());
    FAIL();
  } catch (const CorruptLog& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}
