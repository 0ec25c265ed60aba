#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "awtite/error.hpp"
#include "awtite/sim.hpp"

using namespace awtite;
using namespace awtite::sim;
using designs::DesignId;

namespace {

TrialConfig trial_config(DesignId id, int n = 30, double accrual = 2.0) {
  TrialConfig cfg;
  cfg.n_patients = n;
  cfg.accrual_interval = accrual;
  cfg.design.design = id;
  return cfg;
}

const Scenario& standard() {
  static const Scenario s = reference_scenarios().front();
  return s;
}

bool same_result(const TrialResult& a, const TrialResult& b) {
  return a.selected_mtd == b.selected_mtd && a.doses == b.doses && a.dlt_count == b.dlt_count &&
         a.fraction_above_mtd == b.fraction_above_mtd && a.duration == b.duration &&
         a.stopped_early == b.stopped_early;
}

}  // namespace

TEST(ScenarioTest, ReferenceScenarios) {
  const auto s = reference_scenarios();
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].name, "standard");
  EXPECT_EQ(s[0].true_mtd, 3);
  EXPECT_EQ(s[1].true_mtd, 4);
  EXPECT_EQ(s[2].true_mtd, 4);
  EXPECT_THROW(Scenario::make("x", {0.05, 0.10, 0.20}, 0.25, 2.0, 1), DomainError);
  EXPECT_THROW(Scenario::make("x", {0.05, 1.0}, 0.25), DomainError);
  EXPECT_THROW(Scenario::make("x", {0.05, 0.1}, 0.25, 0.0), DomainError);
}

TEST(SeedTest, SplitmixReferenceValues) {
  // first outputs of the reference splitmix64 generator seeded with 0
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64(0x9E3779B97F4A7C15ULL), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(derive_seed(7, 3), splitmix64(7 ^ splitmix64(3)));
  EXPECT_NE(derive_seed(7, 3), derive_seed(7, 4));
}

TEST(SeedTest, UniformStreamStaysInsideUnitInterval) {
  UniformStream u(1);
  for (int i = 0; i < 100000; ++i) {
    const double v = u.next();
    ASSERT_GT(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
}

TEST(RunTrialTest, ZeroHazardEscalatesToTopDose) {
  const Scenario zero = Scenario::make("zero", {0, 0, 0, 0, 0}, 0.25);
  for (DesignId id : {DesignId::Tite, DesignId::AwMle, DesignId::AwBayes}) {
    const TrialResult r = run_trial(zero, trial_config(id), 99);
    EXPECT_EQ(r.dlt_count, 0);
    EXPECT_EQ(r.doses.front(), 1);
    for (std::size_t i = 1; i < r.doses.size(); ++i) {
      EXPECT_GE(r.doses[i], r.doses[i - 1]) << designs::to_string(id);
      EXPECT_LE(r.doses[i], r.doses[i - 1] + 1) << designs::to_string(id);
    }
    // the prior keeps dose 5 above target for one extra decision at dose 4
    EXPECT_EQ(r.doses[6], 5);
    EXPECT_EQ(r.doses.back(), 5);
    EXPECT_EQ(r.selected_mtd, 5);
    EXPECT_EQ(r.doses.size(), 30u);
    EXPECT_DOUBLE_EQ(r.duration, 29 * 2.0 + 12.0);
  }
}

TEST(RunTrialTest, Deterministic) {
  for (DesignId id : designs::all_designs()) {
    const TrialConfig cfg = trial_config(id);
    EXPECT_TRUE(same_result(run_trial(standard(), cfg, 1234), run_trial(standard(), cfg, 1234)));
  }
}

TEST(RunTrialTest, TraceDoesNotChangeTheResult) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrialTrace trace;
    const TrialConfig cfg = trial_config(DesignId::AwMle);
    EXPECT_TRUE(same_result(run_trial(standard(), cfg, seed), run_trial(standard(), cfg, seed, &trace)));
    EXPECT_EQ(trace.decisions.size(), 30u);
  }
}

// Rebuild every logged adaptive weight from the latent event times alone.
TEST(RunTrialTest, ReplayedWeightsMatchHandComputation) {
  const TrialConfig cfg = trial_config(DesignId::AwMle);
  TrialTrace trace;
  run_trial(standard(), cfg, 2024, &trace);
  const double t_max = 12.0;
  int checked = 0;
  for (const DecisionTrace& d : trace.decisions) {
    std::map<int, std::pair<int, double>> per_dose;  // dose -> (events, sum u^2)
    int events = 0;
    double exposure = 0.0;
    std::vector<double> u(d.patient);
    std::vector<bool> dlt(d.patient);
    for (std::size_t i = 0; i < d.patient; ++i) {
      const Patient& p = trace.patients[i];
      const double elapsed = std::min(d.clock - p.enroll_time, t_max);
      dlt[i] = p.dlt_time && *p.dlt_time <= elapsed;
      u[i] = dlt[i] ? *p.dlt_time : elapsed;
      auto& [e, s] = per_dose[p.dose];
      e += dlt[i];
      s += u[i] * u[i];
      events += dlt[i];
      exposure += u[i] * u[i];
    }
    ASSERT_EQ(d.rows.size(), d.patient);
    for (std::size_t i = 0; i < d.patient; ++i) {
      const auto& row = d.rows[i];
      const Patient& p = trace.patients[i];
      if (dlt[i]) {
        EXPECT_EQ(row.record.event_weight, 1.0);
        continue;
      }
      if (u[i] >= t_max) {
        EXPECT_EQ(row.record.nonevent_weight, 1.0);
        continue;
      }
      if (events == 0) {
        EXPECT_NEAR(row.record.nonevent_weight, u[i] / t_max, 1e-14);
        EXPECT_EQ(row.record.event_weight, 0.0);
        continue;
      }
      const auto [e, s] = per_dose[p.dose];
      const double rate = e > 0 ? e / s : events / exposure;
      const double w = 1.0 - std::exp(-rate * (t_max * t_max - u[i] * u[i]));
      EXPECT_NEAR(*row.weight, w, 1e-12);
      EXPECT_NEAR(row.record.event_weight, w, 1e-12);
      EXPECT_NEAR(row.record.nonevent_weight, 1.0 - w, 1e-12);
      ++checked;
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(RunTrialTest, DltCountMatchesLatentTimes) {
  for (DesignId id : designs::all_designs()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      TrialTrace trace;
      const TrialResult r = run_trial(standard(), trial_config(id), seed, &trace);
      int within = 0;
      for (const Patient& p : trace.patients) within += p.dlt_time && *p.dlt_time <= 12.0;
      EXPECT_EQ(r.dlt_count, within);
      EXPECT_LE(r.dlt_count, static_cast<int>(r.doses.size()));
      EXPECT_GE(r.fraction_above_mtd, 0.0);
      EXPECT_LE(r.fraction_above_mtd, 1.0);
    }
  }
}

TEST(RunTrialTest, AlgorithmDesignsEnrollCohorts) {
  const TrialResult r = run_trial(standard(), trial_config(DesignId::Boin), 5);
  ASSERT_EQ(r.doses.size(), 30u);
  for (std::size_t i = 0; i < 30; i += 3) {
    EXPECT_EQ(r.doses[i], r.doses[i + 1]);
    EXPECT_EQ(r.doses[i], r.doses[i + 2]);
  }
  // ten cohorts, each enrolled over 2 * 2 weeks then followed for 12
  EXPECT_DOUBLE_EQ(r.duration, 10 * 16.0);
}

TEST(RunTrialTest, ThreePlusThreeStopsOnToxicity) {
  const Scenario toxic = Scenario::make("toxic", {0.9, 0.95, 0.96, 0.97, 0.98}, 0.25);
  const TrialResult r = run_trial(toxic, trial_config(DesignId::ThreePlusThree), 3);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.selected_mtd, std::nullopt);
  EXPECT_LE(r.doses.size(), 6u);
}

TEST(RunTrialTest, ResolvedDataMakesModelDesignsAgree) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto tite = run_trial(standard(), trial_config(DesignId::Tite, 30, 12.0), seed);
    EXPECT_EQ(run_trial(standard(), trial_config(DesignId::AwMle, 30, 12.0), seed).doses, tite.doses);
    EXPECT_EQ(run_trial(standard(), trial_config(DesignId::AwBayes, 30, 12.0), seed).doses, tite.doses);
  }
}

TEST(CalibrationTest, EmpiricalFrequencyAtFixedDose) {
  const timing::WeibullShape shape(2.0);
  for (double p : standard().true_probs) {
    const timing::DoseRate rate = timing::calibrate_rate(p, 12.0, shape);
    UniformStream u(static_cast<std::uint64_t>(p * 1000));
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const auto t = timing::sample_dlt_time(rate, shape, u.next());
      hits += t && *t <= 12.0;
    }
    EXPECT_NEAR(static_cast<double>(hits) / n, p, 3.0 * std::sqrt(p * (1.0 - p) / n));
  }
}

TEST(MetricsTest, HandFixture) {
  const Scenario s = standard();
  auto result = [](std::optional<int> mtd, std::vector<int> doses, int dlts) {
    TrialResult r;
    r.selected_mtd = mtd;
    int above = 0;
    for (int d : doses) above += d > 3;
    r.fraction_above_mtd = static_cast<double>(above) / static_cast<double>(doses.size());
    r.doses = std::move(doses);
    r.dlt_count = dlts;
    r.duration = 10.0 * static_cast<double>(r.doses.size());
    return r;
  };
  const std::vector<TrialResult> five = {
      result(3, {1, 2, 3, 4, 3}, 1),     // above 1/5
      result(3, {1, 2, 3, 3, 3}, 0),     // above 0
      result(4, {1, 2, 3, 4, 4}, 2),     // above 2/5
      result(std::nullopt, {1, 1}, 2),   // above 0
      result(2, {1, 2, 3, 4, 5}, 3),     // above 2/5
  };
  const OperatingCharacteristics oc = compute_metrics(five, s);
  EXPECT_EQ(oc.replications, 5);
  EXPECT_DOUBLE_EQ(oc.p_correct, 0.4);
  EXPECT_NEAR(oc.se_p_correct, std::sqrt(0.4 * 0.6 / 5.0), 1e-15);
  EXPECT_NEAR(oc.mean_fraction_above, (0.2 + 0.0 + 0.4 + 0.0 + 0.4) / 5.0, 1e-15);
  EXPECT_DOUBLE_EQ(oc.mean_dlts, 8.0 / 5.0);
  // sample sd of (1, 0, 2, 2, 3) is sqrt(1.3)
  EXPECT_NEAR(oc.se_dlts, std::sqrt(1.3 / 5.0), 1e-15);
  EXPECT_DOUBLE_EQ(oc.mean_enrolled, 22.0 / 5.0);
  EXPECT_DOUBLE_EQ(oc.mean_duration, 44.0);
  const std::vector<double> sel = {0.2, 0.0, 0.2, 0.4, 0.2, 0.0};
  for (std::size_t k = 0; k < sel.size(); ++k) EXPECT_NEAR(oc.selection[k], sel[k], 1e-15);
}

TEST(MetricsTest, SimpleCases) {
  TrialResult a, b;
  a.selected_mtd = b.selected_mtd = 3;
  a.doses = b.doses = {1};
  a.fraction_above_mtd = 0.2;
  b.fraction_above_mtd = 0.4;
  const auto oc = compute_metrics({a, b}, standard());
  EXPECT_DOUBLE_EQ(oc.p_correct, 1.0);
  EXPECT_NEAR(oc.mean_fraction_above, 0.3, 1e-15);
  EXPECT_THROW(compute_metrics({}, standard()), DomainError);
}

TEST(BatchTest, SingleReplicationEqualsTrial) {
  const TrialConfig cfg = trial_config(DesignId::AwMle);
  const TrialResult r = run_trial(standard(), cfg, derive_seed(77, 0));
  const OperatingCharacteristics oc = run_batch(standard(), cfg, 1, 77);
  EXPECT_EQ(oc.p_correct, r.selected_mtd == 3 ? 1.0 : 0.0);
  EXPECT_EQ(oc.mean_fraction_above, r.fraction_above_mtd);
  EXPECT_EQ(oc.mean_dlts, r.dlt_count);
  EXPECT_EQ(oc.se_dlts, 0.0);
}

TEST(BatchTest, SelectionSumsToOne) {
  for (DesignId id : designs::all_designs()) {
    const auto oc = run_batch(standard(), trial_config(id), 40, 8);
    double total = 0.0;
    for (double s : oc.selection) total += s;
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(BatchTest, ResultsIndependentOfThreadCount) {
  const TrialConfig cfg = trial_config(DesignId::Tite);
  const auto one = simulate_trials(standard(), cfg, 24, 5, 1);
  const auto three = simulate_trials(standard(), cfg, 24, 5, 3);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_TRUE(same_result(one[i], three[i])) << i;
  EXPECT_THROW(simulate_trials(standard(), cfg, 0, 5), DomainError);
}
