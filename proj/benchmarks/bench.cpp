#include <benchmark/benchmark.h>

#include "awtite/designs.hpp"
#include "awtite/sim.hpp"

using namespace awtite;

namespace {

// A 20-patient trial snapshot half way through follow-up.
TrialState snapshot(int patients) {
  const auto scenario = sim::reference_scenarios().front();
  sim::TrialConfig cfg;
  cfg.n_patients = patients;
  sim::TrialTrace trace;
  sim::run_trial(scenario, cfg, 7, &trace);
  TrialState state(cfg.design.num_doses());
  for (const auto& p : trace.patients) state.enroll(p);
  return state;
}

void BM_Posterior(benchmark::State& st) {
  const TrialState state = snapshot(static_cast<int>(st.range(0)));
  designs::DesignConfig cfg;
  const double clock = state.patients().back().enroll_time;
  const auto records = designs::aw_records(state, clock, cfg);
  for (auto _ : st) {
    benchmark::DoNotOptimize(crm::posterior_mean_tox(records, cfg.skeleton, cfg.alpha_prior, cfg.quadrature));
  }
}
BENCHMARK(BM_Posterior)->Arg(10)->Arg(30)->Arg(50);

void BM_AwRecords(benchmark::State& st) {
  const TrialState state = snapshot(static_cast<int>(st.range(0)));
  designs::DesignConfig cfg;
  const double clock = state.patients().back().enroll_time;
  for (auto _ : st) benchmark::DoNotOptimize(designs::aw_records(state, clock, cfg));
}
BENCHMARK(BM_AwRecords)->Arg(10)->Arg(30)->Arg(50);

void BM_RunTrial(benchmark::State& st) {
  const auto scenario = sim::reference_scenarios().front();
  sim::TrialConfig cfg;
  cfg.design.design = static_cast<designs::DesignId>(st.range(0));
  std::uint64_t seed = 1;
  for (auto _ : st) benchmark::DoNotOptimize(sim::run_trial(scenario, cfg, seed++));
  st.SetLabel(std::string(designs::to_string(cfg.design.design)));
}
BENCHMARK(BM_RunTrial)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
