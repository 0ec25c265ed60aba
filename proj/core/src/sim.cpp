#include "awtite/sim.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "awtite/error.hpp"

namespace awtite::sim {

Scenario Scenario::make(std::string name, std::vector<double> true_probs, double target, double gamma_true,
                        std::optional<int> declared_mtd) {
  if (true_probs.size() < 2) throw DomainError("scenario needs at least two doses");
  for (double p : true_probs) {
    if (!(p >= 0.0 && p < 1.0)) throw DomainError("true DLT probabilities must lie in [0, 1)");
  }
  timing::WeibullShape{gamma_true};
  Scenario s{std::move(name), std::move(true_probs), 1, gamma_true};
  s.true_mtd = crm::closest_to_target(s.true_probs, target, s.num_doses());
  if (declared_mtd && *declared_mtd != s.true_mtd) {
    throw DomainError("declared true MTD " + std::to_string(*declared_mtd) + " differs from the dose closest to target (" +
                      std::to_string(s.true_mtd) + ")");
  }
  return s;
}

std::vector<Scenario> reference_scenarios(double target) {
  return {Scenario::make("standard", {0.05, 0.10, 0.20, 0.35, 0.50}, target),
          Scenario::make("steep", {0.02, 0.05, 0.10, 0.25, 0.50}, target),
          Scenario::make("flat", {0.10, 0.15, 0.20, 0.25, 0.30}, target)};
}

void TrialConfig::validate() const {
  if (n_patients < 1) throw DomainError("n_patients must be at least 1");
  if (!(accrual_interval > 0.0)) throw DomainError("accrual_interval must be positive");
  design.validate();
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) noexcept {
  return splitmix64(base_seed ^ splitmix64(index));
}

double UniformStream::next() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

namespace {

class LatentSampler {
 public:
  LatentSampler(const Scenario& scenario, double t_max, std::uint64_t seed)
      : shape_(scenario.gamma_true), stream_(seed) {
    for (double p : scenario.true_probs) rates_.push_back(timing::calibrate_rate(p, t_max, shape_));
  }

  std::optional<double> draw(int dose) {
    return timing::sample_dlt_time(rates_.at(static_cast<std::size_t>(dose - 1)), shape_, stream_.next());
  }

 private:
  timing::WeibullShape shape_;
  UniformStream stream_;
  std::vector<timing::DoseRate> rates_;
};

TrialResult summarize(const TrialState& state, const Scenario& scenario, double t_max) {
  TrialResult r;
  int above = 0;
  for (const Patient& p : state.patients()) {
    r.doses.push_back(p.dose);
    if (p.dlt_time && *p.dlt_time <= t_max) ++r.dlt_count;
    if (p.dose > scenario.true_mtd) ++above;
  }
  r.fraction_above_mtd = state.empty() ? 0.0 : static_cast<double>(above) / static_cast<double>(state.size());
  return r;
}

}  // namespace

TrialResult run_trial(const Scenario& scenario, const TrialConfig& config, std::uint64_t seed, TrialTrace* trace) {
  const designs::DesignConfig& cfg = config.design;
  if (scenario.num_doses() != cfg.num_doses()) {
    throw DomainError("scenario and skeleton disagree on the number of doses");
  }
  TrialState state(cfg.num_doses());
  LatentSampler sampler(scenario, cfg.t_max, seed);
  const double a = config.accrual_interval;
  auto enroll = [&](int dose, double clock) {
    state.enroll(Patient{std::to_string(state.size() + 1), dose, clock, sampler.draw(dose), false});
  };

  std::optional<int> mtd;
  bool stopped = false;
  double end_clock = 0.0;

  if (designs::is_model_based(cfg.design)) {
    for (int i = 0; i < config.n_patients; ++i) {
      const double clock = i * a;
      int dose = 1;
      if (trace != nullptr) {
        designs::ModelEvaluation ev = designs::evaluate_model(state, clock, cfg);
        dose = ev.dose;
        trace->decisions.push_back({state.size(), clock, dose, std::move(ev.rows), ev.posterior.mean_tox});
      } else if (i > 0) {
        dose = designs::next_dose(state, clock, cfg).dose;
      }
      enroll(dose, clock);
    }
    end_clock = state.patients().back().enroll_time + cfg.t_max;
    mtd = designs::final_mtd(state, cfg);
  } else {
    double clock = 0.0;
    int dose = 1;
    const int cohort = cfg.cohort_size;
    while (static_cast<int>(state.size()) < config.n_patients) {
      const int remaining = config.n_patients - static_cast<int>(state.size());
      // 3+3 rules are only defined on whole cohorts
      if (cfg.design == designs::DesignId::ThreePlusThree && remaining < cohort) break;
      const int size = std::min(cohort, remaining);
      for (int j = 0; j < size; ++j) enroll(dose, clock + j * a);
      clock = state.patients().back().enroll_time + cfg.t_max;
      const designs::Decision d = designs::next_dose(state, clock, cfg);
      if (d.ends_trial()) {
        mtd = d.mtd;
        stopped = true;
        break;
      }
      dose = d.dose;
    }
    end_clock = clock;
    if (!stopped) mtd = designs::final_mtd(state, cfg);
  }

  TrialResult r = summarize(state, scenario, cfg.t_max);
  r.selected_mtd = mtd;
  r.duration = end_clock;
  r.stopped_early = stopped && static_cast<int>(state.size()) < config.n_patients;
  if (trace != nullptr) trace->patients = state.patients();
  return r;
}

OperatingCharacteristics compute_metrics(const std::vector<TrialResult>& results, const Scenario& scenario) {
  if (results.empty()) throw DomainError("no trial results to summarize");
  const auto r = static_cast<double>(results.size());
  OperatingCharacteristics oc;
  oc.replications = static_cast<int>(results.size());
  oc.selection.assign(static_cast<std::size_t>(scenario.num_doses() + 1), 0.0);

  double correct = 0.0, frac = 0.0, frac_sq = 0.0, dlts = 0.0, dlts_sq = 0.0, enrolled = 0.0, duration = 0.0;
  for (const TrialResult& t : results) {
    const int pick = t.selected_mtd.value_or(0);
    if (pick < 0 || pick > scenario.num_doses()) throw DomainError("selected dose out of range");
    oc.selection[static_cast<std::size_t>(pick)] += 1.0;
    if (t.selected_mtd && *t.selected_mtd == scenario.true_mtd) correct += 1.0;
    frac += t.fraction_above_mtd;
    frac_sq += t.fraction_above_mtd * t.fraction_above_mtd;
    dlts += t.dlt_count;
    dlts_sq += static_cast<double>(t.dlt_count) * t.dlt_count;
    enrolled += static_cast<double>(t.doses.size());
    duration += t.duration;
  }
  auto se_mean = [r](double sum, double sum_sq) {
    if (r < 2.0) return 0.0;
    const double mean = sum / r;
    const double var = std::max(0.0, (sum_sq - r * mean * mean) / (r - 1.0));
    return std::sqrt(var / r);
  };
  auto se_prop = [r](double p) { return std::sqrt(p * (1.0 - p) / r); };

  oc.p_correct = correct / r;
  oc.se_p_correct = se_prop(oc.p_correct);
  oc.mean_fraction_above = frac / r;
  oc.se_fraction_above = se_mean(frac, frac_sq);
  oc.mean_dlts = dlts / r;
  oc.se_dlts = se_mean(dlts, dlts_sq);
  oc.mean_enrolled = enrolled / r;
  oc.mean_duration = duration / r;
  for (double& s : oc.selection) s /= r;
  for (double s : oc.selection) oc.se_selection.push_back(se_prop(s));
  return oc;
}

std::vector<TrialResult> simulate_trials(const Scenario& scenario, const TrialConfig& config, int replications,
                                         std::uint64_t base_seed, int jobs) {
  if (replications < 1) throw DomainError("replications must be at least 1");
  config.validate();
  std::vector<TrialResult> results(static_cast<std::size_t>(replications));
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, replications);

  auto work = [&](int worker) {
    for (int i = worker; i < replications; i += jobs) {
      results[static_cast<std::size_t>(i)] =
          run_trial(scenario, config, derive_seed(base_seed, static_cast<std::uint64_t>(i)));
    }
  };
  if (jobs == 1) {
    work(0);
    return results;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  {
    std::vector<std::jthread> threads;
    for (int w = 0; w < jobs; ++w) {
      threads.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

OperatingCharacteristics run_batch(const Scenario& scenario, const TrialConfig& config, int replications,
                                   std::uint64_t base_seed, int jobs) {
  return compute_metrics(simulate_trials(scenario, config, replications, base_seed, jobs), scenario);
}

}  // namespace awtite::sim
