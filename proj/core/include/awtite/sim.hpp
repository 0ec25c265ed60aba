#pragma once

// Discrete-event trial simulator and operating-characteristic summaries.
//
// Model-based designs enroll one patient every accrual_interval and decide
// at each enrollment from the data visible at that instant. Algorithm designs
// enroll cohorts and decide only once the whole cohort has been followed for
// t_max. Latent DLT times are drawn once, at enrollment, by inverse CDF from
// a Weibull with rate calibrated to the scenario's true probability.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "awtite/designs.hpp"

namespace awtite::sim {

struct Scenario {
  std::string name;
  std::vector<double> true_probs;
  int true_mtd = 1;  // 1-based
  double gamma_true = 2.0;

  // Validates probabilities, derives the true MTD for target and checks it
  // against declared_mtd when one is given.
  static Scenario make(std::string name, std::vector<double> true_probs, double target,
                       double gamma_true = 2.0, std::optional<int> declared_mtd = std::nullopt);

  int num_doses() const noexcept { return static_cast<int>(true_probs.size()); }
};

// The three dose-toxicity curves of the reference study.
std::vector<Scenario> reference_scenarios(double target = 0.25);

struct TrialConfig {
  int n_patients = 30;
  double accrual_interval = 2.0;
  designs::DesignConfig design;

  void validate() const;
};

struct TrialResult {
  std::optional<int> selected_mtd;
  std::vector<int> doses;  // per enrolled patient
  int dlt_count = 0;
  double fraction_above_mtd = 0.0;
  double duration = 0.0;
  bool stopped_early = false;
};

struct DecisionTrace {
  std::size_t patient = 0;  // index of the patient this decision placed
  double clock = 0.0;
  int dose = 1;
  std::vector<designs::WeightRow> rows;
  std::vector<double> mean_tox;
};

struct TrialTrace {
  std::vector<Patient> patients;  // with latent DLT times
  std::vector<DecisionTrace> decisions;
};

// 64-bit splitmix finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed of replication `index`: splitmix64(base ^ splitmix64(index)).
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) noexcept;

// Open-interval uniform variates from a 64-bit Mersenne Twister.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : engine_(seed) {}
  double next();

 private:
  std::mt19937_64 engine_;
};

TrialResult run_trial(const Scenario& scenario, const TrialConfig& config, std::uint64_t seed,
                      TrialTrace* trace = nullptr);

struct OperatingCharacteristics {
  int replications = 0;
  double p_correct = 0.0;
  double se_p_correct = 0.0;
  double mean_fraction_above = 0.0;
  double se_fraction_above = 0.0;
  double mean_dlts = 0.0;
  double se_dlts = 0.0;
  double mean_enrolled = 0.0;
  double mean_duration = 0.0;
  // selection[0] = no MTD, selection[k] = dose k
  std::vector<double> selection;
  std::vector<double> se_selection;
};

OperatingCharacteristics compute_metrics(const std::vector<TrialResult>& results, const Scenario& scenario);

// Replications run on up to `jobs` threads (0 = hardware concurrency);
// results are indexed by replication so the output does not depend on jobs.
std::vector<TrialResult> simulate_trials(const Scenario& scenario, const TrialConfig& config,
                                         int replications, std::uint64_t base_seed, int jobs = 1);

OperatingCharacteristics run_batch(const Scenario& scenario, const TrialConfig& config, int replications,
                                   std::uint64_t base_seed, int jobs = 1);

}  // namespace awtite::sim
