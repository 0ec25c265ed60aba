#pragma once

// Bootstrap comparison of two designs and one-parameter sensitivity sweeps.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "awtite/sim.hpp"

namespace awtite::analysis {

enum class Metric { PCorrect, FractionAbove, Dlts };
enum class Direction { HigherIsBetter, LowerIsBetter };

std::string_view to_string(Metric m);
// "p_correct", "fraction_above", "dlts"
Metric parse_metric(std::string_view name);
Direction direction(Metric m);

// Per-trial value of a metric: 1/0 for a correct selection, the fraction of
// patients above the true MTD, or the DLT count.
double trial_metric(const sim::TrialResult& r, int true_mtd, Metric m);
std::vector<double> trial_metrics(std::span<const sim::TrialResult> results, int true_mtd, Metric m);

// Per-trial values for one method, one vector per scenario.
using ByScenario = std::vector<std::vector<double>>;

struct ComparisonReport {
  std::string metric;
  double mean_difference = 0.0;  // A - B, averaged over scenarios
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p_one_sided = 0.0;  // share of resamples in which B does better than A
  double p_two_sided = 0.0;
  int resamples = 0;
  bool ci_excludes_estimate = false;  // percentile interval misses the point estimate
};

// Bootstrap distribution of the cross-scenario mean difference A - B, with
// trials resampled independently within each scenario and each method.
std::vector<double> bootstrap_differences(const ByScenario& a, const ByScenario& b, int n_boot,
                                          std::uint64_t seed);

ComparisonReport bootstrap_compare(const ByScenario& a, const ByScenario& b, Metric metric, int n_boot,
                                   std::uint64_t seed);

// Type-7 sample quantile of sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

struct Variation {
  double percent = 0.0;
  bool degenerate = false;  // fewer than two values, reported as 0
};

// 100 * sd / mean with the n - 1 divisor.
Variation coefficient_of_variation(std::span<const double> values);

// ---- sweeps -----------------------------------------------------------------

enum class SweepParameter { AccrualInterval, NPatients, GammaAssumed, TMax, Prior };

std::string_view to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view name);

using SweepValue = std::variant<double, timing::GammaPrior>;

std::string format_sweep_value(const SweepValue& v);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::AccrualInterval;
  std::vector<SweepValue> grid;
  sim::TrialConfig base;
  std::vector<sim::Scenario> scenarios;
  std::vector<designs::DesignId> designs;
  int replications = 2000;
  std::uint64_t base_seed = 0;
  int jobs = 1;

  void validate() const;
};

// Named grids: accrual, sample-size, gamma, window, prior. Designs and
// scenarios are left for the caller.
struct SweepPreset {
  std::string name;
  SweepParameter parameter;
  std::vector<SweepValue> grid;
  std::vector<designs::DesignId> designs;
};

const std::vector<SweepPreset>& sweep_presets();
const SweepPreset& find_preset(std::string_view name);

// Base config with one parameter replaced.
sim::TrialConfig apply_sweep_value(const sim::TrialConfig& base, SweepParameter p, const SweepValue& v);

struct SweepPoint {
  std::size_t grid_index = 0;
  SweepValue value;
  designs::DesignId design = designs::DesignId::AwMle;
  std::string scenario;
  sim::OperatingCharacteristics oc;
};

// Every grid point reuses base_seed, so the simulated patients are shared
// across the grid and each point equals a standalone run_batch.
std::vector<SweepPoint> run_sweep(const SweepSpec& spec);

}  // namespace awtite::analysis
