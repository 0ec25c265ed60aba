#include "awtite/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "awtite/error.hpp"

namespace awtite::analysis {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::PCorrect: return "p_correct";
    case Metric::FractionAbove: return "fraction_above";
    case Metric::Dlts: return "dlts";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::PCorrect, Metric::FractionAbove, Metric::Dlts}) {
    if (name == to_string(m)) return m;
  }
  throw DomainError("unknown metric '" + std::string(name) + "' (expected p_correct, fraction_above or dlts)");
}

Direction direction(Metric m) {
  return m == Metric::PCorrect ? Direction::HigherIsBetter : Direction::LowerIsBetter;
}

double trial_metric(const sim::TrialResult& r, int true_mtd, Metric m) {
  switch (m) {
    case Metric::PCorrect: return r.selected_mtd && *r.selected_mtd == true_mtd ? 1.0 : 0.0;
    case Metric::FractionAbove: return r.fraction_above_mtd;
    case Metric::Dlts: return static_cast<double>(r.dlt_count);
  }
  return 0.0;
}

std::vector<double> trial_metrics(std::span<const sim::TrialResult> results, int true_mtd, Metric m) {
  std::vector<double> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(trial_metric(r, true_mtd, m));
  return out;
}

namespace {

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void check_groups(const ByScenario& a, const ByScenario& b) {
  if (a.empty() || a.size() != b.size()) throw DomainError("both methods need results for the same scenarios");
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (a[s].empty() || b[s].empty()) throw DomainError("scenario " + std::to_string(s) + " has no trials");
  }
}

}  // namespace

std::vector<double> bootstrap_differences(const ByScenario& a, const ByScenario& b, int n_boot,
                                          std::uint64_t seed) {
  if (n_boot < 1) throw DomainError("n_boot must be at least 1");
  check_groups(a, b);
  std::mt19937_64 engine(seed);
  auto resampled_mean = [&engine](const std::vector<double>& v) {
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) sum += v[pick(engine)];
    return sum / static_cast<double>(v.size());
  };
  const auto scenarios = static_cast<double>(a.size());
  std::vector<double> diffs(static_cast<std::size_t>(n_boot));
  for (double& d : diffs) {
    double total = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) {
      const double ma = resampled_mean(a[s]);
      total += ma - resampled_mean(b[s]);
    }
    d = total / scenarios;
  }
  return diffs;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0, 1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ComparisonReport bootstrap_compare(const ByScenario& a, const ByScenario& b, Metric metric, int n_boot,
                                   std::uint64_t seed) {
  std::vector<double> diffs = bootstrap_differences(a, b, n_boot, seed);
  ComparisonReport rep;
  rep.metric = std::string(to_string(metric));
  rep.resamples = n_boot;
  double observed = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) observed += mean(a[s]) - mean(b[s]);
  rep.mean_difference = observed / static_cast<double>(a.size());

  const bool lower_better = direction(metric) == Direction::LowerIsBetter;
  std::size_t competitor_better = 0;
  for (double d : diffs) {
    if (lower_better ? d > 0.0 : d < 0.0) ++competitor_better;
  }
  rep.p_one_sided = static_cast<double>(competitor_better) / static_cast<double>(n_boot);
  rep.p_two_sided = std::min(1.0, 2.0 * std::min(rep.p_one_sided, 1.0 - rep.p_one_sided));

  std::sort(diffs.begin(), diffs.end());
  rep.ci_lower = quantile_sorted(diffs, 0.025);
  rep.ci_upper = quantile_sorted(diffs, 0.975);
  rep.ci_excludes_estimate = rep.mean_difference < rep.ci_lower || rep.mean_difference > rep.ci_upper;
  return rep;
}

Variation coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) throw DomainError("coefficient of variation of an empty sample");
  const double m = mean(values);
  if (m == 0.0) throw DomainError("coefficient of variation undefined for zero mean");
  if (values.size() == 1) return {0.0, true};
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return {100.0 * sd / std::abs(m), false};
}

// ---- sweeps -----------------------------------------------------------------

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::AccrualInterval: return "accrual_interval";
    case SweepParameter::NPatients: return "n_patients";
    case SweepParameter::GammaAssumed: return "gamma_assumed";
    case SweepParameter::TMax: return "t_max";
    case SweepParameter::Prior: return "prior";
  }
  return "?";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  for (SweepParameter p : {SweepParameter::AccrualInterval, SweepParameter::NPatients, SweepParameter::GammaAssumed,
                           SweepParameter::TMax, SweepParameter::Prior}) {
    if (name == to_string(p)) return p;
  }
  throw DomainError("unknown sweep parameter '" + std::string(name) + "'");
}

std::string format_sweep_value(const SweepValue& v) {
  auto num = [](double x) {
    std::string s = std::to_string(x);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  if (const auto* d = std::get_if<double>(&v)) return num(*d);
  const auto& g = std::get<timing::GammaPrior>(v);
  return "Gamma(" + num(g.a) + ";" + num(g.b) + ")";
}

void SweepSpec::validate() const {
  if (grid.empty()) throw DomainError("sweep grid is empty");
  if (scenarios.empty()) throw DomainError("sweep needs at least one scenario");
  if (designs.empty()) throw DomainError("sweep needs at least one design");
  if (replications < 1) throw DomainError("replications must be at least 1");
  for (const SweepValue& v : grid) {
    const bool is_prior = std::holds_alternative<timing::GammaPrior>(v);
    if (is_prior != (parameter == SweepParameter::Prior)) {
      throw DomainError("grid value " + format_sweep_value(v) + " does not fit parameter " +
                        std::string(to_string(parameter)));
    }
    apply_sweep_value(base, parameter, v).validate();
  }
}

const std::vector<SweepPreset>& sweep_presets() {
  using designs::DesignId;
  static const std::vector<SweepPreset> presets = {
      {"accrual", SweepParameter::AccrualInterval, {1.0, 2.0, 3.0, 4.0}, {DesignId::AwMle, DesignId::Tite}},
      {"sample-size",
       SweepParameter::NPatients,
       {20.0, 30.0, 40.0, 50.0},
       {DesignId::AwMle, DesignId::Tite, DesignId::Boin}},
      {"gamma", SweepParameter::GammaAssumed, {1.5, 2.0, 2.5, 3.0}, {DesignId::AwMle, DesignId::AwBayes}},
      {"window", SweepParameter::TMax, {8.0, 10.0, 12.0, 14.0, 16.0}, {DesignId::AwMle, DesignId::Tite}},
      {"prior",
       SweepParameter::Prior,
       {timing::GammaPrior{1.0, 1000.0}, timing::GammaPrior{2.0, 500.0}, timing::GammaPrior{5.0, 200.0}},
       {DesignId::AwBayes}},
  };
  return presets;
}

const SweepPreset& find_preset(std::string_view name) {
  for (const auto& p : sweep_presets()) {
    if (p.name == name) return p;
  }
  throw DomainError("unknown sweep preset '" + std::string(name) +
                    "' (expected accrual, sample-size, gamma, window or prior)");
}

sim::TrialConfig apply_sweep_value(const sim::TrialConfig& base, SweepParameter p, const SweepValue& v) {
  sim::TrialConfig cfg = base;
  if (p == SweepParameter::Prior) {
    cfg.design.prior = std::get<timing::GammaPrior>(v);
    return cfg;
  }
  const double x = std::get<double>(v);
  switch (p) {
    case SweepParameter::AccrualInterval: cfg.accrual_interval = x; break;
    case SweepParameter::NPatients:
      if (x != std::floor(x)) throw DomainError("n_patients must be a whole number");
      cfg.n_patients = static_cast<int>(x);
      break;
    case SweepParameter::GammaAssumed: cfg.design.gamma_assumed = x; break;
    case SweepParameter::TMax: cfg.design.t_max = x; break;
    case SweepParameter::Prior: break;
  }
  return cfg;
}

std::vector<SweepPoint> run_sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<SweepPoint> out;
  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    for (designs::DesignId d : spec.designs) {
      sim::TrialConfig cfg = apply_sweep_value(spec.base, spec.parameter, spec.grid[g]);
      cfg.design.design = d;
      for (const sim::Scenario& sc : spec.scenarios) {
        out.push_back({g, spec.grid[g], d, sc.name, sim::run_batch(sc, cfg, spec.replications, spec.base_seed, spec.jobs)});
      }
    }
  }
  return out;
}

}  // namespace awtite::analysis
