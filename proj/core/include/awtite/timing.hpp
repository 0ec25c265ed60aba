#pragma once

// Weibull time-to-toxicity model.
//
// Survival is S(t) = exp(-rate * t^shape). The rate is dose specific and the
// shape is shared by all doses and treated as known. Everything here is a
// pure function; random variates are passed in explicitly.

#include <optional>

namespace awtite::timing {

class WeibullShape {
 public:
  explicit WeibullShape(double gamma);
  double value() const noexcept { return gamma_; }

 private:
  double gamma_;
};

// Dose-specific Weibull rate, in units of time^(-shape).
class DoseRate {
 public:
  explicit DoseRate(double lambda);
  double value() const noexcept { return lambda_; }

  friend bool operator==(DoseRate, DoseRate) = default;

 private:
  double lambda_;
};

// Sufficient statistics for the rate at one dose: observed DLT count and
// total transformed follow-up sum(u_j^shape).
struct ExposureSummary {
  int events = 0;
  double exposure = 0.0;
  int patients = 0;

  void add(double followup, bool event, WeibullShape shape);
  ExposureSummary& operator+=(const ExposureSummary& other);
};

struct GammaPrior {
  double a = 1.0;     // shape
  double b = 1000.0;  // rate, time^shape units

  void validate() const;
};

// Residual-window query for one pending patient. delta = window^shape -
// followup^shape.
class WeightQuery {
 public:
  WeightQuery(double followup, double window, WeibullShape shape);

  // Clamps followup into [0, window] before building the query.
  static WeightQuery clamped(double followup, double window, WeibullShape shape);

  double followup() const noexcept { return followup_; }
  double window() const noexcept { return window_; }
  double delta() const noexcept { return delta_; }

 private:
  double followup_;
  double window_;
  double delta_;
};

// Rate giving marginal DLT probability p_true within t_max.
DoseRate calibrate_rate(double p_true, double t_max, WeibullShape shape);

double survival(double t, DoseRate rate, WeibullShape shape);

// Inverse-CDF draw of a DLT time from a uniform variate in (0,1). Returns
// nullopt when the rate is zero (the event never happens).
std::optional<double> sample_dlt_time(DoseRate rate, WeibullShape shape, double u);

struct RateEstimate {
  DoseRate rate{0.0};
  bool no_information = false;  // no events: the estimate carries no delay information
};

// Closed-form censored-Weibull MLE: events / exposure.
RateEstimate mle_rate(const ExposureSummary& summary);

// 1 - exp(-rate * delta): probability of a DLT by the end of the window given
// no DLT so far, with the rate plugged in.
double adaptive_weight_plugin(DoseRate rate, const WeightQuery& query);

// Posterior predictive version under a Gamma(a, b) prior on the rate:
// 1 - ((b + S) / (b + S + delta))^(a + D).
double adaptive_weight_bayes(const GammaPrior& prior, const ExposureSummary& summary,
                             const WeightQuery& query);

struct TaylorBound {
  double approx;  // rate * delta
  double bound;   // (rate * delta)^2 / 2
};

// First-order expansion of the plug-in weight together with the alternating
// series remainder bound.
TaylorBound taylor_weight_bound(DoseRate rate, const WeightQuery& query);

}  // namespace awtite::timing
