#include "awtite/timing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "awtite/error.hpp"

namespace awtite::timing {

WeibullShape::WeibullShape(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw DomainError("Weibull shape must be positive and finite, got " + std::to_string(gamma));
  }
}

DoseRate::DoseRate(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DomainError("dose rate must be nonnegative and finite, got " + std::to_string(lambda));
  }
}

void ExposureSummary::add(double followup, bool event, WeibullShape shape) {
  if (!(followup >= 0.0)) throw DomainError("follow-up must be nonnegative");
  exposure += std::pow(followup, shape.value());
  events += event ? 1 : 0;
  ++patients;
}

ExposureSummary& ExposureSummary::operator+=(const ExposureSummary& other) {
  events += other.events;
  exposure += other.exposure;
  patients += other.patients;
  return *this;
}

void GammaPrior::validate() const {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("Gamma prior requires a > 0 and b > 0");
  }
}

WeightQuery::WeightQuery(double followup, double window, WeibullShape shape)
    : followup_(followup), window_(window) {
  if (!(followup >= 0.0)) throw DomainError("follow-up must be nonnegative");
  if (!(window > 0.0)) throw DomainError("observation window must be positive");
  delta_ = std::pow(window, shape.value()) - std::pow(followup, shape.value());
}

WeightQuery WeightQuery::clamped(double followup, double window, WeibullShape shape) {
  return WeightQuery(std::clamp(followup, 0.0, window), window, shape);
}

DoseRate calibrate_rate(double p_true, double t_max, WeibullShape shape) {
  if (!(p_true >= 0.0 && p_true < 1.0)) {
    throw DomainError("marginal DLT probability must lie in [0, 1), got " + std::to_string(p_true));
  }
  if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
  return DoseRate(-std::log1p(-p_true) / std::pow(t_max, shape.value()));
}

double survival(double t, DoseRate rate, WeibullShape shape) {
  if (!(t >= 0.0)) throw DomainError("survival time must be nonnegative");
  if (rate.value() == 0.0 || t == 0.0) return 1.0;
  return std::exp(-rate.value() * std::pow(t, shape.value()));
}

std::optional<double> sample_dlt_time(DoseRate rate, WeibullShape shape, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("uniform variate must lie in (0, 1)");
  if (rate.value() == 0.0) return std::nullopt;
  return std::pow(-std::log(u) / rate.value(), 1.0 / shape.value());
}

RateEstimate mle_rate(const ExposureSummary& summary) {
  if (!(summary.exposure >= 0.0)) throw DomainError("exposure must be nonnegative");
  if (summary.events < 0) throw DomainError("event count must be nonnegative");
  if (summary.events == 0) return {DoseRate(0.0), true};
  if (summary.exposure == 0.0) {
    throw InvariantViolation("observed events with zero exposure");
  }
  return {DoseRate(summary.events / summary.exposure), false};
}

double adaptive_weight_plugin(DoseRate rate, const WeightQuery& query) {
  if (query.delta() < 0.0) {
    throw DomainError("follow-up exceeds the observation window; clamp before querying");
  }
  return -std::expm1(-rate.value() * query.delta());
}

double adaptive_weight_bayes(const GammaPrior& prior, const ExposureSummary& summary,
                             const WeightQuery& query) {
  prior.validate();
  if (query.delta() < 0.0) {
    throw DomainError("follow-up exceeds the observation window; clamp before querying");
  }
  const double rate = prior.b + summary.exposure;
  const double shape = prior.a + summary.events;
  // log of the Gamma Laplace transform, evaluated without forming the ratio
  return -std::expm1(-shape * std::log1p(query.delta() / rate));
}

TaylorBound taylor_weight_bound(DoseRate rate, const WeightQuery& query) {
  const double x = rate.value() * query.delta();
  if (x < 0.0) throw DomainError("rate * delta must be nonnegative");
  return {x, 0.5 * x * x};
}

}  // namespace awtite::timing
