#include "awtite/crm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "awtite/error.hpp"

namespace awtite::crm {

namespace {

constexpr double kTieTolerance = 1e-12;

// log(1 - exp(x)) for x < 0
double log1m_exp(double x) { return x > -0.693 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x)); }

}  // namespace

Skeleton::Skeleton(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw DomainError("skeleton needs at least two doses");
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    if (!(probs_[k] > 0.0 && probs_[k] < 1.0)) {
      throw DomainError("skeleton entries must lie in (0, 1)");
    }
    if (k > 0 && !(probs_[k] > probs_[k - 1])) {
      throw DomainError("skeleton must be strictly increasing");
    }
  }
}

Skeleton Skeleton::standard() { return Skeleton({0.05, 0.10, 0.18, 0.30, 0.45}); }

double Skeleton::at(int dose) const {
  if (dose < 1 || dose > size()) throw DomainError("dose index out of range: " + std::to_string(dose));
  return probs_[static_cast<std::size_t>(dose - 1)];
}

void LikelihoodRecord::validate(int num_doses) const {
  if (dose < 1 || dose > num_doses) throw DomainError("record dose out of range");
  if (!(event_weight >= 0.0) || !(nonevent_weight >= 0.0) ||
      event_weight + nonevent_weight > 1.0 + 1e-9) {
    throw DomainError("record weights must be nonnegative and sum to at most 1");
  }
}

double dose_tox(double alpha, double skeleton_prob) {
  if (!(skeleton_prob > 0.0 && skeleton_prob < 1.0)) throw DomainError("skeleton probability must lie in (0, 1)");
  return std::exp(std::exp(alpha) * std::log(skeleton_prob));
}

namespace {

struct DoseTotals {
  std::vector<double> events;
  std::vector<double> nonevents;
};

DoseTotals aggregate(std::span<const LikelihoodRecord> records, int num_doses) {
  DoseTotals t{std::vector<double>(num_doses, 0.0), std::vector<double>(num_doses, 0.0)};
  for (const auto& r : records) {
    r.validate(num_doses);
    t.events[r.dose - 1] += r.event_weight;
    t.nonevents[r.dose - 1] += r.nonevent_weight;
  }
  return t;
}

// Zero coefficients drop their term so pi at 0 or 1 never produces NaN.
double loglik_from_totals(double alpha, const DoseTotals& t, std::span<const double> log_skeleton) {
  const double scale = std::exp(alpha);
  double ll = 0.0;
  for (std::size_t k = 0; k < log_skeleton.size(); ++k) {
    const double log_pi = scale * log_skeleton[k];
    if (t.events[k] > 0.0) ll += t.events[k] * log_pi;
    if (t.nonevents[k] > 0.0) ll += t.nonevents[k] * log1m_exp(log_pi);
  }
  return ll;
}

}  // namespace

double weighted_loglik(double alpha, std::span<const LikelihoodRecord> records,
                       const Skeleton& skeleton) {
  if (records.empty()) return 0.0;
  std::vector<double> log_skeleton(skeleton.probs().size());
  std::transform(skeleton.probs().begin(), skeleton.probs().end(), log_skeleton.begin(),
                 [](double p) { return std::log(p); });
  return loglik_from_totals(alpha, aggregate(records, skeleton.size()), log_skeleton);
}

PosteriorSummary posterior_mean_tox(std::span<const LikelihoodRecord> records,
                                    const Skeleton& skeleton, const AlphaPrior& prior,
                                    const QuadratureConfig& quadrature) {
  if (!(prior.sd > 0.0)) throw DomainError("alpha prior sd must be positive");
  if (quadrature.points < 3) throw DomainError("quadrature needs at least 3 points");
  if (quadrature.half_width_sd < 8.0) {
    throw DomainError("quadrature grid must cover at least prior mean +/- 8 sd");
  }

  const int num_doses = skeleton.size();
  const DoseTotals totals = aggregate(records, num_doses);
  std::vector<double> log_skeleton(static_cast<std::size_t>(num_doses));
  std::transform(skeleton.probs().begin(), skeleton.probs().end(), log_skeleton.begin(),
                 [](double p) { return std::log(p); });

  const int n = quadrature.points;
  const double lo = prior.mean - quadrature.half_width_sd * prior.sd;
  const double step = 2.0 * quadrature.half_width_sd * prior.sd / (n - 1);

  // log of the unnormalized posterior density at each node, trapezoid weights folded in
  std::vector<double> log_mass(static_cast<std::size_t>(n));
  double max_log = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double alpha = lo + i * step;
    const double z = (alpha - prior.mean) / prior.sd;
    double lm = loglik_from_totals(alpha, totals, log_skeleton) - 0.5 * z * z;
    if (i == 0 || i == n - 1) lm += std::log(0.5);
    if (std::isnan(lm)) lm = -std::numeric_limits<double>::infinity();
    log_mass[static_cast<std::size_t>(i)] = lm;
    max_log = std::max(max_log, lm);
  }
  if (!std::isfinite(max_log)) {
    throw NumericalFailure("posterior likelihood is not finite at any quadrature node");
  }

  PosteriorSummary out;
  out.mean_tox.assign(static_cast<std::size_t>(num_doses), 0.0);
  double norm = 0.0;
  double alpha_sum = 0.0;
  double alpha_sq_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double m = std::exp(log_mass[static_cast<std::size_t>(i)] - max_log);
    if (m == 0.0) continue;
    const double alpha = lo + i * step;
    const double scale = std::exp(alpha);
    norm += m;
    alpha_sum += m * alpha;
    alpha_sq_sum += m * alpha * alpha;
    for (int k = 0; k < num_doses; ++k) {
      out.mean_tox[static_cast<std::size_t>(k)] += m * std::exp(scale * log_skeleton[static_cast<std::size_t>(k)]);
    }
  }
  for (double& v : out.mean_tox) v /= norm;
  out.alpha_mean = alpha_sum / norm;
  out.alpha_sd = std::sqrt(std::max(0.0, alpha_sq_sum / norm - out.alpha_mean * out.alpha_mean));
  // evidence = int exp(ll) phi(alpha) dalpha
  constexpr double kLogSqrt2Pi = 0.91893853320467274178;
  out.log_evidence = max_log + std::log(norm * step) - std::log(prior.sd) - kLogSqrt2Pi;
  return out;
}

int closest_to_target(std::span<const double> mean_tox, double target, int max_dose) {
  if (mean_tox.empty()) throw DomainError("empty posterior");
  max_dose = std::min<int>(max_dose, static_cast<int>(mean_tox.size()));
  int best = 1;
  double best_gap = std::abs(mean_tox[0] - target);
  for (int k = 2; k <= max_dose; ++k) {
    const double gap = std::abs(mean_tox[static_cast<std::size_t>(k - 1)] - target);
    if (gap < best_gap - kTieTolerance) {
      best = k;
      best_gap = gap;
    }
  }
  return best;
}

int select_dose(const PosteriorSummary& summary, double target, int highest_tried,
                int current_dose, std::span<const int> counts, const SafetyRules& rules) {
  const int num_doses = static_cast<int>(summary.mean_tox.size());
  if (num_doses == 0) throw DomainError("empty posterior");
  if (highest_tried < 1 || highest_tried > num_doses) throw DomainError("highest tried dose out of range");
  if (current_dose < 1 || current_dose > num_doses) throw DomainError("current dose out of range");

  int choice = closest_to_target(summary.mean_tox, target, num_doses);
  if (rules.no_skip) choice = std::min(choice, highest_tried + 1);
  if (choice < current_dose) {
    const int at_current = static_cast<std::size_t>(current_dose - 1) < counts.size()
                               ? counts[static_cast<std::size_t>(current_dose - 1)]
                               : 0;
    if (at_current < rules.min_before_deescalation) choice = current_dose;
  }
  return choice;
}

}  // namespace awtite::crm
