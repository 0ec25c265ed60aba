#pragma once

// One-parameter CRM power model pi_k(alpha) = skeleton_k^exp(alpha) with a
// normal prior on alpha, fitted to a weighted likelihood by fixed-grid
// quadrature.

#include <span>
#include <vector>

namespace awtite::crm {

// Prior DLT probabilities per dose, strictly increasing, at least two doses.
class Skeleton {
 public:
  explicit Skeleton(std::vector<double> probs);

  static Skeleton standard();

  int size() const noexcept { return static_cast<int>(probs_.size()); }
  // 1-based dose index
  double at(int dose) const;
  std::span<const double> probs() const noexcept { return probs_; }

 private:
  std::vector<double> probs_;
};

struct AlphaPrior {
  double mean = 0.0;
  double sd = 1.34;
};

// Coefficients of log(pi) and log(1 - pi) for one patient. dose is 1-based.
struct LikelihoodRecord {
  int dose = 1;
  double event_weight = 0.0;
  double nonevent_weight = 0.0;

  void validate(int num_doses) const;
};

struct QuadratureConfig {
  int points = 401;
  double half_width_sd = 8.0;
};

struct PosteriorSummary {
  std::vector<double> mean_tox;  // E[pi_k(alpha) | data], dose k at index k-1
  double alpha_mean = 0.0;
  double alpha_sd = 0.0;
  double log_evidence = 0.0;
};

struct SafetyRules {
  bool no_skip = true;
  // De-escalation below the current dose is blocked until this many patients
  // have been assigned to the current dose.
  int min_before_deescalation = 3;
};

double dose_tox(double alpha, double skeleton_prob);

double weighted_loglik(double alpha, std::span<const LikelihoodRecord> records,
                       const Skeleton& skeleton);

PosteriorSummary posterior_mean_tox(std::span<const LikelihoodRecord> records,
                                    const Skeleton& skeleton, const AlphaPrior& prior = {},
                                    const QuadratureConfig& quadrature = {});

// Dose whose mean toxicity is closest to target (ties go to the lower dose),
// then the safety constraints. counts holds per-dose enrollment, 1-based dose
// k at index k-1.
int select_dose(const PosteriorSummary& summary, double target, int highest_tried,
                int current_dose, std::span<const int> counts, const SafetyRules& rules = {});

// Unconstrained argmin |mean_tox_k - target| over doses 1..max_dose.
int closest_to_target(std::span<const double> mean_tox, double target, int max_dose);

}  // namespace awtite::crm
