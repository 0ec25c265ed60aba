#pragma once

// Dose-finding designs behind one decision interface:
//   3+3, mTPI and BOIN work on complete-outcome tallies;
//   TITE-CRM, AW-MLE and AW-BAYES fit the CRM to weighted records built from
//   partial follow-up.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "awtite/crm.hpp"
#include "awtite/timing.hpp"
#include "awtite/trial.hpp"

namespace awtite::designs {

enum class DesignId { ThreePlusThree, Mtpi, Boin, Tite, AwMle, AwBayes };

std::string_view to_string(DesignId id);
// Accepts the display names ("3+3", "mTPI", "BOIN", "TITE", "AW-MLE",
// "AW-BAYES"), case-insensitively.
DesignId parse_design(std::string_view name);
const std::vector<DesignId>& all_designs();
bool is_model_based(DesignId id);

enum class Estimator { PlugIn, Gamma };

// How a pending patient's adaptive weight w enters the likelihood:
//   Fractional      (event, nonevent) = (w, 1 - w)
//   ComplementOnly  (event, nonevent) = (0, 1 - w)
enum class AwLikelihood { Fractional, ComplementOnly };

std::string_view to_string(AwLikelihood s);
AwLikelihood parse_aw_likelihood(std::string_view name);

struct DesignConfig {
  DesignId design = DesignId::AwMle;
  double target = 0.25;
  double t_max = 12.0;
  double gamma_assumed = 2.0;
  timing::GammaPrior prior{1.0, 1000.0};
  AwLikelihood aw_likelihood = AwLikelihood::Fractional;
  int cohort_size = 3;
  double mtpi_eps1 = 0.05;
  double mtpi_eps2 = 0.05;
  double exclusion_threshold = 0.95;
  bool mtpi_exclusion = true;
  crm::Skeleton skeleton = crm::Skeleton::standard();
  crm::AlphaPrior alpha_prior;
  crm::QuadratureConfig quadrature;
  crm::SafetyRules safety;

  int num_doses() const noexcept { return skeleton.size(); }
  Estimator estimator() const noexcept {
    return design == DesignId::AwBayes ? Estimator::Gamma : Estimator::PlugIn;
  }
  void validate() const;
};

struct Decision {
  enum class Kind { Assign, Expand, Stop, Complete };

  Kind kind = Kind::Assign;
  int dose = 1;            // dose for Assign/Expand
  std::optional<int> mtd;  // selected MTD for Stop/Complete (nullopt: none)
  std::string rationale;

  static Decision assign(int dose, std::string why = {});
  static Decision expand(int dose, std::string why = {});
  static Decision stop(std::optional<int> mtd, std::string why = {});
  static Decision complete(std::optional<int> mtd, std::string why = {});

  bool ends_trial() const noexcept { return kind == Kind::Stop || kind == Kind::Complete; }
};

// ---- algorithm designs -----------------------------------------------------

Decision three_plus_three_step(const DoseTally& tally, int current);

struct MtpiUpm {
  double under;
  double target;
  double over;
};

// Unit probability mass of the three toxicity intervals under a Beta(1 + x,
// 1 + n - x) posterior.
MtpiUpm mtpi_upm(int n, int x, double target, double eps1, double eps2);

// Pr(p > target | x, n) under a Beta(1, 1) prior.
double mtpi_overdose_probability(int n, int x, double target);

// lowest_excluded is the lowest dose ruled out so far (num_doses + 1 if none).
Decision mtpi_step(int n, int x, const DesignConfig& cfg, int current, int highest_tried,
                   int lowest_excluded);

// Lowest dose whose tally triggers the mTPI safety exclusion, or num_doses + 1.
int mtpi_lowest_excluded(const DoseTally& tally, const DesignConfig& cfg);

struct BoinBoundaries {
  double lambda_e;
  double lambda_d;
  double target;
};

BoinBoundaries boin_boundaries(double target);

Decision boin_step(int n, int x, const BoinBoundaries& boundaries, int current, int highest_tried,
                   int num_doses);

// Pool-adjacent-violators fit of x/n, weighted by n. Doses with n = 0 must be
// removed by the caller.
std::vector<double> isotonic_rates(const std::vector<int>& treated, const std::vector<int>& dlts);

// ---- model-based designs ---------------------------------------------------

enum class WeightSource {
  Dlt,             // observed DLT
  Completed,       // full window without DLT
  PendingTite,     // linear t / t_max
  PendingDose,     // adaptive, rate estimated from this dose
  PendingPooled,   // adaptive, rate pooled over all doses (dose has no events yet)
  PendingNoEvents  // adaptive design before the first DLT: linear fallback
};

std::string_view to_string(WeightSource s);

struct WeightRow {
  std::size_t patient = 0;
  int dose = 1;
  double followup = 0.0;
  FollowupStatus status = FollowupStatus::Pending;
  // Design weight: 1 for a DLT, 0 for a completed patient, t/t_max for a
  // TITE pending patient, the predictive DLT probability for an adaptive
  // pending patient. Empty under the no-event fallback.
  std::optional<double> weight;
  std::optional<double> rate;  // plug-in rate used, when one was used
  crm::LikelihoodRecord record;
  WeightSource source = WeightSource::Dlt;
};

std::vector<WeightRow> tite_weight_table(const TrialState& state, double clock, double t_max);
std::vector<WeightRow> aw_weight_table(const TrialState& state, double clock, const DesignConfig& cfg);

std::vector<crm::LikelihoodRecord> tite_records(const TrialState& state, double clock, double t_max);
std::vector<crm::LikelihoodRecord> aw_records(const TrialState& state, double clock,
                                              const DesignConfig& cfg);

// Full working of one model-based decision.
struct ModelEvaluation {
  std::vector<WeightRow> rows;
  crm::PosteriorSummary posterior;
  int unconstrained_dose = 1;
  int dose = 1;
  std::vector<std::string> active_constraints;
};

ModelEvaluation evaluate_model(const TrialState& state, double clock, const DesignConfig& cfg);

// Next action at clock. Algorithm designs require every enrolled patient to
// be fully assessed.
Decision next_dose(const TrialState& state, double clock, const DesignConfig& cfg);

// Recommended MTD once every patient's follow-up is resolved.
std::optional<int> final_mtd(const TrialState& state, const DesignConfig& cfg);

}  // namespace awtite::designs
