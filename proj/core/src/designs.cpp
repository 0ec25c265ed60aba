#include "awtite/designs.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/beta.hpp>

#include "awtite/error.hpp"

namespace awtite::designs {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string dose_label(int d) { return "dose " + std::to_string(d); }

}  // namespace

std::string_view to_string(DesignId id) {
  switch (id) {
    case DesignId::ThreePlusThree: return "3+3";
    case DesignId::Mtpi: return "mTPI";
    case DesignId::Boin: return "BOIN";
    case DesignId::Tite: return "TITE";
    case DesignId::AwMle: return "AW-MLE";
    case DesignId::AwBayes: return "AW-BAYES";
  }
  return "?";
}

DesignId parse_design(std::string_view name) {
  const std::string n = lower(name);
  for (DesignId id : all_designs()) {
    if (n == lower(to_string(id))) return id;
  }
  if (n == "3plus3" || n == "three-plus-three") return DesignId::ThreePlusThree;
  if (n == "tite-crm") return DesignId::Tite;
  throw DomainError("unknown design '" + std::string(name) + "'");
}

const std::vector<DesignId>& all_designs() {
  static const std::vector<DesignId> ids{DesignId::ThreePlusThree, DesignId::Mtpi,  DesignId::Boin,
                                         DesignId::Tite,           DesignId::AwMle, DesignId::AwBayes};
  return ids;
}

bool is_model_based(DesignId id) {
  return id == DesignId::Tite || id == DesignId::AwMle || id == DesignId::AwBayes;
}

std::string_view to_string(AwLikelihood s) {
  return s == AwLikelihood::Fractional ? "fractional" : "complement-only";
}

AwLikelihood parse_aw_likelihood(std::string_view name) {
  const std::string n = lower(name);
  if (n == "fractional") return AwLikelihood::Fractional;
  if (n == "complement-only" || n == "complement") return AwLikelihood::ComplementOnly;
  throw DomainError("unknown aw_likelihood '" + std::string(name) + "'");
}

std::string_view to_string(WeightSource s) {
  switch (s) {
    case WeightSource::Dlt: return "dlt";
    case WeightSource::Completed: return "completed";
    case WeightSource::PendingTite: return "pending-linear";
    case WeightSource::PendingDose: return "pending-dose-rate";
    case WeightSource::PendingPooled: return "pending-pooled-rate";
    case WeightSource::PendingNoEvents: return "pending-no-events";
  }
  return "?";
}

void DesignConfig::validate() const {
  if (!(target > 0.0 && target < 1.0)) throw DomainError("target must lie in (0, 1)");
  if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
  timing::WeibullShape{gamma_assumed};
  prior.validate();
  if (cohort_size < 1) throw DomainError("cohort size must be at least 1");
  if (!(mtpi_eps1 >= 0.0 && mtpi_eps2 >= 0.0) || target - mtpi_eps1 <= 0.0 || target + mtpi_eps2 >= 1.0) {
    throw DomainError("mTPI interval must lie inside (0, 1)");
  }
  if (!(exclusion_threshold > 0.0 && exclusion_threshold < 1.0)) {
    throw DomainError("exclusion threshold must lie in (0, 1)");
  }
  if (!(alpha_prior.sd > 0.0)) throw DomainError("alpha prior sd must be positive");
  if (quadrature.points < 3 || quadrature.half_width_sd < 8.0) {
    throw DomainError("quadrature must use >= 3 points covering +/- 8 prior sd");
  }
  if (safety.min_before_deescalation < 0) throw DomainError("min_before_deescalation must be >= 0");
}

Decision Decision::assign(int dose, std::string why) { return {Kind::Assign, dose, std::nullopt, std::move(why)}; }
Decision Decision::expand(int dose, std::string why) { return {Kind::Expand, dose, std::nullopt, std::move(why)}; }
Decision Decision::stop(std::optional<int> mtd, std::string why) {
  return {Kind::Stop, mtd.value_or(0), mtd, std::move(why)};
}
Decision Decision::complete(std::optional<int> mtd, std::string why) {
  return {Kind::Complete, mtd.value_or(0), mtd, std::move(why)};
}

// ---- 3+3 ---------------------------------------------------------------------

Decision three_plus_three_step(const DoseTally& tally, int current) {
  const int k = tally.num_doses();
  if (current < 1 || current > k) throw DomainError("current dose out of range");
  const int n = tally.n(current);
  const int x = tally.x(current);
  const std::optional<int> below = current > 1 ? std::optional<int>(current - 1) : std::nullopt;
  const std::string counts = std::to_string(x) + "/" + std::to_string(n);

  auto escalate = [&] {
    if (current == k) return Decision::complete(current, counts + " at top dose");
    return Decision::assign(current + 1, counts + ": escalate");
  };
  if (n == 0) return Decision::assign(current, "first cohort");
  if (n == 3) {
    if (x == 0) return escalate();
    if (x == 1) return Decision::expand(current, counts + ": expand to 6");
    return Decision::stop(below, counts + ": stop escalation");
  }
  if (n == 6) {
    if (x <= 1) return escalate();
    return Decision::stop(below, counts + ": stop escalation");
  }
  throw ProtocolError("3+3 requires 0, 3 or 6 fully assessed patients at the current dose, got " +
                      std::to_string(n));
}

// ---- mTPI --------------------------------------------------------------------

double mtpi_overdose_probability(int n, int x, double target) {
  if (n < 0 || x < 0 || x > n) throw DomainError("invalid tally");
  return boost::math::ibetac(1.0 + x, 1.0 + n - x, target);
}

MtpiUpm mtpi_upm(int n, int x, double target, double eps1, double eps2) {
  if (n < 0 || x < 0 || x > n) throw DomainError("invalid tally");
  const double a = 1.0 + x;
  const double b = 1.0 + n - x;
  const double lo = target - eps1;
  const double hi = target + eps2;
  const double cdf_lo = boost::math::ibeta(a, b, lo);
  const double cdf_hi = boost::math::ibeta(a, b, hi);
  return {cdf_lo / lo, (cdf_hi - cdf_lo) / (hi - lo), (1.0 - cdf_hi) / (1.0 - hi)};
}

Decision mtpi_step(int n, int x, const DesignConfig& cfg, int current, int highest_tried,
                   int lowest_excluded) {
  if (n < 1) throw ProtocolError("mTPI needs at least one assessed patient at the current dose");
  const int k = cfg.num_doses();
  if (cfg.mtpi_exclusion && mtpi_overdose_probability(n, x, cfg.target) > cfg.exclusion_threshold) {
    if (current == 1) return Decision::stop(std::nullopt, "dose 1 excluded as overly toxic");
    return Decision::assign(current - 1, "de-escalate; exclude " + dose_label(current) + " and above");
  }
  const MtpiUpm upm = mtpi_upm(n, x, cfg.target, cfg.mtpi_eps1, cfg.mtpi_eps2);
  if (upm.over > upm.target && upm.over > upm.under) {
    if (current > 1) return Decision::assign(current - 1, "UPM favours de-escalation");
    return Decision::assign(current, "UPM favours de-escalation; at lowest dose");
  }
  if (upm.under > upm.target && upm.under >= upm.over) {
    const int next = current + 1;
    if (next <= k && next < lowest_excluded && next <= highest_tried + 1) {
      return Decision::assign(next, "UPM favours escalation");
    }
    return Decision::assign(current, "UPM favours escalation; blocked");
  }
  return Decision::assign(current, "UPM favours staying");
}

int mtpi_lowest_excluded(const DoseTally& tally, const DesignConfig& cfg) {
  const int k = tally.num_doses();
  if (!cfg.mtpi_exclusion) return k + 1;
  for (int d = 1; d <= k; ++d) {
    if (tally.n(d) > 0 && mtpi_overdose_probability(tally.n(d), tally.x(d), cfg.target) > cfg.exclusion_threshold) {
      return d;
    }
  }
  return k + 1;
}

// ---- BOIN --------------------------------------------------------------------

BoinBoundaries boin_boundaries(double target) {
  if (!(target > 0.0 && target < 1.0)) throw DomainError("BOIN target must lie in (0, 1)");
  const double phi = target;
  const double phi1 = 0.6 * phi;
  const double phi2 = 1.4 * phi;
  const double lambda_e = std::log((1.0 - phi1) / (1.0 - phi)) / std::log(phi * (1.0 - phi1) / (phi1 * (1.0 - phi)));
  const double lambda_d = std::log((1.0 - phi) / (1.0 - phi2)) / std::log(phi2 * (1.0 - phi) / (phi * (1.0 - phi2)));
  return {lambda_e, lambda_d, phi};
}

Decision boin_step(int n, int x, const BoinBoundaries& boundaries, int current, int highest_tried,
                   int num_doses) {
  if (n < 1) throw ProtocolError("BOIN needs at least one assessed patient at the current dose");
  const double rate = static_cast<double>(x) / n;
  if (rate <= boundaries.lambda_e) {
    if (current < num_doses && current + 1 <= highest_tried + 1) {
      return Decision::assign(current + 1, "observed rate at or below escalation boundary");
    }
    return Decision::assign(current, "escalation boundary met at top dose");
  }
  if (rate >= boundaries.lambda_d) {
    if (current > 1) return Decision::assign(current - 1, "observed rate at or above de-escalation boundary");
    return Decision::assign(current, "de-escalation boundary met at lowest dose");
  }
  return Decision::assign(current, "observed rate between boundaries");
}

std::vector<double> isotonic_rates(const std::vector<int>& treated, const std::vector<int>& dlts) {
  if (treated.size() != dlts.size()) throw DomainError("tally size mismatch");
  struct Block {
    double sum_x;
    double sum_n;
    std::size_t len;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < treated.size(); ++i) {
    if (treated[i] <= 0) throw DomainError("isotonic fit needs treated patients at every dose");
    blocks.push_back({static_cast<double>(dlts[i]), static_cast<double>(treated[i]), 1});
    while (blocks.size() > 1) {
      const Block& b = blocks.back();
      const Block& a = blocks[blocks.size() - 2];
      if (a.sum_x / a.sum_n <= b.sum_x / b.sum_n) break;
      Block merged{a.sum_x + b.sum_x, a.sum_n + b.sum_n, a.len + b.len};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  out.reserve(treated.size());
  for (const Block& b : blocks) out.insert(out.end(), b.len, b.sum_x / b.sum_n);
  return out;
}

namespace {

// Nearest isotonic estimate to target among the given doses. Pooled
// estimates get a 1e-5 * rank increment: inside a pooled block the highest
// dose wins below target and the lowest wins above.
std::optional<int> isotonic_selection(const DoseTally& tally, int max_dose, double target) {
  std::vector<int> doses, n, x;
  for (int d = 1; d <= std::min(max_dose, tally.num_doses()); ++d) {
    if (tally.n(d) == 0) continue;
    doses.push_back(d);
    n.push_back(tally.n(d));
    x.push_back(tally.x(d));
  }
  if (doses.empty()) return std::nullopt;
  const std::vector<double> fit = isotonic_rates(n, x);
  std::size_t best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fit.size(); ++i) {
    const double gap = std::abs(fit[i] + 1e-5 * static_cast<double>(i + 1) - target);
    if (gap < best_gap - 1e-12) {
      best = i;
      best_gap = gap;
    }
  }
  return doses[best];
}

}  // namespace

// ---- weighted records -----------------------------------------------------------

std::vector<WeightRow> tite_weight_table(const TrialState& state, double clock, double t_max) {
  std::vector<WeightRow> rows;
  for (const Observation& o : state.observe(clock, t_max)) {
    WeightRow r{o.patient, o.dose, o.followup, o.status, {}, {}, {o.dose, 0.0, 0.0}, WeightSource::Dlt};
    switch (o.status) {
      case FollowupStatus::Dlt:
        r.weight = 1.0;
        r.record.event_weight = 1.0;
        break;
      case FollowupStatus::Completed:
        r.weight = 0.0;
        r.record.nonevent_weight = 1.0;
        r.source = WeightSource::Completed;
        break;
      case FollowupStatus::Pending:
        r.weight = o.followup / t_max;
        r.record.nonevent_weight = o.followup / t_max;
        r.source = WeightSource::PendingTite;
        break;
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<WeightRow> aw_weight_table(const TrialState& state, double clock, const DesignConfig& cfg) {
  const timing::WeibullShape shape(cfg.gamma_assumed);
  const std::vector<Observation> obs = state.observe(clock, cfg.t_max);

  std::vector<timing::ExposureSummary> per_dose(static_cast<std::size_t>(state.num_doses()));
  timing::ExposureSummary pooled;
  for (const Observation& o : obs) {
    per_dose[static_cast<std::size_t>(o.dose - 1)].add(o.followup, o.status == FollowupStatus::Dlt, shape);
  }
  for (const auto& s : per_dose) pooled += s;

  std::vector<WeightRow> rows;
  rows.reserve(obs.size());
  for (const Observation& o : obs) {
    WeightRow r{o.patient, o.dose, o.followup, o.status, {}, {}, {o.dose, 0.0, 0.0}, WeightSource::Dlt};
    if (o.status == FollowupStatus::Dlt) {
      r.weight = 1.0;
      r.record.event_weight = 1.0;
      rows.push_back(r);
      continue;
    }
    if (o.status == FollowupStatus::Completed) {
      r.weight = 0.0;
      r.record.nonevent_weight = 1.0;
      r.source = WeightSource::Completed;
      rows.push_back(r);
      continue;
    }
    if (pooled.events == 0) {
      // No delay information anywhere yet: behave like TITE-CRM.
      r.record.nonevent_weight = o.followup / cfg.t_max;
      r.source = WeightSource::PendingNoEvents;
      rows.push_back(r);
      continue;
    }
    const timing::ExposureSummary& own = per_dose[static_cast<std::size_t>(o.dose - 1)];
    const timing::ExposureSummary& basis = own.events > 0 ? own : pooled;
    r.source = own.events > 0 ? WeightSource::PendingDose : WeightSource::PendingPooled;
    const auto query = timing::WeightQuery::clamped(o.followup, cfg.t_max, shape);
    double w = 0.0;
    if (cfg.estimator() == Estimator::PlugIn) {
      const timing::RateEstimate est = timing::mle_rate(basis);
      r.rate = est.rate.value();
      w = timing::adaptive_weight_plugin(est.rate, query);
    } else {
      w = timing::adaptive_weight_bayes(cfg.prior, basis, query);
    }
    r.weight = w;
    r.record.event_weight = cfg.aw_likelihood == AwLikelihood::Fractional ? w : 0.0;
    r.record.nonevent_weight = 1.0 - w;
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::vector<crm::LikelihoodRecord> records_of(const std::vector<WeightRow>& rows) {
  std::vector<crm::LikelihoodRecord> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.record);
  return out;
}

}  // namespace

std::vector<crm::LikelihoodRecord> tite_records(const TrialState& state, double clock, double t_max) {
  return records_of(tite_weight_table(state, clock, t_max));
}

std::vector<crm::LikelihoodRecord> aw_records(const TrialState& state, double clock,
                                              const DesignConfig& cfg) {
  return records_of(aw_weight_table(state, clock, cfg));
}

// ---- decisions -------------------------------------------------------------------

ModelEvaluation evaluate_model(const TrialState& state, double clock, const DesignConfig& cfg) {
  if (!is_model_based(cfg.design)) throw ProtocolError("not a model-based design");
  ModelEvaluation ev;
  ev.rows = cfg.design == DesignId::Tite ? tite_weight_table(state, clock, cfg.t_max)
                                         : aw_weight_table(state, clock, cfg);
  const auto records = records_of(ev.rows);
  ev.posterior = crm::posterior_mean_tox(records, cfg.skeleton, cfg.alpha_prior, cfg.quadrature);
  const int k = cfg.num_doses();
  ev.unconstrained_dose = crm::closest_to_target(ev.posterior.mean_tox, cfg.target, k);
  if (state.empty()) {
    ev.dose = 1;
    ev.active_constraints.push_back("start at the lowest dose");
    return ev;
  }
  const int highest = state.highest_tried();
  const int current = state.current_dose();
  const std::vector<int> counts = state.counts();
  ev.dose = crm::select_dose(ev.posterior, cfg.target, highest, current, counts, cfg.safety);

  int capped = ev.unconstrained_dose;
  if (cfg.safety.no_skip && capped > highest + 1) {
    capped = highest + 1;
    ev.active_constraints.push_back("no skipping of untried doses: capped at " + dose_label(capped));
  }
  if (capped < current && ev.dose == current) {
    ev.active_constraints.push_back("de-escalation blocked until " +
                                    std::to_string(cfg.safety.min_before_deescalation) + " patients at " +
                                    dose_label(current));
  }
  return ev;
}

Decision next_dose(const TrialState& state, double clock, const DesignConfig& cfg) {
  if (state.empty()) return Decision::assign(1, "start at the lowest dose");
  if (is_model_based(cfg.design)) {
    const ModelEvaluation ev = evaluate_model(state, clock, cfg);
    return Decision::assign(ev.dose, "posterior mean toxicity closest to target");
  }

  for (const auto& o : state.observe(clock, cfg.t_max)) {
    if (o.status == FollowupStatus::Pending) {
      throw ProtocolError(std::string(to_string(cfg.design)) + " decides only on fully assessed cohorts");
    }
  }
  const DoseTally tally = complete_tally(state, clock, cfg.t_max);
  const int current = state.current_dose();
  const int highest = state.highest_tried();
  switch (cfg.design) {
    case DesignId::ThreePlusThree:
      return three_plus_three_step(tally, current);
    case DesignId::Mtpi:
      return mtpi_step(tally.n(current), tally.x(current), cfg, current, highest,
                       mtpi_lowest_excluded(tally, cfg));
    case DesignId::Boin:
      return boin_step(tally.n(current), tally.x(current), boin_boundaries(cfg.target), current, highest,
                       cfg.num_doses());
    default:
      break;
  }
  throw ProtocolError("unhandled design");
}

std::optional<int> final_mtd(const TrialState& state, const DesignConfig& cfg) {
  if (state.empty()) return std::nullopt;
  const double clock = state.patients().back().enroll_time + cfg.t_max;
  const DoseTally tally = complete_tally(state, clock, cfg.t_max);
  const int k = cfg.num_doses();

  switch (cfg.design) {
    case DesignId::ThreePlusThree: {
      const int current = state.current_dose();
      const int n = tally.n(current);
      const int x = tally.x(current);
      const std::optional<int> below = current > 1 ? std::optional<int>(current - 1) : std::nullopt;
      if (x >= 2) return below;
      if ((n == 3 && x == 0) || (n == 6 && x <= 1)) return current;
      return below;
    }
    case DesignId::Mtpi:
      return isotonic_selection(tally, mtpi_lowest_excluded(tally, cfg) - 1, cfg.target);
    case DesignId::Boin:
      return isotonic_selection(tally, k, cfg.target);
    default:
      break;
  }

  const auto records = tite_records(state, clock, cfg.t_max);
  const crm::PosteriorSummary post =
      crm::posterior_mean_tox(records, cfg.skeleton, cfg.alpha_prior, cfg.quadrature);
  std::optional<int> best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int d = 1; d <= k; ++d) {
    if (tally.n(d) == 0) continue;
    const double gap = std::abs(post.mean_tox[static_cast<std::size_t>(d - 1)] - cfg.target);
    if (gap < best_gap - 1e-12) {
      best = d;
      best_gap = gap;
    }
  }
  return best;
}

}  // namespace awtite::designs
