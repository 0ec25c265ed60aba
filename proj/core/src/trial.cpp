#include "awtite/trial.hpp"

#include <algorithm>

#include "awtite/error.hpp"

namespace awtite {

void TrialState::enroll(Patient p) {
  if (p.dose < 1 || p.dose > num_doses_) throw DomainError("enrollment dose out of range");
  if (!patients_.empty() && !(p.enroll_time > patients_.back().enroll_time)) {
    throw InvariantViolation("enrollment times must be strictly increasing");
  }
  patients_.push_back(std::move(p));
}

int TrialState::highest_tried() const noexcept {
  int h = 0;
  for (const auto& p : patients_) h = std::max(h, p.dose);
  return h;
}

int TrialState::current_dose() const noexcept { return patients_.empty() ? 0 : patients_.back().dose; }

std::vector<int> TrialState::counts() const {
  std::vector<int> c(static_cast<std::size_t>(num_doses_), 0);
  for (const auto& p : patients_) ++c[static_cast<std::size_t>(p.dose - 1)];
  return c;
}

std::vector<Observation> TrialState::observe(double clock, double t_max) const {
  std::vector<Observation> out;
  out.reserve(patients_.size());
  for (std::size_t i = 0; i < patients_.size(); ++i) {
    const Patient& p = patients_[i];
    if (p.enroll_time > clock) {
      throw DomainError("observation clock precedes an enrollment");
    }
    const double elapsed = std::min(clock - p.enroll_time, t_max);
    Observation o{i, p.dose, elapsed, FollowupStatus::Pending};
    if (p.dlt_time && *p.dlt_time <= elapsed) {
      o.followup = *p.dlt_time;
      o.status = FollowupStatus::Dlt;
    } else if (p.followup_completed || clock - p.enroll_time >= t_max) {
      o.followup = t_max;
      o.status = FollowupStatus::Completed;
    }
    out.push_back(o);
  }
  return out;
}

DoseTally complete_tally(const TrialState& state, double clock, double t_max) {
  DoseTally tally(state.num_doses());
  for (const auto& o : state.observe(clock, t_max)) {
    if (o.status == FollowupStatus::Pending) continue;
    ++tally.treated[static_cast<std::size_t>(o.dose - 1)];
    if (o.status == FollowupStatus::Dlt) ++tally.dlts[static_cast<std::size_t>(o.dose - 1)];
  }
  return tally;
}

}  // namespace awtite
