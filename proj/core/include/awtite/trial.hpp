#pragma once

// Enrollment history shared by the simulator and the live-trial service.
// Times are model time units (weeks by default) on a common clock.

#include <optional>
#include <string>
#include <vector>

namespace awtite {

struct Patient {
  std::string id;
  int dose = 1;  // 1-based
  double enroll_time = 0.0;
  // Time from enrollment to DLT. For simulated patients this is the latent
  // draw and may lie beyond the window; for observed patients it is only set
  // once the DLT has been reported.
  std::optional<double> dlt_time;
  // Follow-up explicitly closed without a DLT.
  bool followup_completed = false;
};

enum class FollowupStatus { Dlt, Completed, Pending };

// What a patient contributes at a given clock.
struct Observation {
  std::size_t patient = 0;
  int dose = 1;
  double followup = 0.0;  // min(clock - enroll, dlt time, t_max)
  FollowupStatus status = FollowupStatus::Pending;
};

class TrialState {
 public:
  TrialState() = default;
  explicit TrialState(int num_doses) : num_doses_(num_doses) {}

  int num_doses() const noexcept { return num_doses_; }
  const std::vector<Patient>& patients() const noexcept { return patients_; }
  std::vector<Patient>& mutable_patients() noexcept { return patients_; }

  // Enrollment times must be strictly increasing.
  void enroll(Patient p);

  bool empty() const noexcept { return patients_.empty(); }
  std::size_t size() const noexcept { return patients_.size(); }

  // Highest dose with at least one patient, 0 when nobody is enrolled.
  int highest_tried() const noexcept;
  // Dose of the most recent enrollment, 0 when nobody is enrolled.
  int current_dose() const noexcept;
  // Enrollment per dose (dose k at index k-1).
  std::vector<int> counts() const;

  std::vector<Observation> observe(double clock, double t_max) const;

 private:
  int num_doses_ = 0;
  std::vector<Patient> patients_;
};

// Per-dose treated / DLT counts over fully assessed patients.
struct DoseTally {
  std::vector<int> treated;
  std::vector<int> dlts;

  explicit DoseTally(int num_doses = 0)
      : treated(static_cast<std::size_t>(num_doses), 0), dlts(static_cast<std::size_t>(num_doses), 0) {}

  int n(int dose) const { return treated.at(static_cast<std::size_t>(dose - 1)); }
  int x(int dose) const { return dlts.at(static_cast<std::size_t>(dose - 1)); }
  int num_doses() const noexcept { return static_cast<int>(treated.size()); }
};

// Tally of patients whose outcome is known at clock (DLT seen or window
// complete). Pending patients are left out.
DoseTally complete_tally(const TrialState& state, double clock, double t_max);

}  // namespace awtite
