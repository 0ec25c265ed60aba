#pragma once

// Tabular outputs: batch summaries, per-trial rows, JSON-lines trial logs,
// sweep tables, comparison rows and the run manifest. Numbers are written at
// full precision (shortest round-trip form).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "awtite/analysis.hpp"
#include "awtite/sim.hpp"

namespace awtite::report {

std::string_view version();

// Shortest decimal string that parses back to exactly x.
std::string format_number(double x);

inline constexpr std::string_view kSummaryHeader = "design,scenario,metric,value,mc_se,reps";
inline constexpr std::string_view kTrialsHeader =
    "design,scenario,replication,seed,true_mtd,selected_mtd,dlt_count,fraction_above_mtd,enrolled,duration,"
    "stopped_early";
inline constexpr std::string_view kSweepHeader = "parameter,setting,design,scenario,metric,value,mc_se,reps";
inline constexpr std::string_view kComparisonHeader =
    "metric,a,b,mean_difference,ci_lower,ci_upper,p_one_sided,p_two_sided,resamples";

struct SummaryRow {
  std::string design;
  std::string scenario;
  std::string metric;
  double value = 0.0;
  std::optional<double> mc_se;
  int reps = 0;
};

// p_correct, fraction_above, mean_dlts, mean_enrolled, mean_duration,
// select_none and select_dose_k.
std::vector<SummaryRow> summary_rows(std::string_view design, std::string_view scenario,
                                     const sim::OperatingCharacteristics& oc);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

struct TrialRow {
  std::string design;
  std::string scenario;
  int replication = 0;
  std::uint64_t seed = 0;
  int true_mtd = 1;
  sim::TrialResult result;
};

void write_trials_header(std::ostream& out);
void write_trial_row(std::ostream& out, const TrialRow& row);
// Reads a file written by write_trial_row. Per-patient doses are not stored
// in this table and come back empty.
std::vector<TrialRow> read_trials_csv(const std::filesystem::path& path);

nlohmann::json trial_log(const TrialRow& row);

void write_sweep_csv(std::ostream& out, analysis::SweepParameter parameter,
                     const std::vector<analysis::SweepPoint>& points);

void write_comparison_csv(std::ostream& out, std::string_view a, std::string_view b,
                          const std::vector<analysis::ComparisonReport>& reports);

// Timestamp honours SOURCE_DATE_EPOCH so that repeated runs can be made
// byte-identical.
nlohmann::json manifest(std::string_view command, const nlohmann::json& config, const nlohmann::json& overrides,
                        std::uint64_t seed, const std::vector<std::string>& outputs);

}  // namespace awtite::report
