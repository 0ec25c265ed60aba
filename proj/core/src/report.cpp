#include "awtite/report.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>

#include "awtite/error.hpp"

#ifndef AWTITE_VERSION
#define AWTITE_VERSION "0.0.0"
#endif

namespace awtite::report {

using nlohmann::json;

std::string_view version() { return AWTITE_VERSION; }

std::string format_number(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw NumericalFailure("cannot format number");
  return std::string(buf, end);
}

namespace {

std::string field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

template <class T>
T parse_field(const std::string& s, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(where, "cannot parse '" + s + "'");
  return v;
}

}  // namespace

std::vector<SummaryRow> summary_rows(std::string_view design, std::string_view scenario,
                                     const sim::OperatingCharacteristics& oc) {
  const std::string d(design), s(scenario);
  std::vector<SummaryRow> rows = {
      {d, s, "p_correct", oc.p_correct, oc.se_p_correct, oc.replications},
      {d, s, "fraction_above", oc.mean_fraction_above, oc.se_fraction_above, oc.replications},
      {d, s, "mean_dlts", oc.mean_dlts, oc.se_dlts, oc.replications},
      {d, s, "mean_enrolled", oc.mean_enrolled, std::nullopt, oc.replications},
      {d, s, "mean_duration", oc.mean_duration, std::nullopt, oc.replications},
  };
  for (std::size_t k = 0; k < oc.selection.size(); ++k) {
    rows.push_back({d, s, k == 0 ? "select_none" : "select_dose_" + std::to_string(k), oc.selection[k],
                    oc.se_selection[k], oc.replications});
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << field(r.design) << ',' << field(r.scenario) << ',' << r.metric << ',' << format_number(r.value) << ','
        << (r.mc_se ? format_number(*r.mc_se) : "") << ',' << r.reps << '\n';
  }
}

void write_trials_header(std::ostream& out) { out << kTrialsHeader << '\n'; }

void write_trial_row(std::ostream& out, const TrialRow& row) {
  const sim::TrialResult& r = row.result;
  out << field(row.design) << ',' << field(row.scenario) << ',' << row.replication << ',' << row.seed << ','
      << row.true_mtd << ',' << (r.selected_mtd ? std::to_string(*r.selected_mtd) : "") << ',' << r.dlt_count << ','
      << format_number(r.fraction_above_mtd) << ',' << r.doses.size() << ',' << format_number(r.duration) << ','
      << (r.stopped_early ? 1 : 0) << '\n';
}

std::vector<TrialRow> read_trials_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::string line;
  if (!std::getline(in, line) || line != kTrialsHeader) {
    throw ConfigError(path.string() + ":1", "not a trials table (unexpected header)");
  }
  std::vector<TrialRow> rows;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw ConfigError(where, "expected 11 fields, found " + std::to_string(f.size()));
    TrialRow row;
    row.design = f[0];
    row.scenario = f[1];
    row.replication = parse_field<int>(f[2], where);
    row.seed = parse_field<std::uint64_t>(f[3], where);
    row.true_mtd = parse_field<int>(f[4], where);
    if (!f[5].empty()) row.result.selected_mtd = parse_field<int>(f[5], where);
    row.result.dlt_count = parse_field<int>(f[6], where);
    row.result.fraction_above_mtd = parse_field<double>(f[7], where);
    parse_field<std::size_t>(f[8], where);
    row.result.duration = parse_field<double>(f[9], where);
    row.result.stopped_early = f[10] == "1";
    rows.push_back(std::move(row));
  }
  return rows;
}

json trial_log(const TrialRow& row) {
  const sim::TrialResult& r = row.result;
  return {{"design", row.design},
          {"scenario", row.scenario},
          {"replication", row.replication},
          {"seed", row.seed},
          {"true_mtd", row.true_mtd},
          {"selected_mtd", r.selected_mtd ? json(*r.selected_mtd) : json(nullptr)},
          {"doses", r.doses},
          {"dlt_count", r.dlt_count},
          {"fraction_above_mtd", r.fraction_above_mtd},
          {"duration", r.duration},
          {"stopped_early", r.stopped_early}};
}

void write_sweep_csv(std::ostream& out, analysis::SweepParameter parameter,
                     const std::vector<analysis::SweepPoint>& points) {
  out << kSweepHeader << '\n';
  const std::string param(analysis::to_string(parameter));
  for (const auto& p : points) {
    const std::string prefix = param + ',' + field(analysis::format_sweep_value(p.value)) + ',' +
                               field(designs::to_string(p.design)) + ',' + field(p.scenario) + ',';
    for (const auto& r : summary_rows("", "", p.oc)) {
      out << prefix << r.metric << ',' << format_number(r.value) << ',' << (r.mc_se ? format_number(*r.mc_se) : "")
          << ',' << r.reps << '\n';
    }
  }
}

void write_comparison_csv(std::ostream& out, std::string_view a, std::string_view b,
                          const std::vector<analysis::ComparisonReport>& reports) {
  out << kComparisonHeader << '\n';
  for (const auto& r : reports) {
    out << r.metric << ',' << field(a) << ',' << field(b) << ',' << format_number(r.mean_difference) << ','
        << format_number(r.ci_lower) << ',' << format_number(r.ci_upper) << ',' << format_number(r.p_one_sided) << ','
        << format_number(r.p_two_sided) << ',' << r.resamples << '\n';
  }
}

json manifest(std::string_view command, const json& config, const json& overrides, std::uint64_t seed,
              const std::vector<std::string>& outputs) {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {{"tool", "awtite"},
          {"version", std::string(version())},
          {"command", std::string(command)},
          {"seed", seed},
          {"timestamp", stamp},
          {"overrides", overrides},
          {"config", config},
          {"outputs", outputs}};
}

}  // namespace awtite::report
