// awtite: batch simulation, sensitivity sweeps, bootstrap comparisons and
// the live-trial service.
//
// Exit codes: 0 ok, 1 unexpected error, 2 configuration or usage error,
// 3 numerical failure, 4 corrupt event log, 5 address in use.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "awtite/analysis.hpp"
#include "awtite/conduct.hpp"
#include "awtite/config.hpp"
#include "awtite/error.hpp"
#include "awtite/report.hpp"
#include "awtite/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace awtite;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNumerical = 3, kCorruptLog = 4, kAddressInUse = 5 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// Options shared by simulate and sweep.
struct StudyOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<int> jobs;
  std::string designs;
  std::string scenarios;
  std::string out = "results";
  bool print_defaults = false;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config, "JSON configuration file");
    cmd.add_option("--seed", seed, "base seed");
    cmd.add_option("--reps", reps, "replications per cell")->check(CLI::PositiveNumber);
    cmd.add_option("--jobs", jobs, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    cmd.add_option("--designs", designs, "comma-separated design names");
    cmd.add_option("--scenarios", scenarios, "comma-separated scenario names");
    cmd.add_option("--out", out, "output directory");
    cmd.add_flag("--print-defaults", print_defaults, "print the resolved configuration and exit");
  }

  // Loads the study and applies command-line overrides, recording them.
  config::StudyConfig resolve(json& overrides) const {
    config::StudyConfig study = config.empty() ? config::default_study() : config::load_study(config);
    overrides = json::object();
    if (seed) {
      study.simulation.seed = *seed;
      overrides["seed"] = *seed;
    }
    if (reps) {
      study.simulation.replications = *reps;
      overrides["reps"] = *reps;
    }
    if (jobs) {
      study.simulation.jobs = *jobs;
      overrides["jobs"] = *jobs;
    }
    if (!designs.empty()) {
      study.designs.clear();
      for (const auto& name : split_list(designs)) {
        try {
          study.designs.push_back(designs::parse_design(name));
        } catch (const DomainError& e) {
          throw ConfigError("--designs", e.what());
        }
      }
      if (study.designs.empty()) throw ConfigError("--designs", "no designs given");
      overrides["designs"] = split_list(designs);
    }
    if (!scenarios.empty()) {
      std::vector<sim::Scenario> chosen;
      for (const auto& name : split_list(scenarios)) chosen.push_back(study.scenario(name));
      if (chosen.empty()) throw ConfigError("--scenarios", "no scenarios given");
      study.scenarios = std::move(chosen);
      overrides["scenarios"] = split_list(scenarios);
    }
    if (!config.empty()) overrides["config_file"] = config;
    return study;
  }
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path.string(), "cannot write file");
  return out;
}

void write_manifest(const fs::path& dir, std::string_view command, const config::StudyConfig& study,
                    const json& overrides, const std::vector<std::string>& outputs) {
  auto out = open_output(dir / "manifest.json");
  out << report::manifest(command, config::to_json(study), overrides, study.simulation.seed, outputs).dump(2) << '\n';
}

std::string fixed(double x, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << x;
  return ss.str();
}

int cmd_simulate(const StudyOptions& opts, int digits) {
  json overrides;
  const config::StudyConfig study = opts.resolve(overrides);
  if (opts.print_defaults) {
    std::cout << config::to_json(study).dump(2) << '\n';
    return kOk;
  }
  const fs::path dir = opts.out;
  fs::create_directories(dir);
  std::vector<std::string> outputs = {"summary.csv", "trials.csv"};
  if (study.simulation.trial_logs) outputs.push_back("trials.jsonl");

  auto trials = open_output(dir / "trials.csv");
  report::write_trials_header(trials);
  std::optional<std::ofstream> logs;
  if (study.simulation.trial_logs) logs.emplace(open_output(dir / "trials.jsonl"));
  std::vector<report::SummaryRow> rows;

  std::cout << std::left << std::setw(10) << "design" << std::setw(12) << "scenario" << std::right << std::setw(11)
            << "P(correct)" << std::setw(12) << "above MTD" << std::setw(11) << "mean DLTs" << '\n';
  for (designs::DesignId id : study.designs) {
    sim::TrialConfig cfg = study.trial;
    cfg.design.design = id;
    const std::string design(designs::to_string(id));
    for (const sim::Scenario& sc : study.scenarios) {
      const auto results =
          sim::simulate_trials(sc, cfg, study.simulation.replications, study.simulation.seed, study.simulation.jobs);
      const auto oc = sim::compute_metrics(results, sc);
      for (std::size_t i = 0; i < results.size(); ++i) {
        const report::TrialRow row{design, sc.name, static_cast<int>(i),
                                   sim::derive_seed(study.simulation.seed, i), sc.true_mtd, results[i]};
        report::write_trial_row(trials, row);
        if (logs) *logs << report::trial_log(row).dump() << '\n';
      }
      auto cell = report::summary_rows(design, sc.name, oc);
      rows.insert(rows.end(), cell.begin(), cell.end());
      std::cout << std::left << std::setw(10) << design << std::setw(12) << sc.name << std::right << std::setw(11)
                << fixed(oc.p_correct, digits) << std::setw(12) << fixed(oc.mean_fraction_above, digits)
                << std::setw(11) << fixed(oc.mean_dlts, std::max(0, digits - 1)) << '\n';
    }
  }
  auto summary = open_output(dir / "summary.csv");
  report::write_summary_csv(summary, rows);
  write_manifest(dir, "simulate", study, overrides, outputs);
  return kOk;
}

int cmd_sweep(const StudyOptions& opts, const std::string& preset_name) {
  json overrides;
  config::StudyConfig study = opts.resolve(overrides);
  const analysis::SweepPreset& preset = [&]() -> const analysis::SweepPreset& {
    try {
      return analysis::find_preset(preset_name);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
  }();
  overrides["preset"] = preset_name;
  if (opts.designs.empty()) study.designs = preset.designs;
  if (opts.print_defaults) {
    std::cout << config::to_json(study).dump(2) << '\n';
    return kOk;
  }

  analysis::SweepSpec spec;
  spec.parameter = preset.parameter;
  spec.grid = preset.grid;
  spec.base = study.trial;
  spec.scenarios = study.scenarios;
  spec.designs = study.designs;
  spec.replications = study.simulation.replications;
  spec.base_seed = study.simulation.seed;
  spec.jobs = study.simulation.jobs;
  const auto points = analysis::run_sweep(spec);

  const fs::path dir = opts.out;
  fs::create_directories(dir);
  auto out = open_output(dir / "sweep.csv");
  report::write_sweep_csv(out, spec.parameter, points);

  // Spread of each metric over the grid, per design and scenario.
  auto variation = open_output(dir / "variation.csv");
  variation << "parameter,design,scenario,metric,cv_percent,min,max,range\n";
  std::cout << "sweep " << preset_name << " over " << analysis::to_string(spec.parameter) << '\n';
  for (designs::DesignId id : spec.designs) {
    for (const auto& sc : spec.scenarios) {
      std::map<std::string, std::vector<double>> series;
      for (const auto& p : points) {
        if (p.design != id || p.scenario != sc.name) continue;
        series["p_correct"].push_back(p.oc.p_correct);
        series["fraction_above"].push_back(p.oc.mean_fraction_above);
        series["mean_dlts"].push_back(p.oc.mean_dlts);
        std::cout << "  " << std::left << std::setw(9) << designs::to_string(id) << std::setw(10) << sc.name
                  << std::setw(18) << analysis::format_sweep_value(p.value) << std::right << " P(correct) "
                  << fixed(p.oc.p_correct, 3) << "  above " << fixed(p.oc.mean_fraction_above, 3) << "  DLTs "
                  << fixed(p.oc.mean_dlts, 2) << '\n';
      }
      for (const auto& [metric, values] : series) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        const bool zero_mean = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
        const std::string cv = zero_mean ? "" : report::format_number(analysis::coefficient_of_variation(values).percent);
        variation << analysis::to_string(spec.parameter) << ',' << designs::to_string(id) << ',' << sc.name << ','
                  << metric << ',' << cv << ',' << report::format_number(*lo) << ',' << report::format_number(*hi)
                  << ',' << report::format_number(*hi - *lo) << '\n';
      }
    }
  }
  write_manifest(dir, "sweep", study, overrides, {"sweep.csv", "variation.csv"});
  return kOk;
}

struct CompareOptions {
  std::string dir_a, dir_b;
  std::string design_a, design_b;
  std::string metrics = "p_correct,fraction_above,dlts";
  int n_boot = 2000;
  std::uint64_t seed = 20240602;
  std::string out;
};

analysis::ByScenario load_group(const fs::path& dir, std::string design, std::vector<std::string>& scenario_order,
                                std::string& design_used, analysis::Metric metric) {
  const auto rows = report::read_trials_csv(dir / "trials.csv");
  std::set<std::string> designs_present;
  for (const auto& r : rows) designs_present.insert(r.design);
  if (design.empty()) {
    if (designs_present.size() != 1) {
      throw UsageError(dir.string() + " holds several designs; choose one with --a-design/--b-design");
    }
    design = *designs_present.begin();
  } else {
    design = std::string(designs::to_string(designs::parse_design(design)));
    if (!designs_present.count(design)) throw UsageError(dir.string() + " has no results for " + design);
  }
  design_used = design;
  std::map<std::string, std::vector<double>> by_scenario;
  std::vector<std::string> seen;
  for (const auto& r : rows) {
    if (r.design != design) continue;
    if (!by_scenario.count(r.scenario)) seen.push_back(r.scenario);
    by_scenario[r.scenario].push_back(analysis::trial_metric(r.result, r.true_mtd, metric));
  }
  if (scenario_order.empty()) {
    scenario_order = seen;
  } else if (std::set<std::string>(seen.begin(), seen.end()) !=
             std::set<std::string>(scenario_order.begin(), scenario_order.end())) {
    throw UsageError("the two result sets cover different scenarios");
  }
  analysis::ByScenario out;
  for (const auto& name : scenario_order) out.push_back(by_scenario.at(name));
  return out;
}

int cmd_compare(const CompareOptions& opts) {
  if (opts.n_boot < 1) throw UsageError("--n-boot must be at least 1");
  std::vector<analysis::ComparisonReport> reports;
  std::string a_name, b_name;
  for (const auto& m : split_list(opts.metrics)) {
    analysis::Metric metric;
    try {
      metric = analysis::parse_metric(m);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    std::vector<std::string> order;
    const auto a = load_group(opts.dir_a, opts.design_a, order, a_name, metric);
    const auto b = load_group(opts.dir_b, opts.design_b, order, b_name, metric);
    reports.push_back(analysis::bootstrap_compare(a, b, metric, opts.n_boot, opts.seed));
  }
  std::ostringstream csv;
  report::write_comparison_csv(csv, a_name, b_name, reports);
  if (opts.out.empty()) {
    std::cout << csv.str();
  } else {
    const fs::path dir = opts.out;
    fs::create_directories(dir);
    open_output(dir / "comparison.csv") << csv.str();
    const json manifest = report::manifest(
        "compare",
        {{"a", opts.dir_a}, {"b", opts.dir_b}, {"design_a", a_name}, {"design_b", b_name},
         {"metrics", split_list(opts.metrics)}, {"n_boot", opts.n_boot}},
        json::object(), opts.seed, {"comparison.csv"});
    open_output(dir / "manifest.json") << manifest.dump(2) << '\n';
    std::cout << csv.str();
  }
  return kOk;
}

struct ServeOptions {
  std::string state_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
};

int cmd_serve(const ServeOptions& opts) {
  std::string dir = opts.state_dir;
  if (dir.empty()) {
    const char* env = std::getenv("AWTITE_STATE_DIR");
    dir = env != nullptr && *env != '\0' ? env : "awtite-state";
  }
  // Signals are taken by a dedicated thread so shutdown runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  conduct::EventStore store(dir);
  service::Server server(store, {opts.host, opts.port, opts.ui_dir});
  if (!server.bind()) {
    std::cerr << "awtite: cannot bind " << opts.host << ":" << opts.port << " (address in use?)\n";
    return kAddressInUse;
  }
  std::cout << "serving " << store.list_trials().size() << " trial(s) from " << store.dir().string() << " on http://"
            << opts.host << ":" << server.port() << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen();
  // listen() can also return on its own; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kOk;
}

int cmd_boundaries(double target, int max_n) {
  const auto b = designs::boin_boundaries(target);
  std::cout << "BOIN target " << report::format_number(target) << ": escalate if rate <= "
            << fixed(b.lambda_e, 4) << ", de-escalate if rate >= " << fixed(b.lambda_d, 4) << "\n\n";
  std::cout << std::setw(4) << "n" << std::setw(12) << "escalate" << std::setw(14) << "de-escalate" << '\n';
  for (int n = 1; n <= max_n; ++n) {
    int esc = -1, de = n + 1;
    for (int x = 0; x <= n; ++x) {
      const double p = static_cast<double>(x) / n;
      if (p <= b.lambda_e) esc = x;
      if (p >= b.lambda_d && de > n) de = x;
    }
    std::cout << std::setw(4) << n << std::setw(12) << (esc < 0 ? "-" : "x<=" + std::to_string(esc)) << std::setw(14)
              << (de > n ? "-" : "x>=" + std::to_string(de)) << '\n';
  }
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Adaptive-weight TITE-CRM dose-finding workbench"};
  app.set_version_flag("--version", std::string(report::version()));
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "print the default configuration and exit");
  app.require_subcommand(0, 1);

  StudyOptions sim_opts;
  int digits = 3;
  auto* simulate = app.add_subcommand("simulate", "simulate every design in every scenario");
  sim_opts.attach(*simulate);
  simulate->add_option("--digits", digits, "decimals in the console table")->check(CLI::Range(0, 12));

  StudyOptions sweep_opts;
  std::string preset;
  auto* sweep = app.add_subcommand("sweep", "one-parameter sensitivity sweep");
  sweep->add_option("preset", preset, "accrual, sample-size, gamma, window or prior")->required();
  sweep_opts.attach(*sweep);

  CompareOptions cmp;
  auto* compare = app.add_subcommand("compare", "bootstrap comparison of two result directories");
  compare->add_option("a", cmp.dir_a, "results directory of method A")->required();
  compare->add_option("b", cmp.dir_b, "results directory of method B")->required();
  compare->add_option("--a-design", cmp.design_a, "design to take from A");
  compare->add_option("--b-design", cmp.design_b, "design to take from B");
  compare->add_option("--metric", cmp.metrics, "comma-separated: p_correct, fraction_above, dlts");
  compare->add_option("--n-boot", cmp.n_boot, "bootstrap resamples");
  compare->add_option("--seed", cmp.seed, "bootstrap seed");
  compare->add_option("--out", cmp.out, "write comparison.csv and a manifest here");

  ServeOptions serve_opts;
  auto* serve = app.add_subcommand("serve", "run the live-trial HTTP service");
  serve->add_option("--state-dir", serve_opts.state_dir, "event log directory (default $AWTITE_STATE_DIR)");
  serve->add_option("--host", serve_opts.host, "bind address");
  serve->add_option("--port", serve_opts.port, "port (0: any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--ui", serve_opts.ui_dir, "directory of static UI assets")->check(CLI::ExistingDirectory);

  double target = 0.25;
  int max_n = 12;
  auto* boundaries = app.add_subcommand("boundaries", "print BOIN decision boundaries");
  boundaries->add_option("--target", target, "target DLT probability")->check(CLI::Range(0.0, 1.0));
  boundaries->add_option("--max-n", max_n, "largest cohort size in the table")->check(CLI::Range(1, 100));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (print_defaults) {
    std::cout << config::to_json(config::default_study()).dump(2) << '\n';
    return kOk;
  }
  if (simulate->parsed()) return cmd_simulate(sim_opts, digits);
  if (sweep->parsed()) return cmd_sweep(sweep_opts, preset);
  if (compare->parsed()) return cmd_compare(cmp);
  if (serve->parsed()) return cmd_serve(serve_opts);
  if (boundaries->parsed()) return cmd_boundaries(target, max_n);
  std::cerr << app.help();
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "awtite: configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "awtite: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "awtite: invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalFailure& e) {
    std::cerr << "awtite: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const conduct::CorruptLog& e) {
    std::cerr << "awtite: corrupt event log: " << e.what() << '\n';
    return kCorruptLog;
  } catch (const std::exception& e) {
    std::cerr << "awtite: " << e.what() << '\n';
    return kFailure;
  }
}
