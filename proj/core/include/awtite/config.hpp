#pragma once

// JSON configuration dialect shared by the command-line tool and the trial
// service. Every field is optional; omitted fields take the defaults printed
// by default_study(). Unknown keys are rejected so that typos do not silently
// fall back to a default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "awtite/sim.hpp"

namespace awtite::config {

struct SimulationSettings {
  int replications = 2000;
  std::uint64_t seed = 20240601;
  int jobs = 0;  // 0: one per hardware thread
  bool trial_logs = false;
};

struct BootstrapSettings {
  int resamples = 2000;
  std::uint64_t seed = 20240602;
};

struct StudyConfig {
  sim::TrialConfig trial;
  std::vector<sim::Scenario> scenarios;
  std::vector<designs::DesignId> designs;
  SimulationSettings simulation;
  BootstrapSettings bootstrap;

  const sim::Scenario& scenario(std::string_view name) const;
};

StudyConfig default_study();

// Parses text, reporting syntax errors as ConfigError at "line:column".
nlohmann::json parse_document(std::string_view text);
nlohmann::json read_document(const std::filesystem::path& path);

// base_dir resolves a scenarios entry given as a file name.
StudyConfig study_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
StudyConfig load_study(const std::filesystem::path& path);

nlohmann::json to_json(const StudyConfig& study);
nlohmann::json to_json(const sim::Scenario& scenario);

// Flat form of a design configuration, as used when creating a live trial:
// {"design", "target", "t_max", "gamma_assumed", "skeleton", "prior": {a, b},
//  "aw_likelihood", "alpha_prior_sd", "min_before_deescalation", ...}.
designs::DesignConfig design_from_json(const nlohmann::json& doc, const std::string& pointer = "");
nlohmann::json design_to_json(const designs::DesignConfig& cfg);

}  // namespace awtite::config
