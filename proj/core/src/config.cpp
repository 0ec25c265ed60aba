#include "awtite/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "awtite/error.hpp"

namespace awtite::config {

using nlohmann::json;

namespace {

std::string escape_key(std::string_view key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// An object being read field by field. finish() rejects unread keys.
class Section {
 public:
  Section(const json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string where() const { return pointer_.empty() ? "/" : pointer_; }
  std::string where(std::string_view key) const { return pointer_ + "/" + escape_key(key); }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key), "expected a number");
      out = v->get<double>();
    }
  }

  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ConfigError(where(key), "integer out of range");
      }
      out = static_cast<int>(x);
    }
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(where(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key), "expected an array of numbers");
      std::vector<double> xs;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(where(key) + "/" + std::to_string(i), "expected a number");
        xs.push_back((*v)[i].get<double>());
      }
      out = std::move(xs);
    }
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError(where(item.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string pointer_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& where, const std::string& what) {
  if (!ok) throw ConfigError(where, what);
}

template <class F>
auto rethrow_at(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw ConfigError(where, e.what());
  }
}

void read_prior(Section& s, const std::string& key, timing::GammaPrior& prior) {
  if (const json* v = s.find(key)) {
    Section p(*v, s.where(key));
    p.number("a", prior.a);
    p.number("b", prior.b);
    p.finish();
    rethrow_at(s.where(key), [&] { prior.validate(); });
  }
}

void read_skeleton(Section& s, const std::string& key, crm::Skeleton& skeleton) {
  std::vector<double> probs(skeleton.probs().begin(), skeleton.probs().end());
  s.numbers(key, probs);
  skeleton = rethrow_at(s.where(key), [&] { return crm::Skeleton(probs); });
}

void read_design_id(Section& s, const std::string& key, designs::DesignId& id) {
  std::string name;
  s.string(key, name);
  if (!name.empty()) id = rethrow_at(s.where(key), [&] { return designs::parse_design(name); });
}

void read_aw_likelihood(Section& s, const std::string& key, designs::AwLikelihood& scheme) {
  std::string name;
  s.string(key, name);
  if (!name.empty()) scheme = rethrow_at(s.where(key), [&] { return designs::parse_aw_likelihood(name); });
}

sim::Scenario read_scenario(const json& j, const std::string& pointer, double target) {
  Section s(j, pointer);
  std::string name;
  std::vector<double> probs;
  double gamma_true = 2.0;
  int declared = 0;
  s.string("name", name);
  s.numbers("true_probs", probs);
  s.number("gamma_true", gamma_true);
  s.integer("true_mtd", declared);
  s.finish();
  require(!name.empty(), s.where("name"), "scenario needs a name");
  require(!probs.empty(), s.where("true_probs"), "scenario needs true_probs");
  return rethrow_at(pointer, [&] {
    return sim::Scenario::make(name, probs, target, gamma_true,
                               declared > 0 ? std::optional<int>(declared) : std::nullopt);
  });
}

std::vector<sim::Scenario> read_scenarios(const json& j, const std::string& pointer, double target,
                                          const std::filesystem::path& base_dir) {
  if (j.is_string()) {
    std::filesystem::path file = j.get<std::string>();
    if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
    json doc;
    try {
      doc = read_document(file);
    } catch (const ConfigError& e) {
      throw ConfigError(pointer, e.what());
    }
    const json& list = doc.is_object() && doc.contains("scenarios") ? doc.at("scenarios") : doc;
    return read_scenarios(list, file.string() + "#" + (doc.is_object() ? "/scenarios" : ""), target, {});
  }
  require(j.is_array() && !j.empty(), pointer, "expected a non-empty array of scenarios or a file name");
  std::vector<sim::Scenario> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = pointer + "/" + std::to_string(i);
    out.push_back(read_scenario(j[i], at, target));
    require(names.insert(out.back().name).second, at + "/name", "duplicate scenario name");
  }
  return out;
}

std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace

const sim::Scenario& StudyConfig::scenario(std::string_view name) const {
  for (const auto& s : scenarios) {
    if (s.name == name) return s;
  }
  throw ConfigError("/scenarios", "no scenario named '" + std::string(name) + "'");
}

StudyConfig default_study() {
  StudyConfig s;
  s.scenarios = sim::reference_scenarios(s.trial.design.target);
  s.designs = designs::all_designs();
  return s;
}

json parse_document(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    if (auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError(line_column(text, e.byte), msg);
  }
}

json read_document(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_document(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ":" + e.where(), e.message());
  }
}

StudyConfig study_from_json(const json& doc, const std::filesystem::path& base_dir) {
  StudyConfig study = default_study();
  sim::TrialConfig& trial = study.trial;
  designs::DesignConfig& d = trial.design;
  Section root(doc, "");

  if (const json* j = root.find("trial")) {
    Section s(*j, "/trial");
    s.integer("n_patients", trial.n_patients);
    s.number("accrual_interval", trial.accrual_interval);
    s.number("target", d.target);
    s.number("t_max", d.t_max);
    s.integer("cohort_size", d.cohort_size);
    s.finish();
    require(trial.n_patients >= 1, s.where("n_patients"), "must be at least 1");
    require(trial.accrual_interval > 0.0, s.where("accrual_interval"), "must be positive");
    require(d.target > 0.0 && d.target < 1.0, s.where("target"), "must lie in (0, 1)");
    require(d.t_max > 0.0, s.where("t_max"), "must be positive");
    require(d.cohort_size >= 1, s.where("cohort_size"), "must be at least 1");
  }
  if (const json* j = root.find("crm")) {
    Section s(*j, "/crm");
    read_skeleton(s, "skeleton", d.skeleton);
    s.number("alpha_prior_mean", d.alpha_prior.mean);
    s.number("alpha_prior_sd", d.alpha_prior.sd);
    s.integer("quadrature_points", d.quadrature.points);
    s.number("quadrature_half_width_sd", d.quadrature.half_width_sd);
    s.boolean("no_skip", d.safety.no_skip);
    s.integer("min_before_deescalation", d.safety.min_before_deescalation);
    s.finish();
    require(d.alpha_prior.sd > 0.0, s.where("alpha_prior_sd"), "must be positive");
    require(d.quadrature.points >= 3, s.where("quadrature_points"), "must be at least 3");
    require(d.quadrature.half_width_sd >= 8.0, s.where("quadrature_half_width_sd"), "must be at least 8");
    require(d.safety.min_before_deescalation >= 0, s.where("min_before_deescalation"), "must be >= 0");
  }
  if (const json* j = root.find("aw")) {
    Section s(*j, "/aw");
    s.number("gamma_assumed", d.gamma_assumed);
    read_aw_likelihood(s, "likelihood", d.aw_likelihood);
    read_prior(s, "prior", d.prior);
    s.finish();
    require(d.gamma_assumed > 0.0, s.where("gamma_assumed"), "must be positive");
  }
  if (const json* j = root.find("mtpi")) {
    Section s(*j, "/mtpi");
    s.number("eps1", d.mtpi_eps1);
    s.number("eps2", d.mtpi_eps2);
    s.boolean("exclusion", d.mtpi_exclusion);
    s.number("exclusion_threshold", d.exclusion_threshold);
    s.finish();
    require(d.mtpi_eps1 >= 0.0 && d.target - d.mtpi_eps1 > 0.0, s.where("eps1"), "interval must stay above 0");
    require(d.mtpi_eps2 >= 0.0 && d.target + d.mtpi_eps2 < 1.0, s.where("eps2"), "interval must stay below 1");
    require(d.exclusion_threshold > 0.0 && d.exclusion_threshold < 1.0, s.where("exclusion_threshold"),
            "must lie in (0, 1)");
  }
  if (const json* j = root.find("scenarios")) {
    study.scenarios = read_scenarios(*j, "/scenarios", d.target, base_dir);
  } else {
    study.scenarios = sim::reference_scenarios(d.target);
  }
  for (const auto& sc : study.scenarios) {
    require(sc.num_doses() == d.num_doses(), "/scenarios",
            "scenario '" + sc.name + "' has " + std::to_string(sc.num_doses()) + " doses but the skeleton has " +
                std::to_string(d.num_doses()));
  }
  if (const json* j = root.find("designs")) {
    require(j->is_array() && !j->empty(), "/designs", "expected a non-empty array of design names");
    study.designs.clear();
    for (std::size_t i = 0; i < j->size(); ++i) {
      const std::string at = "/designs/" + std::to_string(i);
      require((*j)[i].is_string(), at, "expected a design name");
      study.designs.push_back(rethrow_at(at, [&] { return designs::parse_design((*j)[i].get<std::string>()); }));
    }
  }
  if (const json* j = root.find("simulation")) {
    Section s(*j, "/simulation");
    s.integer("replications", study.simulation.replications);
    s.unsigned64("seed", study.simulation.seed);
    s.integer("jobs", study.simulation.jobs);
    s.boolean("trial_logs", study.simulation.trial_logs);
    s.finish();
    require(study.simulation.replications >= 1, s.where("replications"), "must be at least 1");
    require(study.simulation.jobs >= 0, s.where("jobs"), "must be >= 0");
  }
  if (const json* j = root.find("bootstrap")) {
    Section s(*j, "/bootstrap");
    s.integer("resamples", study.bootstrap.resamples);
    s.unsigned64("seed", study.bootstrap.seed);
    s.finish();
    require(study.bootstrap.resamples >= 1, s.where("resamples"), "must be at least 1");
  }
  root.finish();
  rethrow_at("/", [&] { trial.validate(); });
  return study;
}

StudyConfig load_study(const std::filesystem::path& path) {
  return study_from_json(read_document(path), path.parent_path());
}

json to_json(const sim::Scenario& scenario) {
  return {{"name", scenario.name},
          {"true_probs", scenario.true_probs},
          {"gamma_true", scenario.gamma_true},
          {"true_mtd", scenario.true_mtd}};
}

json to_json(const StudyConfig& study) {
  const designs::DesignConfig& d = study.trial.design;
  json scenarios = json::array();
  for (const auto& s : study.scenarios) scenarios.push_back(to_json(s));
  json design_names = json::array();
  for (auto id : study.designs) design_names.push_back(std::string(designs::to_string(id)));
  return {
      {"trial",
       {{"n_patients", study.trial.n_patients},
        {"accrual_interval", study.trial.accrual_interval},
        {"target", d.target},
        {"t_max", d.t_max},
        {"cohort_size", d.cohort_size}}},
      {"crm",
       {{"skeleton", std::vector<double>(d.skeleton.probs().begin(), d.skeleton.probs().end())},
        {"alpha_prior_mean", d.alpha_prior.mean},
        {"alpha_prior_sd", d.alpha_prior.sd},
        {"quadrature_points", d.quadrature.points},
        {"quadrature_half_width_sd", d.quadrature.half_width_sd},
        {"no_skip", d.safety.no_skip},
        {"min_before_deescalation", d.safety.min_before_deescalation}}},
      {"aw",
       {{"gamma_assumed", d.gamma_assumed},
        {"likelihood", std::string(designs::to_string(d.aw_likelihood))},
        {"prior", {{"a", d.prior.a}, {"b", d.prior.b}}}}},
      {"mtpi",
       {{"eps1", d.mtpi_eps1},
        {"eps2", d.mtpi_eps2},
        {"exclusion", d.mtpi_exclusion},
        {"exclusion_threshold", d.exclusion_threshold}}},
      {"scenarios", scenarios},
      {"designs", design_names},
      {"simulation",
       {{"replications", study.simulation.replications},
        {"seed", study.simulation.seed},
        {"jobs", study.simulation.jobs},
        {"trial_logs", study.simulation.trial_logs}}},
      {"bootstrap", {{"resamples", study.bootstrap.resamples}, {"seed", study.bootstrap.seed}}},
  };
}

designs::DesignConfig design_from_json(const json& doc, const std::string& pointer) {
  designs::DesignConfig d;
  Section s(doc, pointer);
  read_design_id(s, "design", d.design);
  s.number("target", d.target);
  s.number("t_max", d.t_max);
  s.number("gamma_assumed", d.gamma_assumed);
  read_skeleton(s, "skeleton", d.skeleton);
  read_prior(s, "prior", d.prior);
  read_aw_likelihood(s, "aw_likelihood", d.aw_likelihood);
  s.number("alpha_prior_mean", d.alpha_prior.mean);
  s.number("alpha_prior_sd", d.alpha_prior.sd);
  s.boolean("no_skip", d.safety.no_skip);
  s.integer("min_before_deescalation", d.safety.min_before_deescalation);
  s.finish();
  require(d.target > 0.0 && d.target < 1.0, s.where("target"), "must lie in (0, 1)");
  require(d.t_max > 0.0, s.where("t_max"), "must be positive");
  require(d.gamma_assumed > 0.0, s.where("gamma_assumed"), "must be positive");
  require(d.alpha_prior.sd > 0.0, s.where("alpha_prior_sd"), "must be positive");
  require(d.safety.min_before_deescalation >= 0, s.where("min_before_deescalation"), "must be >= 0");
  rethrow_at(s.where(), [&] { d.validate(); });
  return d;
}

json design_to_json(const designs::DesignConfig& d) {
  return {{"design", std::string(designs::to_string(d.design))},
          {"target", d.target},
          {"t_max", d.t_max},
          {"gamma_assumed", d.gamma_assumed},
          {"skeleton", std::vector<double>(d.skeleton.probs().begin(), d.skeleton.probs().end())},
          {"prior", {{"a", d.prior.a}, {"b", d.prior.b}}},
          {"aw_likelihood", std::string(designs::to_string(d.aw_likelihood))},
          {"alpha_prior_mean", d.alpha_prior.mean},
          {"alpha_prior_sd", d.alpha_prior.sd},
          {"no_skip", d.safety.no_skip},
          {"min_before_deescalation", d.safety.min_before_deescalation}};
}

}  // namespace awtite::config
