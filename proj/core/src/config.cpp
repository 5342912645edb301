#include "pvhc/config.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "pvhc/csv.hpp"

namespace pvhc {

namespace {

using nlohmann::json;

// Rejects keys that are not part of the schema so typos do not silently fall
// back to defaults.
void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("invalid value for '") + key + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string direction_name(risk::Direction d) { return d == risk::Direction::kOver ? "over" : "under"; }

}  // namespace

int PipelineConfig::energy_step_for(double pct) const {
  const double x = pct / 100.0 * (energy_steps - 1);
  return static_cast<int>(std::lround(x));
}

void PipelineConfig::validate(bool check_files) const {
  if (check_files) {
    for (const auto* p : {&profiles_csv, &irradiance_csv, &nodes_csv, &branches_csv})
      if (!std::filesystem::exists(*p)) throw ConfigError("input file does not exist: " + p->string());
  }
  if (output_dir.empty()) throw ConfigError("paths.output must be set");
  if (delta_t_min <= 0 || kMinutesPerDay % delta_t_min != 0)
    throw ConfigError("delta_t_min must divide 1440");
  if (k_min < 1 || k_max < k_min) throw ConfigError("clustering k range is invalid");
  if (k_fixed && *k_fixed < 1) throw ConfigError("clustering.k must be at least 1");
  if (algorithms.empty()) throw ConfigError("at least one clustering algorithm is required");
  if (architecture.layers < 1 || architecture.hidden < 1) throw ConfigError("flow architecture must be positive");
  try {
    training.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (energy_steps < 2 || pv_steps < 2) throw ConfigError("grid dimensions must be at least 2");
  if (scenarios < 1) throw ConfigError("scenarios must be at least 1");
  if (!(energy_max_factor >= 1.0)) throw ConfigError("energy_max_factor must be at least 1");
  if (!(power_factor > 0.0 && power_factor <= 1.0)) throw ConfigError("power_factor must lie in (0, 1]");
  if (!(base_kv > 0.0) || !(base_mva > 0.0) || !(slack_pu > 0.0)) throw ConfigError("network bases must be positive");
  if (!(solver.tolerance > 0.0) || solver.max_iterations < 1) throw ConfigError("solver settings are invalid");
  try {
    limits.validate();
    duration_grid().validate(static_cast<std::size_t>(kMinutesPerDay / delta_t_min));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (risk_levels.empty()) throw ConfigError("at least one risk level is required");
  for (double r : risk_levels)
    if (!(r >= 0.0 && r <= 50.0)) throw ConfigError("risk levels must lie in [0, 50]");
  for (double e : report_energy_pct)
    if (!(e >= 0.0 && e <= 100.0)) throw ConfigError("report energy percentages must lie in [0, 100]");
  for (const auto& c : cases)
    if (c.energy_step < 0 || c.energy_step >= energy_steps || c.pv_step < 0 || c.pv_step >= pv_steps)
      throw ConfigError("operating point '" + c.name + "' lies outside the grid");
  if (histogram_bins < 1) throw ConfigError("histogram_bins must be positive");
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "root",
             {"schema_version", "paths", "seed", "delta_t_min", "clustering", "flow", "grid", "network", "solver",
              "metrics", "report"});
  if (!j.contains("schema_version")) throw ConfigError("schema_version is missing");
  if (j["schema_version"] != kConfigSchemaVersion)
    throw ConfigError("unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");

  PipelineConfig c;
  if (!j.contains("paths")) throw ConfigError("paths section is missing");
  const auto& p = j["paths"];
  check_keys(p, "paths", {"profiles", "irradiance", "nodes", "branches", "output"});
  for (const char* key : {"profiles", "irradiance", "nodes", "branches", "output"})
    if (!p.contains(key)) throw ConfigError(std::string("paths.") + key + " is missing");
  c.profiles_csv = resolve(base_dir, p["profiles"].get<std::string>());
  c.irradiance_csv = resolve(base_dir, p["irradiance"].get<std::string>());
  c.nodes_csv = resolve(base_dir, p["nodes"].get<std::string>());
  c.branches_csv = resolve(base_dir, p["branches"].get<std::string>());
  c.output_dir = resolve(base_dir, p["output"].get<std::string>());

  read(j, "seed", c.master_seed);
  read(j, "delta_t_min", c.delta_t_min);

  if (j.contains("clustering")) {
    const auto& s = j["clustering"];
    check_keys(s, "clustering", {"k_min", "k_max", "k", "algorithms", "seed"});
    read(s, "k_min", c.k_min);
    read(s, "k_max", c.k_max);
    if (s.contains("k")) c.k_fixed = s["k"].get<int>();
    read(s, "seed", c.clustering_seed);
    if (s.contains("algorithms")) {
      c.algorithms.clear();
      try {
        for (const auto& a : s["algorithms"]) c.algorithms.push_back(clustering::algorithm_from_string(a.get<std::string>()));
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (j.contains("flow")) {
    const auto& s = j["flow"];
    check_keys(s, "flow",
               {"layers", "hidden", "learning_rate", "batch_size", "max_epochs", "clip_norm", "validation_fraction",
                "patience", "seed"});
    read(s, "layers", c.architecture.layers);
    read(s, "hidden", c.architecture.hidden);
    read(s, "learning_rate", c.training.learning_rate);
    read(s, "batch_size", c.training.batch_size);
    read(s, "max_epochs", c.training.max_epochs);
    read(s, "clip_norm", c.training.clip_norm);
    read(s, "validation_fraction", c.training.validation_fraction);
    read(s, "patience", c.training.patience);
    read(s, "seed", c.training_seed);
  }
  if (j.contains("grid")) {
    const auto& s = j["grid"];
    check_keys(s, "grid", {"energy_steps", "pv_steps", "scenarios", "energy_max_factor", "power_factor"});
    read(s, "energy_steps", c.energy_steps);
    read(s, "pv_steps", c.pv_steps);
    read(s, "scenarios", c.scenarios);
    read(s, "energy_max_factor", c.energy_max_factor);
    read(s, "power_factor", c.power_factor);
  }
  if (j.contains("network")) {
    const auto& s = j["network"];
    check_keys(s, "network", {"base_kv", "base_mva", "slack_pu", "thermal_limit_a"});
    read(s, "base_kv", c.base_kv);
    read(s, "base_mva", c.base_mva);
    read(s, "slack_pu", c.slack_pu);
    read(s, "thermal_limit_a", c.thermal_limit_a);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check_keys(s, "solver", {"tolerance", "max_iterations"});
    read(s, "tolerance", c.solver.tolerance);
    read(s, "max_iterations", c.solver.max_iterations);
  }
  if (j.contains("metrics")) {
    const auto& s = j["metrics"];
    check_keys(s, "metrics", {"v_max", "v_caution", "v_min", "durations_min", "risk_levels"});
    read(s, "v_max", c.limits.v_max);
    read(s, "v_caution", c.limits.v_caution);
    read(s, "v_min", c.limits.v_min);
    read(s, "durations_min", c.durations_min);
    read(s, "risk_levels", c.risk_levels);
  }
  if (j.contains("report")) {
    const auto& s = j["report"];
    check_keys(s, "report", {"energy_growth_pct", "cases", "histogram_bins"});
    read(s, "energy_growth_pct", c.report_energy_pct);
    read(s, "histogram_bins", c.histogram_bins);
    if (s.contains("cases")) {
      for (const auto& e : s["cases"]) {
        check_keys(e, "report.cases", {"name", "energy_step", "pv_step", "direction"});
        OperatingPoint op;
        read(e, "name", op.name);
        read(e, "energy_step", op.energy_step);
        read(e, "pv_step", op.pv_step);
        const std::string dir = e.value("direction", "over");
        if (dir != "over" && dir != "under") throw ConfigError("case direction must be 'over' or 'under'");
        op.direction = dir == "over" ? risk::Direction::kOver : risk::Direction::kUnder;
        c.cases.push_back(std::move(op));
      }
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  auto cfg = parse_config(text, std::filesystem::absolute(path).parent_path());
  cfg.validate();
  return cfg;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["paths"] = {{"profiles", c.profiles_csv.string()},
                {"irradiance", c.irradiance_csv.string()},
                {"nodes", c.nodes_csv.string()},
                {"branches", c.branches_csv.string()},
                {"output", c.output_dir.string()}};
  j["seed"] = c.master_seed;
  j["delta_t_min"] = c.delta_t_min;
  std::vector<std::string> algs;
  for (auto a : c.algorithms) algs.push_back(clustering::to_string(a));
  j["clustering"] = {{"k_min", c.k_min}, {"k_max", c.k_max}, {"algorithms", algs}, {"seed", c.clustering_seed}};
  if (c.k_fixed) j["clustering"]["k"] = *c.k_fixed;
  j["flow"] = {{"layers", c.architecture.layers},
               {"hidden", c.architecture.hidden},
               {"learning_rate", c.training.learning_rate},
               {"batch_size", c.training.batch_size},
               {"max_epochs", c.training.max_epochs},
               {"clip_norm", c.training.clip_norm},
               {"validation_fraction", c.training.validation_fraction},
               {"patience", c.training.patience},
               {"seed", c.training_seed}};
  j["grid"] = {{"energy_steps", c.energy_steps},
               {"pv_steps", c.pv_steps},
               {"scenarios", c.scenarios},
               {"energy_max_factor", c.energy_max_factor},
               {"power_factor", c.power_factor}};
  j["network"] = {{"base_kv", c.base_kv},
                  {"base_mva", c.base_mva},
                  {"slack_pu", c.slack_pu},
                  {"thermal_limit_a", c.thermal_limit_a}};
  j["solver"] = {{"tolerance", c.solver.tolerance}, {"max_iterations", c.solver.max_iterations}};
  j["metrics"] = {{"v_max", c.limits.v_max},
                  {"v_caution", c.limits.v_caution},
                  {"v_min", c.limits.v_min},
                  {"durations_min", c.durations_min},
                  {"risk_levels", c.risk_levels}};
  json cases = json::array();
  for (const auto& op : c.cases)
    cases.push_back({{"name", op.name},
                     {"energy_step", op.energy_step},
                     {"pv_step", op.pv_step},
                     {"direction", direction_name(op.direction)}});
  j["report"] = {{"energy_growth_pct", c.report_energy_pct}, {"cases", cases}, {"histogram_bins", c.histogram_bins}};
  return j.dump(2);
}

}  // namespace pvhc
