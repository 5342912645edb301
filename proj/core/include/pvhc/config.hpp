#pragma once

// Pipeline configuration: one JSON document with a versioned schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pvhc/clustering.hpp"
#include "pvhc/genflow.hpp"
#include "pvhc/powerflow.hpp"
#include "pvhc/riskmetrics.hpp"

namespace pvhc {

inline constexpr int kConfigSchemaVersion = 1;

/// Raised for invalid or unreadable configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct OperatingPoint {
  std::string name;
  int energy_step = 0;
  int pv_step = 0;
  risk::Direction direction = risk::Direction::kOver;
};

struct PipelineConfig {
  std::filesystem::path profiles_csv;
  std::filesystem::path irradiance_csv;
  std::filesystem::path nodes_csv;
  std::filesystem::path branches_csv;
  std::filesystem::path output_dir;

  std::uint64_t master_seed = 42;
  int delta_t_min = 15;

  // clustering
  int k_min = 2;
  int k_max = 12;
  std::optional<int> k_fixed;
  std::vector<clustering::Algorithm> algorithms{clustering::Algorithm::kKMeans, clustering::Algorithm::kGmm,
                                                clustering::Algorithm::kAgglomerative};
  std::uint64_t clustering_seed = 1;

  // flows
  genflow::FlowArchitecture architecture;
  genflow::TrainConfig training;
  std::uint64_t training_seed = 2;

  // planning grid and scenarios
  int energy_steps = 21;
  int pv_steps = 21;
  int scenarios = 1000;
  double energy_max_factor = 2.0;
  double power_factor = 0.95;

  // network and solver
  double base_kv = 10.0;
  double base_mva = 1.0;
  double slack_pu = 1.0;
  double thermal_limit_a = 200.0;
  powerflow::SolverOptions solver;

  // metrics
  risk::VoltageLimits limits;
  std::vector<int> durations_min{15, 30, 60, 120, 240, 360, 720, 1440};
  std::vector<double> risk_levels{0.0, 5.0, 10.0};

  // report
  std::vector<double> report_energy_pct{0.0, 30.0, 50.0, 100.0};
  std::vector<OperatingPoint> cases;
  int histogram_bins = 40;

  risk::DurationGrid duration_grid() const { return {delta_t_min, durations_min}; }
  /// Grid step closest to a growth percentage on the energy axis.
  int energy_step_for(double pct) const;

  /// Throws ConfigError for the first violated rule. `check_files` also
  /// requires every input path to exist.
  void validate(bool check_files = true) const;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the effective configuration (all defaults filled in).
std::string config_to_json(const PipelineConfig& cfg);

}  // namespace pvhc
