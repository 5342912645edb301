#pragma once

// Planning grid and Monte Carlo scenario sets of nodal net injections.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pvhc/core.hpp"
#include "pvhc/genflow.hpp"
#include "pvhc/irradiance.hpp"
#include "pvhc/powerflow.hpp"

namespace pvhc::scenario {

/// Normalized growth function on the planning fraction l/L.
using GrowthFunction = std::function<double(double)>;

GrowthFunction linear_growth();

struct Bounds {
  double min = 0.0;
  double max = 0.0;
};

struct GrowthSchedule {
  int steps = 20;                             // L
  std::map<int, Bounds> cluster_energy_gwh;  // w_k^min, w_k^max
  std::vector<Bounds> node_pv_kwp;           // per network node
  GrowthFunction gamma = linear_growth();

  double gamma_at(int l) const;
  void validate() const;
};

/// w(l) = w_min + gamma(l / L) (w_max - w_min).
double growth_level(double w_min, double w_max, int l, int L, const GrowthFunction& gamma = linear_growth());

double pv_capacity_at(const GrowthSchedule& schedule, std::size_t node, int l);
double total_pv_capacity(const GrowthSchedule& schedule, int l);
double total_energy(const GrowthSchedule& schedule, int l);

/// Cluster energy bounds from node base loads: w_min is the summed base load
/// and w_max = w_min * energy_max_factor. PV bounds copied from the nodes.
GrowthSchedule schedule_from_network(const powerflow::FeederNetwork& net, int steps, double energy_max_factor,
                                     GrowthFunction gamma = linear_growth());

/// Net injection of one node in one scenario.
struct NodalInjection {
  std::vector<double> p;       // kW, load - pv
  std::vector<double> q;       // kvar
  std::vector<double> load_p;  // kW
  std::vector<double> pv_p;    // kW
};

struct ScenarioSet {
  int energy_step = 0;
  int pv_step = 0;
  std::size_t steps_per_day = 0;
  double power_factor = 1.0;
  std::uint64_t master_seed = 0;
  std::vector<std::string> node_ids;                  // load/PV nodes covered
  std::vector<std::size_t> node_index;                // into FeederNetwork::nodes
  std::vector<std::vector<NodalInjection>> scenarios; // [s][node]
  std::vector<std::size_t> irradiance_days;           // [s]
  std::size_t clipping_warnings = 0;
  std::size_t condition_warnings = 0;

  /// Throws when p != load - pv or q != load * tan(arccos pf) anywhere.
  void check_identities() const;
};

/// Load draws for one energy step: [s][load node] daily kW profiles.
struct LoadDraws {
  int energy_step = 0;
  std::vector<std::vector<std::vector<double>>> profiles;
  std::size_t clipping_warnings = 0;
  std::size_t condition_warnings = 0;
};

/// Generates scenario sets for cells of the (energy growth x PV growth) grid.
///
/// Random streams are addressed by (purpose, energy step, scenario, node) for
/// load draws and by (purpose, scenario) for irradiance days, so any cell can
/// be built independently and in any order.
class ScenarioBuilder {
 public:
  ScenarioBuilder(const powerflow::FeederNetwork& net, std::map<int, genflow::FlowModel> models,
                  irradiance::IrradianceLibrary library, GrowthSchedule energy, GrowthSchedule pv, double power_factor,
                  RngStream stream);

  const std::vector<std::size_t>& load_nodes() const { return load_nodes_; }
  const std::vector<std::size_t>& covered_nodes() const { return covered_; }
  std::size_t steps_per_day() const { return steps_; }

  /// Target annual energy of a load node at an energy step.
  double node_energy_target(std::size_t node, int energy_step) const;

  LoadDraws draw_loads(int energy_step, std::size_t scenarios) const;
  std::size_t draw_irradiance_day(std::size_t scenario) const;
  std::vector<std::size_t> draw_irradiance_days(std::size_t scenarios) const;

  ScenarioSet assemble(const LoadDraws& loads, std::span<const std::size_t> irradiance_days, int pv_step) const;
  ScenarioSet build(int energy_step, int pv_step, std::size_t scenarios) const;

  /// Node x time matrices for the power-flow solver.
  std::pair<Matrix, Matrix> injection_matrices(const ScenarioSet& set, std::size_t scenario) const;

 private:
  powerflow::FeederNetwork net_;
  std::map<int, genflow::FlowModel> models_;
  irradiance::IrradianceLibrary library_;
  GrowthSchedule energy_;
  GrowthSchedule pv_;
  double pf_;
  double q_factor_;
  RngStream stream_;
  std::size_t steps_ = 0;
  std::vector<std::size_t> load_nodes_;
  std::vector<std::size_t> covered_;
  std::vector<double> share_;  // node share of its cluster's base energy
};

void write_scenario_set(const ScenarioSet& set, const std::filesystem::path& path);
/// Reads and re-checks the net-injection identities.
ScenarioSet read_scenario_set(const std::filesystem::path& path);

}  // namespace pvhc::scenario
