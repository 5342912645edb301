#pragma once

// Radial single-phase-equivalent AC power flow by backward-forward sweep.

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "pvhc/core.hpp"

namespace pvhc::powerflow {

using Complex = std::complex<double>;

enum class NodeType { kSlack, kLoad, kPv, kMixed };

std::string to_string(NodeType t);
NodeType node_type_from_string(const std::string& s);

struct Node {
  std::string id;
  NodeType type = NodeType::kLoad;
  int cluster = -1;  // -1 when the node carries no load
  double pv_kwp_min = 0.0;
  double pv_kwp_max = 0.0;
  double base_load_gwh = 0.0;

  bool has_load() const { return cluster >= 0 && (type == NodeType::kLoad || type == NodeType::kMixed); }
  bool has_pv() const { return type == NodeType::kPv || type == NodeType::kMixed; }
};

struct Branch {
  std::string from;
  std::string to;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
};

struct FeederNetwork {
  std::vector<Node> nodes;
  std::vector<Branch> branches;
  double base_kv = 10.0;
  double base_mva = 1.0;
  double slack_pu = 1.0;
  double thermal_limit_a = 200.0;  // recorded only

  /// Index of the node with this id, or -1.
  int index_of(const std::string& id) const;
  int slack_index() const;
  double impedance_base_ohm() const { return base_kv * base_kv / base_mva; }
};

/// Every violated topology/data rule, each naming the offending ids. Empty
/// when the network is valid.
std::vector<std::string> validate_network(const FeederNetwork& net);

FeederNetwork read_network(const std::filesystem::path& nodes_csv, const std::filesystem::path& branches_csv);

struct SolverOptions {
  double tolerance = 1e-8;  // max |dV| in p.u.
  int max_iterations = 100;
};

struct SnapshotResult {
  std::vector<Complex> voltage;  // p.u., indexed like FeederNetwork::nodes
  bool converged = false;
  int iterations = 0;
};

/// Precomputed sweep ordering for one validated network.
class RadialSolver {
 public:
  explicit RadialSolver(const FeederNetwork& net, SolverOptions opts = {});

  std::size_t node_count() const { return parent_.size(); }
  std::size_t slack() const { return slack_; }
  const FeederNetwork& network() const { return net_; }

  /// Loads in kW/kvar (consumption positive, generation negative).
  SnapshotResult solve(std::span<const double> p_kw, std::span<const double> q_kvar) const;
  SnapshotResult solve(std::span<const double> p_kw, std::span<const double> q_kvar,
                       std::span<const Complex> start) const;

  /// Parent index per node (slack has none, reported as its own index).
  const std::vector<std::size_t>& parents() const { return parent_; }
  /// Series impedance in p.u. of the branch feeding each node.
  const std::vector<Complex>& branch_impedance_pu() const { return z_; }

 private:
  FeederNetwork net_;
  SolverOptions opts_;
  std::size_t slack_ = 0;
  std::vector<std::size_t> order_;  // breadth-first from the slack
  std::vector<std::size_t> parent_;
  std::vector<Complex> z_;
};

/// Voltage magnitudes of one scenario (node x time) with per-step flags.
struct VoltageSlice {
  Matrix v;
  std::vector<char> converged;
  std::size_t nonconverged = 0;
};

/// Solves the T snapshots of one scenario, warm-starting each from the
/// previous step. `p_kw`/`q_kvar` are node x time.
VoltageSlice simulate_scenario(const RadialSolver& solver, const Matrix& p_kw, const Matrix& q_kvar);

}  // namespace pvhc::powerflow
