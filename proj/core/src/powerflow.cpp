#include "pvhc/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "pvhc/csv.hpp"

namespace pvhc::powerflow {

std::string to_string(NodeType t) {
  switch (t) {
    case NodeType::kSlack: return "slack";
    case NodeType::kLoad: return "load";
    case NodeType::kPv: return "pv";
    case NodeType::kMixed: return "mixed";
  }
  return "unknown";
}

NodeType node_type_from_string(const std::string& s) {
  if (s == "slack") return NodeType::kSlack;
  if (s == "load") return NodeType::kLoad;
  if (s == "pv") return NodeType::kPv;
  if (s == "mixed") return NodeType::kMixed;
  throw Error("unknown node type '" + s + "'");
}

int FeederNetwork::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

int FeederNetwork::slack_index() const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].type == NodeType::kSlack) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> validate_network(const FeederNetwork& net) {
  std::vector<std::string> errors;
  if (net.nodes.empty()) {
    errors.emplace_back("network has no nodes");
    return errors;
  }
  if (!(net.base_kv > 0.0) || !(net.base_mva > 0.0)) errors.emplace_back("voltage and power bases must be positive");

  std::size_t slack_count = 0;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) {
    const auto& n = net.nodes[i];
    if (n.type == NodeType::kSlack) ++slack_count;
    for (std::size_t j = i + 1; j < net.nodes.size(); ++j)
      if (net.nodes[j].id == n.id) errors.push_back("duplicate node id " + n.id);
    if (n.pv_kwp_min < 0.0 || n.pv_kwp_max < n.pv_kwp_min) errors.push_back("invalid PV bounds at node " + n.id);
    if (n.base_load_gwh < 0.0) errors.push_back("negative base load at node " + n.id);
  }
  if (slack_count != 1) errors.push_back("expected exactly one slack node, found " + std::to_string(slack_count));

  // Union-find for cycle detection, adjacency for reachability.
  const std::size_t n = net.nodes.size();
  std::vector<std::size_t> uf(n);
  std::iota(uf.begin(), uf.end(), 0);
  auto find = [&](std::size_t a) {
    while (uf[a] != a) a = uf[a] = uf[uf[a]];
    return a;
  };
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& b : net.branches) {
    const int f = net.index_of(b.from);
    const int t = net.index_of(b.to);
    const std::string name = b.from + "-" + b.to;
    if (f < 0 || t < 0) {
      errors.push_back("branch " + name + " references an unknown node");
      continue;
    }
    if (b.r_ohm < 0.0 || b.x_ohm < 0.0) errors.push_back("negative impedance on branch " + name);
    if (std::hypot(b.r_ohm, b.x_ohm) <= 0.0) errors.push_back("zero impedance on branch " + name);
    const auto rf = find(static_cast<std::size_t>(f));
    const auto rt = find(static_cast<std::size_t>(t));
    if (rf == rt)
      errors.push_back("not radial: branch " + name + " closes a loop");
    else
      uf[rf] = rt;
    adj[static_cast<std::size_t>(f)].push_back(static_cast<std::size_t>(t));
    adj[static_cast<std::size_t>(t)].push_back(static_cast<std::size_t>(f));
  }

  const int slack = net.slack_index();
  if (slack >= 0) {
    std::vector<char> seen(n, 0);
    std::queue<std::size_t> q;
    q.push(static_cast<std::size_t>(slack));
    seen[static_cast<std::size_t>(slack)] = 1;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!seen[i]) errors.push_back("unreachable node " + net.nodes[i].id);
  }
  return errors;
}

FeederNetwork read_network(const std::filesystem::path& nodes_csv, const std::filesystem::path& branches_csv) {
  FeederNetwork net;
  const auto nodes = read_csv(nodes_csv);
  const int id = nodes.require_column("id");
  const int type = nodes.require_column("type");
  const int cluster = nodes.require_column("cluster");
  const int pmin = nodes.require_column("pv_kwp_min");
  const int pmax = nodes.require_column("pv_kwp_max");
  const int load = nodes.require_column("base_load_gwh");
  for (const auto& r : nodes.rows) {
    Node n;
    n.id = r[id];
    n.type = node_type_from_string(r[type]);
    n.cluster = r[cluster].empty() ? -1 : static_cast<int>(parse_int(r[cluster]));
    n.pv_kwp_min = parse_double(r[pmin]);
    n.pv_kwp_max = parse_double(r[pmax]);
    n.base_load_gwh = parse_double(r[load]);
    net.nodes.push_back(std::move(n));
  }
  const auto branches = read_csv(branches_csv);
  const int from = branches.require_column("from");
  const int to = branches.require_column("to");
  const int r_col = branches.require_column("r_ohm");
  const int x_col = branches.require_column("x_ohm");
  for (const auto& r : branches.rows)
    net.branches.push_back({r[from], r[to], parse_double(r[r_col]), parse_double(r[x_col])});
  return net;
}

RadialSolver::RadialSolver(const FeederNetwork& net, SolverOptions opts) : net_(net), opts_(opts) {
  const auto errors = validate_network(net);
  if (!errors.empty()) {
    std::string msg = "invalid network:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(msg);
  }
  const std::size_t n = net.nodes.size();
  slack_ = static_cast<std::size_t>(net.slack_index());
  std::vector<std::vector<std::pair<std::size_t, Complex>>> adj(n);
  const double zb = net.impedance_base_ohm();
  for (const auto& b : net.branches) {
    const auto f = static_cast<std::size_t>(net.index_of(b.from));
    const auto t = static_cast<std::size_t>(net.index_of(b.to));
    const Complex z(b.r_ohm / zb, b.x_ohm / zb);
    adj[f].emplace_back(t, z);
    adj[t].emplace_back(f, z);
  }
  parent_.assign(n, slack_);
  z_.assign(n, Complex(0.0, 0.0));
  std::vector<char> seen(n, 0);
  std::queue<std::size_t> q;
  q.push(slack_);
  seen[slack_] = 1;
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    order_.push_back(u);
    for (const auto& [v, z] : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        parent_[v] = u;
        z_[v] = z;
        q.push(v);
      }
  }
}

SnapshotResult RadialSolver::solve(std::span<const double> p_kw, std::span<const double> q_kvar) const {
  const std::vector<Complex> flat(node_count(), Complex(net_.slack_pu, 0.0));
  return solve(p_kw, q_kvar, flat);
}

SnapshotResult RadialSolver::solve(std::span<const double> p_kw, std::span<const double> q_kvar,
                                   std::span<const Complex> start) const {
  const std::size_t n = node_count();
  if (p_kw.size() != n || q_kvar.size() != n || start.size() != n)
    throw Error("injection vector length does not match the network");

  std::vector<Complex> s(n);
  const double kw_base = net_.base_mva * 1000.0;
  for (std::size_t i = 0; i < n; ++i) s[i] = Complex(p_kw[i] / kw_base, q_kvar[i] / kw_base);
  s[slack_] = 0.0;

  SnapshotResult r;
  r.voltage.assign(start.begin(), start.end());
  r.voltage[slack_] = Complex(net_.slack_pu, 0.0);
  std::vector<Complex> current(n);
  for (int it = 1; it <= opts_.max_iterations; ++it) {
    // Backward sweep: accumulate branch currents from the leaves.
    for (std::size_t i = 0; i < n; ++i) current[i] = std::conj(s[i] / r.voltage[i]);
    for (std::size_t k = order_.size(); k-- > 1;) {
      const auto b = order_[k];
      current[parent_[b]] += current[b];
    }
    // Forward sweep: update voltages from the slack outward.
    double max_change = 0.0;
    for (std::size_t k = 1; k < order_.size(); ++k) {
      const auto b = order_[k];
      const Complex v = r.voltage[parent_[b]] - z_[b] * current[b];
      max_change = std::max(max_change, std::abs(v - r.voltage[b]));
      r.voltage[b] = v;
    }
    r.iterations = it;
    if (!std::isfinite(max_change)) break;
    if (max_change < opts_.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

VoltageSlice simulate_scenario(const RadialSolver& solver, const Matrix& p_kw, const Matrix& q_kvar) {
  const std::size_t n = solver.node_count();
  if (p_kw.rows() != n || q_kvar.rows() != n || p_kw.cols() != q_kvar.cols())
    throw Error("scenario injections do not match the network");
  const std::size_t steps = p_kw.cols();
  VoltageSlice out;
  out.v = Matrix(n, steps);
  out.converged.assign(steps, 0);

  const double vs = solver.network().slack_pu;
  std::vector<Complex> start(n, Complex(vs, 0.0));
  std::vector<double> p(n), q(n);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < n; ++b) {
      p[b] = p_kw(b, t);
      q[b] = q_kvar(b, t);
    }
    auto snap = solver.solve(p, q, start);
    for (std::size_t b = 0; b < n; ++b) out.v(b, t) = std::abs(snap.voltage[b]);
    out.converged[t] = snap.converged ? 1 : 0;
    if (snap.converged) {
      start = std::move(snap.voltage);
    } else {
      ++out.nonconverged;
      std::fill(start.begin(), start.end(), Complex(vs, 0.0));
    }
  }
  return out;
}

}  // namespace pvhc::powerflow
