#include "pvhc/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "pvhc/tensor_io.hpp"

namespace pvhc::scenario {

GrowthFunction linear_growth() {
  return [](double x) { return x; };
}

double GrowthSchedule::gamma_at(int l) const {
  if (l < 0 || l > steps) throw Error("planning step " + std::to_string(l) + " outside [0, " + std::to_string(steps) + "]");
  return gamma(static_cast<double>(l) / static_cast<double>(steps));
}

void GrowthSchedule::validate() const {
  if (steps < 1) throw Error("growth schedule needs at least one planning step");
  if (!gamma) throw Error("growth function is not set");
  if (gamma(0.0) != 0.0 || gamma(1.0) != 1.0) throw Error("growth function must map 0 to 0 and 1 to 1");
  double prev = 0.0;
  for (int l = 1; l <= steps; ++l) {
    const double g = gamma_at(l);
    if (g < prev) throw Error("growth function must be non-decreasing");
    prev = g;
  }
  for (const auto& [k, b] : cluster_energy_gwh)
    if (!(b.min > 0.0) || b.max < b.min)
      throw Error("invalid energy bounds for cluster " + std::to_string(k));
  for (std::size_t i = 0; i < node_pv_kwp.size(); ++i)
    if (node_pv_kwp[i].min < 0.0 || node_pv_kwp[i].max < node_pv_kwp[i].min)
      throw Error("invalid PV bounds for node index " + std::to_string(i));
}

double growth_level(double w_min, double w_max, int l, int L, const GrowthFunction& gamma) {
  if (L < 1) throw Error("planning horizon must have at least one step");
  if (l < 0 || l > L) throw Error("planning step " + std::to_string(l) + " outside [0, " + std::to_string(L) + "]");
  return w_min + gamma(static_cast<double>(l) / static_cast<double>(L)) * (w_max - w_min);
}

double pv_capacity_at(const GrowthSchedule& schedule, std::size_t node, int l) {
  const auto& b = schedule.node_pv_kwp.at(node);
  return growth_level(b.min, b.max, l, schedule.steps, schedule.gamma);
}

double total_pv_capacity(const GrowthSchedule& schedule, int l) {
  double c = 0.0;
  for (std::size_t b = 0; b < schedule.node_pv_kwp.size(); ++b) c += pv_capacity_at(schedule, b, l);
  return c;
}

double total_energy(const GrowthSchedule& schedule, int l) {
  double w = 0.0;
  for (const auto& [k, b] : schedule.cluster_energy_gwh) w += growth_level(b.min, b.max, l, schedule.steps, schedule.gamma);
  return w;
}

GrowthSchedule schedule_from_network(const powerflow::FeederNetwork& net, int steps, double energy_max_factor,
                                     GrowthFunction gamma) {
  if (!(energy_max_factor >= 1.0)) throw Error("energy growth factor must be at least 1");
  GrowthSchedule s;
  s.steps = steps;
  s.gamma = std::move(gamma);
  for (const auto& n : net.nodes) {
    if (n.has_load()) {
      auto& b = s.cluster_energy_gwh[n.cluster];
      b.min += n.base_load_gwh;
    }
    s.node_pv_kwp.push_back(n.has_pv() ? Bounds{n.pv_kwp_min, n.pv_kwp_max} : Bounds{});
  }
  for (auto& [k, b] : s.cluster_energy_gwh) b.max = b.min * energy_max_factor;
  return s;
}

void ScenarioSet::check_identities() const {
  const double k = genflow::reactive_factor(power_factor);
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    if (scenarios[s].size() != node_ids.size()) throw Error("scenario " + std::to_string(s) + " does not cover every node");
    for (std::size_t b = 0; b < scenarios[s].size(); ++b) {
      const auto& inj = scenarios[s][b];
      const std::size_t T = inj.p.size();
      if (inj.q.size() != T || inj.load_p.size() != T || inj.pv_p.size() != T)
        throw Error("inconsistent profile lengths at node " + node_ids[b]);
      for (std::size_t t = 0; t < T; ++t) {
        if (inj.p[t] != inj.load_p[t] - inj.pv_p[t])
          throw Error("net injection identity violated at node " + node_ids[b] + ", scenario " + std::to_string(s));
        if (inj.q[t] != inj.load_p[t] * k)
          throw Error("reactive power identity violated at node " + node_ids[b] + ", scenario " + std::to_string(s));
      }
    }
  }
}

ScenarioBuilder::ScenarioBuilder(const powerflow::FeederNetwork& net, std::map<int, genflow::FlowModel> models,
                                 irradiance::IrradianceLibrary library, GrowthSchedule energy, GrowthSchedule pv,
                                 double power_factor, RngStream stream)
    : net_(net),
      models_(std::move(models)),
      library_(std::move(library)),
      energy_(std::move(energy)),
      pv_(std::move(pv)),
      pf_(power_factor),
      q_factor_(genflow::reactive_factor(power_factor)),
      stream_(std::move(stream)) {
  energy_.validate();
  pv_.validate();
  library_.validate();
  if (pv_.node_pv_kwp.size() != net_.nodes.size()) throw Error("PV schedule does not match the network nodes");
  steps_ = library_.steps_per_day();

  std::string missing;
  std::map<int, double> cluster_base;
  for (std::size_t i = 0; i < net_.nodes.size(); ++i) {
    const auto& n = net_.nodes[i];
    if (n.has_load()) {
      if (!models_.count(n.cluster) || !energy_.cluster_energy_gwh.count(n.cluster)) {
        missing += (missing.empty() ? "" : ", ") + n.id;
        continue;
      }
      if (!(n.base_load_gwh > 0.0)) throw Error("load node " + n.id + " has no base-year energy");
      if (models_.at(n.cluster).dim != steps_)
        throw Error("model for cluster " + std::to_string(n.cluster) + " does not match the irradiance day length");
      load_nodes_.push_back(i);
      cluster_base[n.cluster] += n.base_load_gwh;
    }
    if (n.has_load() || n.has_pv()) covered_.push_back(i);
  }
  if (!missing.empty()) throw Error("no trained model for load nodes: " + missing);

  share_.assign(net_.nodes.size(), 0.0);
  for (auto i : load_nodes_) share_[i] = net_.nodes[i].base_load_gwh / cluster_base.at(net_.nodes[i].cluster);
}

double ScenarioBuilder::node_energy_target(std::size_t node, int energy_step) const {
  const auto& n = net_.nodes.at(node);
  const auto& b = energy_.cluster_energy_gwh.at(n.cluster);
  return share_[node] * growth_level(b.min, b.max, energy_step, energy_.steps, energy_.gamma);
}

LoadDraws ScenarioBuilder::draw_loads(int energy_step, std::size_t scenarios) const {
  LoadDraws out;
  out.energy_step = energy_step;
  out.profiles.assign(scenarios, std::vector<std::vector<double>>(load_nodes_.size()));
  std::vector<double> target(load_nodes_.size());
  for (std::size_t j = 0; j < load_nodes_.size(); ++j) target[j] = node_energy_target(load_nodes_[j], energy_step);

  const auto e = static_cast<std::uint64_t>(energy_step);
  for (std::size_t s = 0; s < scenarios; ++s) {
    for (std::size_t j = 0; j < load_nodes_.size(); ++j) {
      const auto node = load_nodes_[j];
      const auto& model = models_.at(net_.nodes[node].cluster);
      const auto stream = stream_.child({tag(StreamTag::kLoad), e, s, node});
      auto res = genflow::sample(model, target[j], 1, stream);
      out.clipping_warnings += res.clipping_flag ? 1 : 0;
      out.condition_warnings += res.condition_out_of_range ? 1 : 0;
      out.profiles[s][j] = std::move(res.profiles.front());
    }
  }
  return out;
}

std::size_t ScenarioBuilder::draw_irradiance_day(std::size_t scenario) const {
  return irradiance::bootstrap_sample(library_, stream_.child({tag(StreamTag::kIrradiance), scenario})).day;
}

std::vector<std::size_t> ScenarioBuilder::draw_irradiance_days(std::size_t scenarios) const {
  std::vector<std::size_t> days(scenarios);
  for (std::size_t s = 0; s < scenarios; ++s) days[s] = draw_irradiance_day(s);
  return days;
}

ScenarioSet ScenarioBuilder::assemble(const LoadDraws& loads, std::span<const std::size_t> irradiance_days,
                                      int pv_step) const {
  const std::size_t S = loads.profiles.size();
  if (irradiance_days.size() != S) throw Error("one irradiance day is needed per scenario");
  ScenarioSet set;
  set.energy_step = loads.energy_step;
  set.pv_step = pv_step;
  set.steps_per_day = steps_;
  set.power_factor = pf_;
  set.master_seed = stream_.master_seed();
  set.irradiance_days.assign(irradiance_days.begin(), irradiance_days.end());
  set.clipping_warnings = loads.clipping_warnings;
  set.condition_warnings = loads.condition_warnings;
  for (auto i : covered_) {
    set.node_ids.push_back(net_.nodes[i].id);
    set.node_index.push_back(i);
  }

  std::vector<double> capacity(covered_.size(), 0.0);
  std::vector<int> load_slot(covered_.size(), -1);
  for (std::size_t c = 0; c < covered_.size(); ++c) {
    const auto node = covered_[c];
    if (net_.nodes[node].has_pv()) capacity[c] = pv_capacity_at(pv_, node, pv_step);
    const auto it = std::find(load_nodes_.begin(), load_nodes_.end(), node);
    if (it != load_nodes_.end()) load_slot[c] = static_cast<int>(it - load_nodes_.begin());
  }

  set.scenarios.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const auto& ghi = library_.days.at(irradiance_days[s]);
    auto& nodes = set.scenarios[s];
    nodes.resize(covered_.size());
    for (std::size_t c = 0; c < covered_.size(); ++c) {
      auto& inj = nodes[c];
      inj.load_p = load_slot[c] >= 0 ? loads.profiles[s].at(static_cast<std::size_t>(load_slot[c]))
                                     : std::vector<double>(steps_, 0.0);
      inj.pv_p = capacity[c] > 0.0 ? irradiance::pv_power(ghi, capacity[c]) : std::vector<double>(steps_, 0.0);
      inj.p.resize(steps_);
      inj.q.resize(steps_);
      for (std::size_t t = 0; t < steps_; ++t) {
        inj.p[t] = inj.load_p[t] - inj.pv_p[t];
        inj.q[t] = inj.load_p[t] * q_factor_;
      }
    }
  }
  return set;
}

ScenarioSet ScenarioBuilder::build(int energy_step, int pv_step, std::size_t scenarios) const {
  if (scenarios < 1) throw Error("at least one scenario per cell is required");
  const auto loads = draw_loads(energy_step, scenarios);
  const auto days = draw_irradiance_days(scenarios);
  return assemble(loads, days, pv_step);
}

std::pair<Matrix, Matrix> ScenarioBuilder::injection_matrices(const ScenarioSet& set, std::size_t scenario) const {
  const std::size_t n = net_.nodes.size();
  Matrix p(n, set.steps_per_day), q(n, set.steps_per_day);
  const auto& nodes = set.scenarios.at(scenario);
  for (std::size_t c = 0; c < nodes.size(); ++c) {
    const auto node = set.node_index[c];
    std::copy(nodes[c].p.begin(), nodes[c].p.end(), p.row(node).begin());
    std::copy(nodes[c].q.begin(), nodes[c].q.end(), q.row(node).begin());
  }
  return {std::move(p), std::move(q)};
}

void write_scenario_set(const ScenarioSet& set, const std::filesystem::path& path) {
  const std::size_t S = set.scenarios.size();
  const std::size_t B = set.node_ids.size();
  const std::size_t T = set.steps_per_day;
  Tensor tensor;
  tensor.dims = {S, B, 4, T};
  tensor.data.reserve(tensor.size());
  for (const auto& sc : set.scenarios)
    for (const auto& inj : sc)
      for (const auto* v : {&inj.p, &inj.q, &inj.load_p, &inj.pv_p}) tensor.data.insert(tensor.data.end(), v->begin(), v->end());
  if (tensor.data.size() != tensor.size()) throw Error("scenario set has inconsistent dimensions");

  nlohmann::json j;
  j["kind"] = "scenario_set";
  j["components"] = {"p_kw", "q_kvar", "load_kw", "pv_kw"};
  j["energy_step"] = set.energy_step;
  j["pv_step"] = set.pv_step;
  j["power_factor"] = set.power_factor;
  j["master_seed"] = set.master_seed;
  j["node_ids"] = set.node_ids;
  j["node_index"] = set.node_index;
  j["irradiance_days"] = set.irradiance_days;
  j["clipping_warnings"] = set.clipping_warnings;
  j["condition_warnings"] = set.condition_warnings;
  j["stream_paths"] = {"load: [4, energy_step, scenario, node]", "irradiance: [5, scenario]"};
  write_tensor(path, tensor, j.dump());
}

ScenarioSet read_scenario_set(const std::filesystem::path& path) {
  const auto tensor = read_tensor(path);
  const auto j = nlohmann::json::parse(read_sidecar(path));
  if (tensor.dims.size() != 4 || tensor.dims[2] != 4) throw Error("not a scenario-set tensor: " + path.string());
  ScenarioSet set;
  set.energy_step = j.at("energy_step").get<int>();
  set.pv_step = j.at("pv_step").get<int>();
  set.power_factor = j.at("power_factor").get<double>();
  set.master_seed = j.at("master_seed").get<std::uint64_t>();
  set.node_ids = j.at("node_ids").get<std::vector<std::string>>();
  set.node_index = j.at("node_index").get<std::vector<std::size_t>>();
  set.irradiance_days = j.at("irradiance_days").get<std::vector<std::size_t>>();
  set.clipping_warnings = j.value("clipping_warnings", std::size_t{0});
  set.condition_warnings = j.value("condition_warnings", std::size_t{0});
  const std::size_t S = tensor.dims[0], B = tensor.dims[1], T = tensor.dims[3];
  if (set.node_ids.size() != B || set.node_index.size() != B) throw Error("scenario sidecar does not match tensor dims");
  set.steps_per_day = T;
  set.scenarios.assign(S, std::vector<NodalInjection>(B));
  auto it = tensor.data.begin();
  for (auto& sc : set.scenarios)
    for (auto& inj : sc)
      for (auto* v : {&inj.p, &inj.q, &inj.load_p, &inj.pv_p}) {
        v->assign(it, it + static_cast<std::ptrdiff_t>(T));
        it += static_cast<std::ptrdiff_t>(T);
      }
  set.check_identities();
  return set;
}

}  // namespace pvhc::scenario
