// Hot paths of the pipeline: one power-flow day, the window statistics of a
// scenario slice and conditional profile sampling.

#include <random>

#include <benchmark/benchmark.h>

#include "pvhc/genflow.hpp"
#include "pvhc/powerflow.hpp"
#include "pvhc/riskmetrics.hpp"

namespace {

namespace pf = pvhc::powerflow;

// Slack plus a main line of `n` nodes with a lateral on every other node.
pf::FeederNetwork feeder(std::size_t n) {
  pf::FeederNetwork net;
  net.nodes.push_back({"N0", pf::NodeType::kSlack, -1, 0, 0, 0});
  for (std::size_t i = 1; i <= n; ++i) {
    net.nodes.push_back({"N" + std::to_string(i), pf::NodeType::kMixed, 0, 0, 300, 1.0});
    const std::size_t parent = i == 1 ? 0 : (i % 2 ? i - 2 : i - 1);
    net.branches.push_back({"N" + std::to_string(parent), "N" + std::to_string(i), 0.5, 0.35});
  }
  return net;
}

pvhc::Matrix random_field(std::size_t rows, std::size_t cols, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  pvhc::Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

void BM_SimulateDay(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const pf::RadialSolver solver(feeder(n));
  // Total feeder load stays near 3 MW whatever the node count.
  const double per_node = 3000.0 / static_cast<double>(n);
  auto p = random_field(n + 1, 96, -0.75 * per_node, per_node, 1);
  auto q = random_field(n + 1, 96, 0, 0.25 * per_node, 2);
  for (std::size_t t = 0; t < 96; ++t) p(0, t) = q(0, t) = 0.0;
  if (pf::simulate_scenario(solver, p, q).nonconverged > 0) state.SkipWithError("snapshots did not converge");
  for (auto _ : state) benchmark::DoNotOptimize(pf::simulate_scenario(solver, p, q));
  state.SetItemsProcessed(state.iterations() * 96);
}
BENCHMARK(BM_SimulateDay)->Arg(10)->Arg(50)->Arg(200);

void BM_PhiAll(benchmark::State& state) {
  const auto v = random_field(static_cast<std::size_t>(state.range(0)), 96, 0.95, 1.06, 3);
  const pvhc::risk::DurationGrid grid;
  for (auto _ : state) benchmark::DoNotOptimize(pvhc::risk::phi_all(v, grid));
}
BENCHMARK(BM_PhiAll)->Arg(11)->Arg(100);

void BM_SampleProfiles(benchmark::State& state) {
  auto model = pvhc::genflow::make_flow(96, {6, 64}, pvhc::RngStream(4));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (double& p : model.params) p = u(rng);
  model.label_min = 0.5;
  model.label_max = 3.0;
  const auto count = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pvhc::genflow::sample(model, 1.2, count, pvhc::RngStream(6)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleProfiles)->Arg(1)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
