#include <benchmark/benchmark.h>

#include "surroflow/assign.hpp"
#include "surroflow/dual.hpp"
#include "surroflow/scenario.hpp"

using namespace surroflow;

namespace {

void BM_AllOrNothing(benchmark::State& state) {
  const auto grid = static_cast<int>(state.range(0));
  const auto net = network::generate_synthetic_city(grid, 8, 0);
  const auto demand = assign::generate_demand(net, 2000, 0);
  const auto times = assign::perturbed_free_flow_times(net, 0);
  for (auto _ : state) benchmark::DoNotOptimize(assign::all_or_nothing(net, times, demand));
  state.SetLabel(std::to_string(net.segment_count()) + " segments");
}
BENCHMARK(BM_AllOrNothing)->Arg(10)->Arg(20)->Unit(benchmark::kMicrosecond);

void BM_Msa(benchmark::State& state) {
  const auto net = network::generate_synthetic_city(10, 8, 0);
  const auto demand = assign::generate_demand(net, 2000, 0);
  const assign::MsaOptions opt{static_cast<int>(state.range(0)), 1e-12, 0.05};
  for (auto _ : state) benchmark::DoNotOptimize(assign::msa_assignment(net, demand, opt, 0));
}
BENCHMARK(BM_Msa)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_SimulateScenario(benchmark::State& state) {
  const auto net = network::generate_synthetic_city(10, 8, 0);
  const auto demand = assign::generate_demand(net, 2000, 0);
  const assign::MsaOptions opt{100, 0.01, 0.05};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto base = assign::base_case(net, demand, seeds, opt);
  const scenario::Scenario scn{"bench", scenario::build_policy({0, 3}), {11, 12, 13}};
  for (auto _ : state) benchmark::DoNotOptimize(assign::simulate_scenario(net, scn, demand, base, opt));
}
BENCHMARK(BM_SimulateScenario)->Unit(benchmark::kMillisecond);

void BM_ToDual(benchmark::State& state) {
  const auto net = network::generate_synthetic_city(static_cast<int>(state.range(0)), 8, 0);
  for (auto _ : state) benchmark::DoNotOptimize(dual::to_dual(net));
}
BENCHMARK(BM_ToDual)->Arg(10)->Arg(30)->Unit(benchmark::kMicrosecond);

}  // namespace
