#include <benchmark/benchmark.h>

#include <random>

#include "surroflow/dual.hpp"
#include "surroflow/gnn.hpp"
#include "surroflow/network.hpp"
#include "surroflow/scenario.hpp"

using namespace surroflow;

namespace {

struct Fixture {
  gnn::MessageGraph graph;
  dual::FeatureMatrix raw;
  dual::FeatureMatrix features;
  gnn::SurrogateModel model{gnn::ModelConfig{}};
};

Fixture make_fixture(int grid) {
  const auto net = network::generate_synthetic_city(grid, 8, 0);
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(0.0, 200.0);
  std::vector<double> base(net.segment_count());
  for (double& v : base) v = u(rng);
  Fixture f{gnn::make_message_graph(dual::to_dual(net)), dual::build_features(net, scenario::build_policy({1, 2}), base),
            {}};
  const std::vector<dual::FeatureMatrix> set{f.raw};
  f.model.standardizer = dual::fit_standardizer(set);
  f.features = dual::apply_standardizer(f.raw, f.model.standardizer);
  return f;
}

void BM_Forward(benchmark::State& state) {
  const auto f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gnn::forward(f.model, f.graph, f.features));
  state.SetLabel(std::to_string(f.graph.nodes) + " dual nodes");
}
BENCHMARK(BM_Forward)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_Infer(benchmark::State& state) {
  const auto f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gnn::infer(f.model, f.graph, f.features));
  state.SetLabel(std::to_string(f.graph.nodes) + " dual nodes");
}
BENCHMARK(BM_Infer)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const auto f = make_fixture(10);
  for (auto _ : state) benchmark::DoNotOptimize(gnn::predict(f.model, f.graph, f.raw));
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto f = make_fixture(10);
  auto params = f.model.parameters();
  auto adam_state = ad::AdamState::zeros_like(params);
  const Matrix target(f.graph.nodes, 1, 0.5);
  long step = 0;
  for (auto _ : state) {
    ad::Tape tape;
    const auto loss = ad::mse(tape, gnn::forward_scaled(tape, f.model, f.graph, f.features), target);
    for (auto& p : params) p.zero_grad();
    tape.backward(loss);
    ad::adam_step(params, adam_state, {}, ++step);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
