#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surroflow/eval.hpp"
#include "surroflow/gnn.hpp"
#include "surroflow/scenario.hpp"

/// End-to-end experiment stages. Every stage reads its inputs from and writes its
/// artifacts to RunConfig::output_dir, and records itself in manifest.json.
namespace surroflow::pipeline {

struct NetworkSettings {
  int grid_size = 10;
  int district_count = 8;
  std::uint64_t seed = 0;
};

struct DemandSettings {
  int agents = 2000;
  std::uint64_t seed = 0;
};

struct OracleSettings {
  int base_seeds = 10;
  int max_iterations = 100;
  double gap_tolerance = 0.01;
  /// Capacity multiplier inside the delay function; see assign::MsaOptions.
  double capacity_factor = 0.05;
  /// Worker threads for scenario fan-out; 0 means one per hardware thread.
  unsigned threads = 0;
};

struct SplitSettings {
  std::array<double, 3> ratios{0.8, 0.15, 0.05};
  std::uint64_t seed = 0;
};

struct RunConfig {
  NetworkSettings network;
  DemandSettings demand;
  scenario::ScenarioSamplerConfig scenarios;
  OracleSettings oracle;
  gnn::ModelConfig model;
  SplitSettings split;
  std::filesystem::path output_dir = "run";

  /// Full-scale counts: 20 districts, 10,000 scenarios, 50 base seeds.
  [[nodiscard]] static RunConfig full_scale();
};

/// Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] RunConfig config_from_json(std::string_view text);
[[nodiscard]] std::string config_to_json(const RunConfig& config);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);
/// Throws ParameterError for out-of-range settings.
void validate(const RunConfig& config);

/// Artifact locations inside an output directory.
struct Layout {
  std::filesystem::path root;

  [[nodiscard]] std::filesystem::path network() const { return root / "network.json"; }
  [[nodiscard]] std::filesystem::path demand() const { return root / "demand.csv"; }
  [[nodiscard]] std::filesystem::path scenarios() const { return root / "scenarios.json"; }
  [[nodiscard]] std::filesystem::path base_volumes() const { return root / "base_volumes.csv"; }
  [[nodiscard]] std::filesystem::path target(const std::string& id) const { return root / "targets" / (id + ".csv"); }
  [[nodiscard]] std::filesystem::path topology() const { return root / "dual_edges.csv"; }
  [[nodiscard]] std::filesystem::path sample(const std::string& id) const { return root / "samples" / (id + ".csv"); }
  [[nodiscard]] std::filesystem::path split() const { return root / "split.json"; }
  [[nodiscard]] std::filesystem::path checkpoint() const { return root / "model.ckpt"; }
  [[nodiscard]] std::filesystem::path model_sidecar() const { return root / "model.json"; }
  [[nodiscard]] std::filesystem::path history() const { return root / "history.csv"; }
  [[nodiscard]] std::filesystem::path report_csv() const { return root / "report.csv"; }
  [[nodiscard]] std::filesystem::path report_text() const { return root / "report.txt"; }
  [[nodiscard]] std::filesystem::path scenario_metrics() const { return root / "per_scenario.csv"; }
  [[nodiscard]] std::filesystem::path prediction(const std::string& id) const {
    return root / "predictions" / (id + ".csv");
  }
  [[nodiscard]] std::filesystem::path map(const std::string& id, const std::string& kind) const {
    return root / "maps" / (id + "_" + kind + ".geojson");
  }
  [[nodiscard]] std::filesystem::path manifest() const { return root / "manifest.json"; }
};

void gen_network(const RunConfig& config);
void gen_demand(const RunConfig& config);
void gen_scenarios(const RunConfig& config);

struct SimulateSummary {
  std::size_t scenarios = 0;
  double base_seconds = 0.0;
  double scenario_seconds = 0.0;  // total over scenarios
};
SimulateSummary simulate(const RunConfig& config);

void build_dataset(const RunConfig& config);

gnn::TrainingHistory train(const RunConfig& config, const gnn::EpochCallback& on_epoch = {});

struct Evaluation {
  eval::SubsetReport report;
  std::vector<eval::ScenarioMetrics> per_scenario;
};
Evaluation evaluate(const RunConfig& config);

struct PredictionSummary {
  eval::ScenarioMetrics metrics;
  double seconds = 0.0;
};
/// Predicts the given scenarios (all test scenarios when empty).
std::vector<PredictionSummary> predict(const RunConfig& config, const std::vector<std::string>& scenario_ids);

/// Writes maps/<id>_actual.geojson and, when a trained model exists, maps/<id>_predicted.geojson.
std::vector<std::filesystem::path> export_maps(const RunConfig& config, const std::string& scenario_id);

/// Every stage from gen-network through evaluate.
Evaluation run_all(const RunConfig& config, const gnn::EpochCallback& on_epoch = {});

}  // namespace surroflow::pipeline
