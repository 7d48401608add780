#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surroflow/network.hpp"

namespace surroflow::eval {

enum class Subset { All, Trunk, Primary, Secondary, Tertiary, PolicyRoads, NonPolicyRoads };

inline constexpr Subset kAllSubsets[] = {Subset::All,       Subset::Trunk,       Subset::Primary,
                                         Subset::Secondary, Subset::Tertiary,    Subset::PolicyRoads,
                                         Subset::NonPolicyRoads};

/// Machine name used in CSV output, e.g. "PolicyRoads".
[[nodiscard]] std::string_view subset_name(Subset s) noexcept;
/// Row label in the text report, e.g. "Roads with policy in place".
[[nodiscard]] std::string_view subset_label(Subset s) noexcept;

/// MSE of the constant subset-mean predictor (population variance of y).
[[nodiscard]] double naive_mse(std::span<const double> y);
[[nodiscard]] double predicted_mse(std::span<const double> y, std::span<const double> y_hat);
/// 1 - SS_res / SS_tot about the subset mean. Throws UndefinedMetricError for constant y.
[[nodiscard]] double r_squared(std::span<const double> y, std::span<const double> y_hat);
/// 1 - predicted / naive, for reports that only publish the two MSEs.
[[nodiscard]] double r_squared_from_mse(double predicted, double naive);

struct SubsetRow {
  Subset subset = Subset::All;
  double r_squared = 0.0;  // NaN when y is constant on the subset
  double naive_mse = 0.0;
  double predicted_mse = 0.0;
  std::size_t node_count = 0;
};

struct SubsetReport {
  std::vector<SubsetRow> rows;
  /// Subsets with no nodes; they have no row.
  std::vector<Subset> omitted;

  [[nodiscard]] const SubsetRow* find(Subset s) const noexcept;
};

/// Metrics per road subset with subset-local means. Inputs are aligned per node.
[[nodiscard]] SubsetReport subset_report(std::span<const double> y, std::span<const double> y_hat,
                                         std::span<const network::RoadClass> classes,
                                         const std::vector<bool>& policy_mask);

/// `subset,r2,naive_mse,predicted_mse,n`
[[nodiscard]] std::string report_csv(const SubsetReport& report);
/// Fixed-width table in the layout of the classic road-type results table.
[[nodiscard]] std::string report_text(const SubsetReport& report);

struct ScenarioMetrics {
  std::string id;
  double predicted_mse = 0.0;
  double naive_mse = 0.0;
  double r_squared = 0.0;
  std::size_t node_count = 0;
};

[[nodiscard]] ScenarioMetrics scenario_metrics(std::string id, std::span<const double> y,
                                               std::span<const double> y_hat);
/// `scenario,r2,naive_mse,predicted_mse,n`
[[nodiscard]] std::string scenario_metrics_csv(std::span<const ScenarioMetrics> rows);

}  // namespace surroflow::eval
