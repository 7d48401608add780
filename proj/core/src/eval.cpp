#include "surroflow/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"

namespace surroflow::eval {

std::string_view subset_name(Subset s) noexcept {
  switch (s) {
    case Subset::All: return "All";
    case Subset::Trunk: return "Trunk";
    case Subset::Primary: return "Primary";
    case Subset::Secondary: return "Secondary";
    case Subset::Tertiary: return "Tertiary";
    case Subset::PolicyRoads: return "PolicyRoads";
    case Subset::NonPolicyRoads: return "NonPolicyRoads";
  }
  return "All";
}

std::string_view subset_label(Subset s) noexcept {
  switch (s) {
    case Subset::All: return "All roads";
    case Subset::Trunk: return "Trunk roads";
    case Subset::Primary: return "Primary roads";
    case Subset::Secondary: return "Secondary roads";
    case Subset::Tertiary: return "Tertiary roads";
    case Subset::PolicyRoads: return "Roads with policy in place";
    case Subset::NonPolicyRoads: return "Roads without policy in place";
  }
  return "All roads";
}

namespace {

double mean_of(std::span<const double> y) {
  double s = 0.0;
  for (double v : y) s += v;
  return s / static_cast<double>(y.size());
}

double sum_sq_about_mean(std::span<const double> y) {
  const double m = mean_of(y);
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  return ss;
}

double sum_sq_residual(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size())
    throw ShapeError("metric inputs differ in length: " + std::to_string(y.size()) + " vs " +
                     std::to_string(y_hat.size()));
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return ss;
}

}  // namespace

double naive_mse(std::span<const double> y) {
  if (y.empty()) throw ParameterError("naive_mse on an empty subset");
  return sum_sq_about_mean(y) / static_cast<double>(y.size());
}

double predicted_mse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.empty()) throw ParameterError("predicted_mse on an empty subset");
  return sum_sq_residual(y, y_hat) / static_cast<double>(y.size());
}

double r_squared(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() < 2) throw ParameterError("r_squared needs at least 2 values");
  const double total = sum_sq_about_mean(y);
  const double residual = sum_sq_residual(y, y_hat);
  if (!(total > 0.0)) throw UndefinedMetricError("r_squared is undefined for constant targets");
  return 1.0 - residual / total;
}

double r_squared_from_mse(double predicted, double naive) {
  if (!(naive > 0.0)) throw UndefinedMetricError("r_squared is undefined when the naive MSE is zero");
  return 1.0 - predicted / naive;
}

const SubsetRow* SubsetReport::find(Subset s) const noexcept {
  for (const auto& r : rows)
    if (r.subset == s) return &r;
  return nullptr;
}

namespace {

bool member(Subset s, network::RoadClass c, bool treated) {
  using network::RoadClass;
  switch (s) {
    case Subset::All: return true;
    case Subset::Trunk: return c == RoadClass::Trunk;
    case Subset::Primary: return c == RoadClass::Primary;
    case Subset::Secondary: return c == RoadClass::Secondary;
    case Subset::Tertiary: return c == RoadClass::Tertiary;
    case Subset::PolicyRoads: return treated;
    case Subset::NonPolicyRoads: return !treated;
  }
  return false;
}

}  // namespace

SubsetReport subset_report(std::span<const double> y, std::span<const double> y_hat,
                           std::span<const network::RoadClass> classes, const std::vector<bool>& policy_mask) {
  const std::size_t n = y.size();
  if (y_hat.size() != n || classes.size() != n || policy_mask.size() != n)
    throw ShapeError("subset_report: inputs are not aligned (" + std::to_string(n) + " targets, " +
                     std::to_string(y_hat.size()) + " predictions, " + std::to_string(classes.size()) + " classes, " +
                     std::to_string(policy_mask.size()) + " mask entries)");
  SubsetReport report;
  std::vector<double> ys, yh;
  for (Subset s : kAllSubsets) {
    ys.clear();
    yh.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (!member(s, classes[i], policy_mask[i])) continue;
      ys.push_back(y[i]);
      yh.push_back(y_hat[i]);
    }
    if (ys.empty()) {
      report.omitted.push_back(s);
      continue;
    }
    SubsetRow row;
    row.subset = s;
    row.node_count = ys.size();
    row.naive_mse = naive_mse(ys);
    row.predicted_mse = predicted_mse(ys, yh);
    row.r_squared = row.naive_mse > 0.0 ? 1.0 - row.predicted_mse / row.naive_mse
                                        : std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }
  return report;
}

namespace {
std::string num(double v) { return std::isnan(v) ? "nan" : io::format_double(v); }
}  // namespace

std::string report_csv(const SubsetReport& report) {
  std::string out = "subset,r2,naive_mse,predicted_mse,n\n";
  for (const auto& r : report.rows)
    out += std::string(subset_name(r.subset)) + "," + num(r.r_squared) + "," + num(r.naive_mse) + "," +
           num(r.predicted_mse) + "," + std::to_string(r.node_count) + "\n";
  return out;
}

std::string report_text(const SubsetReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-31s %8s %12s %14s %9s\n", "Road subset", "R^2", "Naive MSE", "Predicted MSE", "n");
  out += line;
  out += std::string(78, '-') + "\n";
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "%-31s %8.2f %12.2f %14.2f %9zu\n", std::string(subset_label(r.subset)).c_str(),
                  r.r_squared, r.naive_mse, r.predicted_mse, r.node_count);
    out += line;
  }
  for (Subset s : report.omitted) out += "(no nodes: " + std::string(subset_label(s)) + ")\n";
  return out;
}

ScenarioMetrics scenario_metrics(std::string id, std::span<const double> y, std::span<const double> y_hat) {
  ScenarioMetrics m;
  m.id = std::move(id);
  m.node_count = y.size();
  m.naive_mse = naive_mse(y);
  m.predicted_mse = predicted_mse(y, y_hat);
  m.r_squared = m.naive_mse > 0.0 ? 1.0 - m.predicted_mse / m.naive_mse : std::numeric_limits<double>::quiet_NaN();
  return m;
}

std::string scenario_metrics_csv(std::span<const ScenarioMetrics> rows) {
  std::string out = "scenario,r2,naive_mse,predicted_mse,n\n";
  for (const auto& m : rows)
    out += m.id + "," + num(m.r_squared) + "," + num(m.naive_mse) + "," + num(m.predicted_mse) + "," +
           std::to_string(m.node_count) + "\n";
  return out;
}

}  // namespace surroflow::eval
