#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "surroflow/matrix.hpp"
#include "surroflow/network.hpp"
#include "surroflow/scenario.hpp"

namespace surroflow::dual {

using network::RoadNetwork;

/// Line graph of the primal network: one node per segment (sorted by segment id),
/// an edge a -> b whenever b continues a, except the exact reversal of a.
struct DualGraph {
  std::vector<std::string> node_ids;
  /// Index into RoadNetwork::segments() for every dual node.
  std::vector<std::size_t> segment_of_node;
  /// (source node, target node), sorted.
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  [[nodiscard]] std::size_t node_count() const noexcept { return node_ids.size(); }
  friend bool operator==(const DualGraph&, const DualGraph&) = default;
};

[[nodiscard]] DualGraph to_dual(const RoadNetwork& net);

inline constexpr std::size_t kStaticWidth = 4;      // base volume, capacity, speed limit, length
inline constexpr std::size_t kPositionalWidth = 4;  // start x, start y, end x, end y
inline constexpr std::size_t kVariableWidth = 1;    // applied capacity reduction
inline constexpr std::size_t kFeatureWidth = kStaticWidth + kPositionalWidth + kVariableWidth;

struct FeatureMatrix {
  Matrix statics;     // n x 4
  Matrix positional;  // n x 4
  Matrix variable;    // n x 1
  bool standardized = false;

  [[nodiscard]] std::size_t rows() const noexcept { return statics.rows(); }
  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

/// Rows in canonical dual-node order. Static capacity is the base-case (untreated) capacity.
[[nodiscard]] FeatureMatrix build_features(const RoadNetwork& net, const scenario::Policy& policy,
                                           std::span<const double> base_volumes);

/// Per-segment policy mask in canonical dual-node order.
[[nodiscard]] std::vector<bool> treated_mask(const RoadNetwork& net, const scenario::Policy& policy);

struct ColumnStats {
  double mean = 0.0;
  double std = 1.0;

  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

/// z-score parameters. Positional columns share one mean/std per axis.
struct Standardizer {
  std::array<ColumnStats, kStaticWidth> statics;
  ColumnStats pos_x;
  ColumnStats pos_y;
  ColumnStats variable;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

/// Population statistics over all rows of the given (training) matrices. A column
/// with zero variance keeps std = 1, so it is only centered.
[[nodiscard]] Standardizer fit_standardizer(std::span<const FeatureMatrix> training);
[[nodiscard]] FeatureMatrix apply_standardizer(const FeatureMatrix& features, const Standardizer& s);

/// `segment_id,static_0..3,pos_0..3,var_0,y`
void save_sample(const std::filesystem::path& path, const DualGraph& graph, const FeatureMatrix& features,
                 std::span<const double> targets);

struct Sample {
  std::vector<std::string> node_ids;
  FeatureMatrix features;
  std::vector<double> targets;
};
[[nodiscard]] Sample load_sample(const std::filesystem::path& path);

/// `src_segment,dst_segment`
void save_topology(const std::filesystem::path& path, const DualGraph& graph);
/// Reads an edge list whose node ids are the segments of `net`.
[[nodiscard]] DualGraph load_topology(const std::filesystem::path& path, const RoadNetwork& net);

}  // namespace surroflow::dual
