#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "surroflow/network.hpp"
#include "surroflow/scenario.hpp"

namespace surroflow::assign {

using network::RoadNetwork;

/// Origin and destination are indices into RoadNetwork::intersections().
struct Trip {
  std::size_t origin = 0;
  std::size_t destination = 0;
  double count = 0.0;

  friend bool operator==(const Trip&, const Trip&) = default;
};

/// OD table sorted by (origin, destination) with unique pairs.
struct DemandTable {
  std::vector<Trip> trips;

  [[nodiscard]] double total() const noexcept;
  friend bool operator==(const DemandTable&, const DemandTable&) = default;
};

/// Throws ValidationError if the table breaks its invariants for `net`.
void validate_demand(const RoadNetwork& net, const DemandTable& demand);

/// `agent_count` single-vehicle trips: uniform origins, destinations weighted by
/// sum over three attractors of exp(-d / 2000 m).
[[nodiscard]] DemandTable generate_demand(const RoadNetwork& net, int agent_count, std::uint64_t seed);

inline constexpr double kBprAlpha = 0.15;
inline constexpr double kBprBeta = 4.0;

/// t0 * (1 + 0.15 (v/c)^4); throws ParameterError for capacity <= 0.
[[nodiscard]] double bpr_travel_time(double free_flow_time, double volume, double capacity);

/// Per-segment volumes (aligned with net.segments()) when every OD loads onto its
/// shortest-time path. Ties go to the lexicographically smallest segment-id sequence.
[[nodiscard]] std::vector<double> all_or_nothing(const RoadNetwork& net, std::span<const double> times,
                                                 const DemandTable& demand);

struct IterationTrace {
  int iteration = 0;
  double relative_gap = 0.0;
  /// Trips loaded by this iteration's all-or-nothing step.
  double loaded_trips = 0.0;
  /// Largest |outflow - inflow - (productions - attractions)| over intersections, for the current iterate.
  double max_node_imbalance = 0.0;
};

struct AssignmentResult {
  std::vector<double> volumes;  // aligned with net.segments()
  double relative_gap = 0.0;
  int iterations = 0;
  std::vector<IterationTrace> trace;
};

struct MsaOptions {
  int max_iterations = 100;
  double gap_tolerance = 0.01;
  /// Multiplies every capacity inside the delay function, as when each trip
  /// stands for a sample of a larger population. Volumes stay in trips.
  double capacity_factor = 1.0;
};

/// Free-flow times with multiplicative seed noise in [0.95, 1.05].
[[nodiscard]] std::vector<double> perturbed_free_flow_times(const RoadNetwork& net, std::uint64_t seed);

[[nodiscard]] AssignmentResult msa_assignment(const RoadNetwork& net, const DemandTable& demand,
                                              const MsaOptions& options, std::uint64_t seed);

/// Seed-averaged assignment without any policy.
[[nodiscard]] AssignmentResult base_case(const RoadNetwork& net, const DemandTable& demand,
                                         std::span<const std::uint64_t> seeds,
                                         const MsaOptions& options = {}, unsigned threads = 1);

/// y_e = mean policy volume - base volume, aligned with net.segments().
struct TargetVector {
  std::vector<double> change;
};

[[nodiscard]] TargetVector simulate_scenario(const RoadNetwork& net, const scenario::Scenario& scn,
                                             const DemandTable& demand, const AssignmentResult& base,
                                             const MsaOptions& options = {}, unsigned threads = 1);

/// `origin,destination,trips` with intersection ids.
void save_demand(const RoadNetwork& net, const DemandTable& demand, const std::filesystem::path& path);
[[nodiscard]] DemandTable load_demand(const RoadNetwork& net, const std::filesystem::path& path);

/// Writes `segment_id,value` rows in network segment order.
void save_segment_values(const RoadNetwork& net, std::span<const double> values,
                         const std::filesystem::path& path);
/// Reads a `segment_id,value` file; every network segment must appear exactly once.
[[nodiscard]] std::vector<double> load_segment_values(const RoadNetwork& net,
                                                      const std::filesystem::path& path);

}  // namespace surroflow::assign
