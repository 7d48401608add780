#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "surroflow/network.hpp"

namespace surroflow::scenario {

using network::RoadClass;
using network::RoadNetwork;

inline constexpr double kDefaultReduction = 0.5;
inline constexpr double kDefaultMeanSize = 5.0;
inline constexpr double kDefaultSdSize = 2.0;
/// Capacity given to a fully closed road so the delay function stays defined.
inline constexpr double kClosedCapacity = 1.0;

[[nodiscard]] std::set<RoadClass> default_affected_classes();

/// Capacity reduction applied to some road classes inside a set of districts.
struct Policy {
  std::set<int> districts;
  double reduction = kDefaultReduction;
  std::set<RoadClass> affected_classes;

  friend bool operator==(const Policy&, const Policy&) = default;
};

struct Scenario {
  std::string id;
  Policy policy;
  std::vector<std::uint64_t> seeds;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Combination size for a raw normal draw: round half away from zero, clamp to [1, district_count].
[[nodiscard]] int combination_size(double raw_draw, int district_count);

[[nodiscard]] std::set<int> sample_district_combination(std::uint64_t rng_seed, int district_count,
                                                        double mean_size, double sd_size);

/// Throws ParameterError when the result would break a Policy invariant.
[[nodiscard]] Policy build_policy(std::set<int> districts, std::optional<double> reduction = {},
                                  std::optional<std::set<RoadClass>> classes = {});

/// True when the policy modifies this segment.
[[nodiscard]] bool is_treated(const network::RoadSegment& seg, const Policy& policy) noexcept;

[[nodiscard]] RoadNetwork apply_policy(const RoadNetwork& net, const Policy& policy);

[[nodiscard]] DatasetSplit split_dataset(const std::vector<std::string>& scenario_ids,
                                         std::array<double, 3> ratios, std::uint64_t seed);

struct ScenarioSamplerConfig {
  int count = 200;
  double mean_size = kDefaultMeanSize;
  double sd_size = kDefaultSdSize;
  double reduction = kDefaultReduction;
  std::set<RoadClass> classes = default_affected_classes();
  int seeds_per_scenario = 3;
  std::uint64_t seed = 0;
};

/// `count` scenarios with ids "scn0000".., each with its own distinct oracle seeds.
[[nodiscard]] std::vector<Scenario> generate_scenarios(const ScenarioSamplerConfig& cfg,
                                                       int district_count);

[[nodiscard]] std::string scenarios_to_json(const std::vector<Scenario>& scenarios);
[[nodiscard]] std::vector<Scenario> scenarios_from_json(std::string_view text);
void save_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path);
[[nodiscard]] std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

[[nodiscard]] std::string split_to_json(const DatasetSplit& split);
[[nodiscard]] DatasetSplit split_from_json(std::string_view text);

}  // namespace surroflow::scenario
