#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace surroflow::network {

enum class RoadClass : std::uint8_t { Trunk, Primary, Secondary, Tertiary, Residential };

inline constexpr RoadClass kAllRoadClasses[] = {RoadClass::Trunk, RoadClass::Primary,
                                                RoadClass::Secondary, RoadClass::Tertiary,
                                                RoadClass::Residential};

[[nodiscard]] std::string_view to_string(RoadClass c) noexcept;
/// Throws ParseError for anything but the five exact class names.
[[nodiscard]] RoadClass road_class_from_string(std::string_view s);

/// Vehicles per hour used by the synthetic generator.
[[nodiscard]] double default_capacity(RoadClass c) noexcept;
/// Meters per second used by the synthetic generator.
[[nodiscard]] double default_speed(RoadClass c) noexcept;

struct Intersection {
  std::string id;
  double x = 0.0;  // meters, local projection
  double y = 0.0;

  friend bool operator==(const Intersection&, const Intersection&) = default;
};

struct RoadSegment {
  std::string id;
  std::string from;
  std::string to;
  double length = 0.0;       // m
  double capacity = 0.0;     // veh/h
  double speed_limit = 0.0;  // m/s
  RoadClass road_class = RoadClass::Residential;
  std::optional<int> district;

  [[nodiscard]] double free_flow_time() const noexcept { return length / speed_limit; }

  friend bool operator==(const RoadSegment&, const RoadSegment&) = default;
};

/// Primal directed street graph. Immutable once constructed; the constructor
/// validates referential integrity and attribute ranges.
class RoadNetwork {
public:
  RoadNetwork(std::vector<Intersection> intersections, std::vector<RoadSegment> segments,
              int district_count);

  [[nodiscard]] const std::vector<Intersection>& intersections() const noexcept {
    return intersections_;
  }
  [[nodiscard]] const std::vector<RoadSegment>& segments() const noexcept { return segments_; }
  [[nodiscard]] int district_count() const noexcept { return district_count_; }

  [[nodiscard]] std::size_t intersection_count() const noexcept { return intersections_.size(); }
  [[nodiscard]] std::size_t segment_count() const noexcept { return segments_.size(); }

  [[nodiscard]] std::size_t intersection_index(std::string_view id) const;
  [[nodiscard]] std::size_t segment_index(std::string_view id) const;
  [[nodiscard]] std::optional<std::size_t> find_segment(std::string_view id) const;

  /// Endpoint intersection indices of segment i.
  [[nodiscard]] std::size_t from_index(std::size_t seg) const noexcept { return from_[seg]; }
  [[nodiscard]] std::size_t to_index(std::size_t seg) const noexcept { return to_[seg]; }

  /// Outgoing segment indices per intersection, in canonical (id) order.
  [[nodiscard]] const std::vector<std::vector<std::size_t>>& outgoing() const noexcept {
    return out_;
  }
  [[nodiscard]] const std::vector<std::vector<std::size_t>>& incoming() const noexcept {
    return in_;
  }

  /// Segment indices sorted by segment id; the dual graph uses this order.
  [[nodiscard]] const std::vector<std::size_t>& canonical_order() const noexcept {
    return canonical_;
  }
  /// Position of each segment in canonical_order().
  [[nodiscard]] const std::vector<std::size_t>& canonical_rank() const noexcept { return rank_; }

  /// Same intersections and topology with replaced segment attributes.
  [[nodiscard]] RoadNetwork with_segments(std::vector<RoadSegment> segments) const;

  friend bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
    return a.district_count_ == b.district_count_ && a.intersections_ == b.intersections_ &&
           a.segments_ == b.segments_;
  }

private:
  std::vector<Intersection> intersections_;
  std::vector<RoadSegment> segments_;
  int district_count_ = 0;

  std::unordered_map<std::string, std::size_t> node_lookup_;
  std::unordered_map<std::string, std::size_t> seg_lookup_;
  std::vector<std::size_t> from_;
  std::vector<std::size_t> to_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::size_t> canonical_;
  std::vector<std::size_t> rank_;
};

/// Re-checks every RoadNetwork invariant except strong connectivity; throws ValidationError.
void validate(const RoadNetwork& net);

/// True when every intersection touched by a segment can reach every other one.
[[nodiscard]] bool is_strongly_connected(const RoadNetwork& net);

/// Grid city: grid_size^2 intersections 250 m apart, two directed segments per
/// adjacent pair, classes and k-means districts derived from `seed`.
[[nodiscard]] RoadNetwork generate_synthetic_city(int grid_size, int district_count,
                                                  std::uint64_t seed);

inline constexpr double kGridSpacing = 250.0;

/// Exactly the segment ids whose district is in `districts`.
[[nodiscard]] std::set<std::string> segments_in_districts(const RoadNetwork& net,
                                                          const std::set<int>& districts);

[[nodiscard]] std::string to_json(const RoadNetwork& net);
[[nodiscard]] RoadNetwork from_json(std::string_view text);
void save_network(const RoadNetwork& net, const std::filesystem::path& path);
[[nodiscard]] RoadNetwork load_network(const std::filesystem::path& path);

}  // namespace surroflow::network
