#include "surroflow/geojson.hpp"

#include <algorithm>

#include "json.hpp"
#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"

namespace surroflow::geojson {

double change_percent(double change, double base_volume) noexcept {
  const double pct = 100.0 * change / std::max(base_volume, 1.0);
  return std::clamp(pct, -100.0, 500.0);
}

std::string change_map(const network::RoadNetwork& net, std::span<const double> change,
                       std::span<const double> base_volumes, const std::vector<bool>& treated) {
  const std::size_t m = net.segment_count();
  if (change.size() != m || base_volumes.size() != m || treated.size() != m)
    throw ShapeError("change_map: values are not aligned with the " + std::to_string(m) + " network segments");
  using json = nlohmann::ordered_json;
  json features = json::array();
  for (std::size_t s = 0; s < m; ++s) {
    const auto& seg = net.segments()[s];
    const auto& a = net.intersections()[net.from_index(s)];
    const auto& b = net.intersections()[net.to_index(s)];
    json f;
    f["type"] = "Feature";
    f["geometry"] = {{"type", "LineString"}, {"coordinates", {{a.x, a.y}, {b.x, b.y}}}};
    f["properties"] = {{"segment_id", seg.id},
                       {"change_abs", change[s]},
                       {"change_pct", change_percent(change[s], base_volumes[s])},
                       {"road_class", std::string(network::to_string(seg.road_class))},
                       {"treated", static_cast<bool>(treated[s])}};
    features.push_back(std::move(f));
  }
  json doc{{"type", "FeatureCollection"}, {"features", std::move(features)}};
  return doc.dump() + "\n";
}

void export_map(const network::RoadNetwork& net, std::span<const double> change, std::span<const double> base_volumes,
                const std::vector<bool>& treated, const std::filesystem::path& path) {
  io::write_text(path, change_map(net, change, base_volumes, treated));
}

}  // namespace surroflow::geojson
