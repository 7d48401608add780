#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "surroflow/network.hpp"

namespace surroflow::geojson {

/// 100 * change / max(base, 1), clamped to [-100, 500] for display.
[[nodiscard]] double change_percent(double change, double base_volume) noexcept;

/// FeatureCollection with one LineString per segment. All spans are aligned with
/// net.segments(); `treated` flags segments whose capacity the policy changed.
[[nodiscard]] std::string change_map(const network::RoadNetwork& net, std::span<const double> change,
                                     std::span<const double> base_volumes, const std::vector<bool>& treated);

void export_map(const network::RoadNetwork& net, std::span<const double> change, std::span<const double> base_volumes,
                const std::vector<bool>& treated, const std::filesystem::path& path);

}  // namespace surroflow::geojson
