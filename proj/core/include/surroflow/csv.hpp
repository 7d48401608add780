#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace surroflow::io {

/// std::filesystem::create_directories that reports failure as IoError.
void make_directories(const std::filesystem::path& dir);

[[nodiscard]] std::string read_text(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, std::string_view text);

/// Shortest round-trippable decimal for a double (at least 17 significant digits when needed).
[[nodiscard]] std::string format_double(double v);

/// Splits one CSV line on commas (no quoting; ids never contain commas).
[[nodiscard]] std::vector<std::string> split_csv_line(std::string_view line);

[[nodiscard]] double parse_double(std::string_view field, std::string_view context);

/// `segment_id,value` file.
void write_segment_values(const std::filesystem::path& path, std::span<const std::string> ids,
                          std::span<const double> values);
[[nodiscard]] std::vector<std::pair<std::string, double>> read_segment_values(
    const std::filesystem::path& path);

}  // namespace surroflow::io
