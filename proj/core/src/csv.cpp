#include "surroflow/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "surroflow/error.hpp"

namespace surroflow::io {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_directories(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) make_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw IoError("cannot format double");
  return {buf, ptr};
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view field, std::string_view context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw ParseError(std::string(context) + ": not a number: '" + std::string(field) + "'");
  return v;
}

void write_segment_values(const std::filesystem::path& path, std::span<const std::string> ids,
                          std::span<const double> values) {
  if (ids.size() != values.size())
    throw ShapeError("segment value file: " + std::to_string(ids.size()) + " ids vs " +
                     std::to_string(values.size()) + " values");
  std::string out = "segment_id,value\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += ids[i];
    out += ',';
    out += format_double(values[i]);
    out += '\n';
  }
  write_text(path, out);
}

std::vector<std::pair<std::string, double>> read_segment_values(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"segment_id", "value"})
    throw ParseError(path.string() + ": expected header 'segment_id,value'");
  std::vector<std::pair<std::string, double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    const auto ctx = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 2) throw ParseError(ctx + ": expected 2 fields");
    rows.emplace_back(f[0], parse_double(f[1], ctx));
  }
  return rows;
}

}  // namespace surroflow::io
