#include "surroflow/dual.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"

namespace surroflow::dual {

DualGraph to_dual(const RoadNetwork& net) {
  DualGraph g;
  const auto& order = net.canonical_order();
  const auto& rank = net.canonical_rank();
  g.segment_of_node = order;
  g.node_ids.reserve(order.size());
  for (std::size_t s : order) g.node_ids.push_back(net.segments()[s].id);

  for (std::size_t a : order) {
    const std::size_t head = net.to_index(a);
    const std::size_t tail = net.from_index(a);
    for (std::size_t b : net.outgoing()[head]) {
      if (net.to_index(b) == tail) continue;  // u-turn onto the reverse segment
      g.edges.emplace_back(rank[a], rank[b]);
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

std::vector<bool> treated_mask(const RoadNetwork& net, const scenario::Policy& policy) {
  std::vector<bool> mask;
  mask.reserve(net.segment_count());
  for (std::size_t s : net.canonical_order()) mask.push_back(scenario::is_treated(net.segments()[s], policy));
  return mask;
}

FeatureMatrix build_features(const RoadNetwork& net, const scenario::Policy& policy,
                             std::span<const double> base_volumes) {
  if (base_volumes.size() != net.segment_count())
    throw DataError("base volumes cover " + std::to_string(base_volumes.size()) + " of " +
                    std::to_string(net.segment_count()) + " segments");
  const std::size_t n = net.segment_count();
  FeatureMatrix f{Matrix(n, kStaticWidth), Matrix(n, kPositionalWidth), Matrix(n, kVariableWidth), false};
  const auto& order = net.canonical_order();
  for (std::size_t row = 0; row < n; ++row) {
    const std::size_t s = order[row];
    const auto& seg = net.segments()[s];
    if (!std::isfinite(base_volumes[s]))
      throw DataError("base volume missing for segment '" + seg.id + "'");
    f.statics(row, 0) = base_volumes[s];
    f.statics(row, 1) = seg.capacity;
    f.statics(row, 2) = seg.speed_limit;
    f.statics(row, 3) = seg.length;
    const auto& a = net.intersections()[net.from_index(s)];
    const auto& b = net.intersections()[net.to_index(s)];
    f.positional(row, 0) = a.x;
    f.positional(row, 1) = a.y;
    f.positional(row, 2) = b.x;
    f.positional(row, 3) = b.y;
    f.variable(row, 0) = scenario::is_treated(seg, policy) ? policy.reduction : 0.0;
  }
  return f;
}

namespace {

// Two-pass statistics: mean first, then centered second moment.
ColumnStats finish(const std::vector<double>& values) {
  ColumnStats st;
  if (values.empty()) return st;
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - st.mean) * (v - st.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size()));
  st.std = sd > 1e-12 * std::max(1.0, std::abs(st.mean)) ? sd : 1.0;
  return st;
}

}  // namespace

Standardizer fit_standardizer(std::span<const FeatureMatrix> training) {
  std::size_t rows = 0;
  for (const auto& f : training) {
    if (f.standardized) throw UsageError("fit_standardizer given already standardized features");
    rows += f.rows();
  }
  if (rows < 2) throw ParameterError("fit_standardizer needs at least 2 rows, got " + std::to_string(rows));

  std::array<std::vector<double>, kStaticWidth> statics;
  std::vector<double> xs, ys, var;
  for (const auto& f : training) {
    for (std::size_t r = 0; r < f.rows(); ++r) {
      for (std::size_t c = 0; c < kStaticWidth; ++c) statics[c].push_back(f.statics(r, c));
      xs.push_back(f.positional(r, 0));
      xs.push_back(f.positional(r, 2));
      ys.push_back(f.positional(r, 1));
      ys.push_back(f.positional(r, 3));
      var.push_back(f.variable(r, 0));
    }
  }
  Standardizer s;
  for (std::size_t c = 0; c < kStaticWidth; ++c) s.statics[c] = finish(statics[c]);
  s.pos_x = finish(xs);
  s.pos_y = finish(ys);
  s.variable = finish(var);
  return s;
}

FeatureMatrix apply_standardizer(const FeatureMatrix& features, const Standardizer& s) {
  if (features.standardized) throw UsageError("features are already standardized");
  FeatureMatrix out = features;
  const auto z = [](double v, const ColumnStats& st) { return (v - st.mean) / st.std; };
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < kStaticWidth; ++c) out.statics(r, c) = z(features.statics(r, c), s.statics[c]);
    out.positional(r, 0) = z(features.positional(r, 0), s.pos_x);
    out.positional(r, 1) = z(features.positional(r, 1), s.pos_y);
    out.positional(r, 2) = z(features.positional(r, 2), s.pos_x);
    out.positional(r, 3) = z(features.positional(r, 3), s.pos_y);
    out.variable(r, 0) = z(features.variable(r, 0), s.variable);
  }
  out.standardized = true;
  return out;
}

namespace {
constexpr const char* kSampleHeader = "segment_id,static_0,static_1,static_2,static_3,pos_0,pos_1,pos_2,pos_3,var_0,y";
}

void save_sample(const std::filesystem::path& path, const DualGraph& graph, const FeatureMatrix& features,
                 std::span<const double> targets) {
  const std::size_t n = graph.node_count();
  if (features.rows() != n || targets.size() != n)
    throw ShapeError("sample: " + std::to_string(n) + " nodes, " + std::to_string(features.rows()) +
                     " feature rows, " + std::to_string(targets.size()) + " targets");
  std::string out = kSampleHeader;
  out += '\n';
  for (std::size_t r = 0; r < n; ++r) {
    out += graph.node_ids[r];
    for (std::size_t c = 0; c < kStaticWidth; ++c) out += "," + io::format_double(features.statics(r, c));
    for (std::size_t c = 0; c < kPositionalWidth; ++c) out += "," + io::format_double(features.positional(r, c));
    out += "," + io::format_double(features.variable(r, 0));
    out += "," + io::format_double(targets[r]);
    out += '\n';
  }
  io::write_text(path, out);
}

Sample load_sample(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || (line.size() && line.back() == '\r' ? line.substr(0, line.size() - 1) : line) != kSampleHeader)
    throw ParseError(path.string() + ": unexpected sample header");
  std::vector<std::string> ids;
  std::vector<std::array<double, kFeatureWidth + 1>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = io::split_csv_line(line);
    const auto ctx = path.string() + ":" + std::to_string(lineno);
    if (f.size() != kFeatureWidth + 2) throw ParseError(ctx + ": expected " + std::to_string(kFeatureWidth + 2) + " fields");
    ids.push_back(f[0]);
    std::array<double, kFeatureWidth + 1> row{};
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = io::parse_double(f[c + 1], ctx);
    rows.push_back(row);
  }
  const std::size_t n = rows.size();
  Sample s{std::move(ids),
           {Matrix(n, kStaticWidth), Matrix(n, kPositionalWidth), Matrix(n, kVariableWidth), false},
           std::vector<double>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < kStaticWidth; ++c) s.features.statics(r, c) = rows[r][c];
    for (std::size_t c = 0; c < kPositionalWidth; ++c) s.features.positional(r, c) = rows[r][kStaticWidth + c];
    s.features.variable(r, 0) = rows[r][kStaticWidth + kPositionalWidth];
    s.targets[r] = rows[r][kFeatureWidth];
  }
  return s;
}

void save_topology(const std::filesystem::path& path, const DualGraph& graph) {
  std::string out = "src_segment,dst_segment\n";
  for (const auto& [a, b] : graph.edges) out += graph.node_ids[a] + "," + graph.node_ids[b] + "\n";
  io::write_text(path, out);
}

DualGraph load_topology(const std::filesystem::path& path, const RoadNetwork& net) {
  DualGraph g;
  g.segment_of_node = net.canonical_order();
  for (std::size_t s : g.segment_of_node) g.node_ids.push_back(net.segments()[s].id);
  std::unordered_map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < g.node_ids.size(); ++i) lookup.emplace(g.node_ids[i], i);
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) ||
      io::split_csv_line(line) != std::vector<std::string>{"src_segment", "dst_segment"})
    throw ParseError(path.string() + ": expected header 'src_segment,dst_segment'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = io::split_csv_line(line);
    const auto ctx = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 2) throw ParseError(ctx + ": expected 2 fields");
    auto a = lookup.find(f[0]);
    auto b = lookup.find(f[1]);
    if (a == lookup.end() || b == lookup.end()) throw ValidationError(ctx + ": unknown segment");
    g.edges.emplace_back(a->second, b->second);
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

}  // namespace surroflow::dual
