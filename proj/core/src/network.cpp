#include "surroflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"
#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"

namespace surroflow::network {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(RoadClass c) noexcept {
  switch (c) {
    case RoadClass::Trunk: return "Trunk";
    case RoadClass::Primary: return "Primary";
    case RoadClass::Secondary: return "Secondary";
    case RoadClass::Tertiary: return "Tertiary";
    case RoadClass::Residential: return "Residential";
  }
  return "Residential";
}

RoadClass road_class_from_string(std::string_view s) {
  for (auto c : kAllRoadClasses)
    if (to_string(c) == s) return c;
  throw ParseError("unknown road class '" + std::string(s) + "'");
}

double default_capacity(RoadClass c) noexcept {
  switch (c) {
    case RoadClass::Trunk: return 2000.0;
    case RoadClass::Primary: return 1500.0;
    case RoadClass::Secondary: return 1000.0;
    case RoadClass::Tertiary: return 600.0;
    case RoadClass::Residential: return 300.0;
  }
  return 300.0;
}

double default_speed(RoadClass c) noexcept {
  switch (c) {
    case RoadClass::Trunk: return 80.0 / 3.6;
    case RoadClass::Primary: return 60.0 / 3.6;
    case RoadClass::Secondary: return 50.0 / 3.6;
    case RoadClass::Tertiary: return 40.0 / 3.6;
    case RoadClass::Residential: return 30.0 / 3.6;
  }
  return 30.0 / 3.6;
}

RoadNetwork::RoadNetwork(std::vector<Intersection> intersections,
                         std::vector<RoadSegment> segments, int district_count)
    : intersections_(std::move(intersections)),
      segments_(std::move(segments)),
      district_count_(district_count) {
  if (district_count_ < 1)
    throw ValidationError("district_count must be positive, got " + std::to_string(district_count_));

  node_lookup_.reserve(intersections_.size());
  for (std::size_t i = 0; i < intersections_.size(); ++i) {
    const auto& n = intersections_[i];
    if (n.id.empty()) throw ValidationError("intersection #" + std::to_string(i) + " has empty id");
    if (!std::isfinite(n.x) || !std::isfinite(n.y))
      throw ValidationError("intersection '" + n.id + "' has non-finite coordinates");
    if (!node_lookup_.emplace(n.id, i).second)
      throw ValidationError("duplicate intersection id '" + n.id + "'");
  }

  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  seg_lookup_.reserve(segments_.size());
  from_.resize(segments_.size());
  to_.resize(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    const std::string where = "segment '" + s.id + "'";
    if (s.id.empty()) throw ValidationError("segment #" + std::to_string(i) + " has empty id");
    if (!seg_lookup_.emplace(s.id, i).second) throw ValidationError("duplicate segment id '" + s.id + "'");
    auto f = node_lookup_.find(s.from);
    auto t = node_lookup_.find(s.to);
    if (f == node_lookup_.end())
      throw ValidationError(where + " references unknown intersection '" + s.from + "'");
    if (t == node_lookup_.end())
      throw ValidationError(where + " references unknown intersection '" + s.to + "'");
    if (f->second == t->second) throw ValidationError(where + " is a self-loop");
    if (!positive(s.length)) throw ValidationError(where + " has non-positive length");
    if (!positive(s.capacity)) throw ValidationError(where + " has non-positive capacity");
    if (!positive(s.speed_limit)) throw ValidationError(where + " has non-positive speed limit");
    if (s.district && (*s.district < 0 || *s.district >= district_count_))
      throw ValidationError(where + " has district " + std::to_string(*s.district) +
                            " outside [0, " + std::to_string(district_count_) + ")");
    from_[i] = f->second;
    to_[i] = t->second;
  }

  canonical_.resize(segments_.size());
  std::iota(canonical_.begin(), canonical_.end(), std::size_t{0});
  std::sort(canonical_.begin(), canonical_.end(),
            [&](std::size_t a, std::size_t b) { return segments_[a].id < segments_[b].id; });
  rank_.resize(segments_.size());
  for (std::size_t r = 0; r < canonical_.size(); ++r) rank_[canonical_[r]] = r;

  out_.assign(intersections_.size(), {});
  in_.assign(intersections_.size(), {});
  for (std::size_t s : canonical_) {
    out_[from_[s]].push_back(s);
    in_[to_[s]].push_back(s);
  }
}

std::size_t RoadNetwork::intersection_index(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  if (it == node_lookup_.end()) throw ParameterError("unknown intersection '" + std::string(id) + "'");
  return it->second;
}

std::size_t RoadNetwork::segment_index(std::string_view id) const {
  auto idx = find_segment(id);
  if (!idx) throw ParameterError("unknown segment '" + std::string(id) + "'");
  return *idx;
}

std::optional<std::size_t> RoadNetwork::find_segment(std::string_view id) const {
  auto it = seg_lookup_.find(std::string(id));
  if (it == seg_lookup_.end()) return std::nullopt;
  return it->second;
}

RoadNetwork RoadNetwork::with_segments(std::vector<RoadSegment> segments) const {
  return RoadNetwork(intersections_, std::move(segments), district_count_);
}

void validate(const RoadNetwork& net) {
  // Re-running the constructor checks every invariant on a copy.
  RoadNetwork copy(net.intersections(), net.segments(), net.district_count());
  (void)copy;
}

bool is_strongly_connected(const RoadNetwork& net) {
  const std::size_t n = net.intersection_count();
  std::vector<bool> used(n, false);
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    used[net.from_index(s)] = true;
    used[net.to_index(s)] = true;
  }
  auto start = std::find(used.begin(), used.end(), true);
  if (start == used.end()) return true;
  const auto root = static_cast<std::size_t>(start - used.begin());

  auto reach = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> stack{root};
    seen[root] = true;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      const auto& adj = forward ? net.outgoing()[u] : net.incoming()[u];
      for (auto s : adj) {
        const auto v = forward ? net.to_index(s) : net.from_index(s);
        if (!seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      if (used[i] && !seen[i]) return false;
    return true;
  };
  return reach(true) && reach(false);
}

namespace {

std::string padded(char prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

std::size_t digit_count(std::size_t v) {
  std::size_t d = 1;
  while (v >= 10) {
    v /= 10;
    ++d;
  }
  return d;
}

// Lloyd iterations on intersection coordinates; returns the cluster of each point.
std::vector<int> kmeans_partition(const std::vector<Intersection>& pts, int k, std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::pair<double, double>> centers(k);
  for (int c = 0; c < k; ++c) centers[c] = {pts[order[c]].x, pts[order[c]].y};

  std::vector<int> assign(n, -1);
  const auto dist2 = [&](std::size_t i, int c) {
    const double dx = pts[i].x - centers[c].first;
    const double dy = pts[i].y - centers[c].second;
    return dx * dx + dy * dy;
  };

  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(i, 0);
      for (int c = 1; c < k; ++c) {
        const double d = dist2(i, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }

    // Empty clusters steal the point farthest from its own center.
    std::vector<std::size_t> sizes(k, 0);
    for (int a : assign) ++sizes[a];
    for (int c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assign[i]] < 2) continue;
        const double d = dist2(i, assign[i]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --sizes[assign[far]];
      assign[far] = c;
      sizes[c] = 1;
      centers[c] = {pts[far].x, pts[far].y};
      changed = true;
    }

    if (!changed && iter > 0) break;
    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sx[assign[i]] += pts[i].x;
      sy[assign[i]] += pts[i].y;
    }
    for (int c = 0; c < k; ++c)
      centers[c] = {sx[c] / static_cast<double>(sizes[c]), sy[c] / static_cast<double>(sizes[c])};
  }
  return assign;
}

}  // namespace

RoadNetwork generate_synthetic_city(int grid_size, int district_count, std::uint64_t seed) {
  if (grid_size < 3) throw ParameterError("grid_size must be >= 3, got " + std::to_string(grid_size));
  if (district_count < 1 || district_count > grid_size * grid_size)
    throw ParameterError("district_count must lie in [1, grid_size^2], got " +
                         std::to_string(district_count));

  const auto n = static_cast<std::size_t>(grid_size);
  std::mt19937_64 rng(seed);

  // Class of every grid line: index [0, n) are rows (horizontal), [n, 2n) columns.
  std::vector<RoadClass> line(2 * n, RoadClass::Residential);
  for (std::size_t i : {std::size_t{0}, n - 1}) {
    line[i] = RoadClass::Secondary;
    line[n + i] = RoadClass::Secondary;
  }
  std::vector<std::size_t> interior_rows, interior_cols;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    interior_rows.push_back(i);
    interior_cols.push_back(n + i);
  }
  std::shuffle(interior_rows.begin(), interior_rows.end(), rng);
  std::shuffle(interior_cols.begin(), interior_cols.end(), rng);
  line[interior_rows[0]] = RoadClass::Trunk;
  line[interior_cols[0]] = RoadClass::Primary;
  if (interior_rows.size() >= 3) {
    line[interior_rows[1]] = RoadClass::Primary;
    line[interior_cols[1]] = RoadClass::Secondary;
  }
  const std::size_t phase = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if ((i + phase) % 3 != 0) continue;
    if (line[i] == RoadClass::Residential) line[i] = RoadClass::Tertiary;
    if (line[n + i] == RoadClass::Residential) line[n + i] = RoadClass::Tertiary;
  }

  const std::size_t node_width = std::max<std::size_t>(3, digit_count(n * n - 1));
  std::vector<Intersection> nodes;
  nodes.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      nodes.push_back({padded('n', r * n + c, node_width), static_cast<double>(c) * kGridSpacing,
                       static_cast<double>(r) * kGridSpacing});

  std::mt19937_64 district_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const auto node_district = kmeans_partition(nodes, district_count, district_rng);

  const std::size_t seg_count = 4 * n * (n - 1);
  const std::size_t seg_width = std::max<std::size_t>(4, digit_count(seg_count - 1));
  std::vector<RoadSegment> segments;
  segments.reserve(seg_count);
  auto add = [&](std::size_t a, std::size_t b, RoadClass cls) {
    RoadSegment s;
    s.id = padded('s', segments.size(), seg_width);
    s.from = nodes[a].id;
    s.to = nodes[b].id;
    s.length = kGridSpacing;
    s.capacity = default_capacity(cls);
    s.speed_limit = default_speed(cls);
    s.road_class = cls;
    s.district = node_district[a];
    segments.push_back(std::move(s));
  };
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t here = r * n + c;
      if (c + 1 < n) {
        add(here, here + 1, line[r]);
        add(here + 1, here, line[r]);
      }
      if (r + 1 < n) {
        add(here, here + n, line[n + c]);
        add(here + n, here, line[n + c]);
      }
    }
  }
  return RoadNetwork(std::move(nodes), std::move(segments), district_count);
}

std::set<std::string> segments_in_districts(const RoadNetwork& net, const std::set<int>& districts) {
  for (int d : districts)
    if (d < 0 || d >= net.district_count())
      throw ParameterError("unknown district " + std::to_string(d));
  std::set<std::string> out;
  for (const auto& s : net.segments())
    if (s.district && districts.contains(*s.district)) out.insert(s.id);
  return out;
}

std::string to_json(const RoadNetwork& net) {
  ordered_json j;
  j["district_count"] = net.district_count();
  auto& nodes = j["intersections"] = ordered_json::array();
  for (const auto& n : net.intersections()) nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  auto& segs = j["segments"] = ordered_json::array();
  for (const auto& s : net.segments()) {
    ordered_json o{{"id", s.id},
                   {"from", s.from},
                   {"to", s.to},
                   {"length_m", s.length},
                   {"capacity", s.capacity},
                   {"speed_ms", s.speed_limit},
                   {"class", std::string(to_string(s.road_class))}};
    o["district"] = s.district ? ordered_json(*s.district) : ordered_json(nullptr);
    segs.push_back(std::move(o));
  }
  return j.dump(1) + "\n";
}

namespace {

template <typename T>
T field(const ordered_json& o, const char* key, const std::string& where) {
  if (!o.is_object()) throw ParseError(where + ": expected an object");
  auto it = o.find(key);
  if (it == o.end()) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

RoadNetwork from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("network file is not valid JSON: ") + e.what());
  }
  const int districts = field<int>(j, "district_count", "network");
  const auto& jn = j.find("intersections");
  const auto& js = j.find("segments");
  if (jn == j.end() || !jn->is_array()) throw ParseError("network: 'intersections' must be an array");
  if (js == j.end() || !js->is_array()) throw ParseError("network: 'segments' must be an array");

  std::vector<Intersection> nodes;
  nodes.reserve(jn->size());
  for (std::size_t i = 0; i < jn->size(); ++i) {
    const auto& o = (*jn)[i];
    const std::string where = "intersections[" + std::to_string(i) + "]";
    nodes.push_back({field<std::string>(o, "id", where), field<double>(o, "x", where),
                     field<double>(o, "y", where)});
  }
  std::vector<RoadSegment> segs;
  segs.reserve(js->size());
  for (std::size_t i = 0; i < js->size(); ++i) {
    const auto& o = (*js)[i];
    std::string where = "segments[" + std::to_string(i) + "]";
    RoadSegment s;
    s.id = field<std::string>(o, "id", where);
    where += " (id '" + s.id + "')";
    s.from = field<std::string>(o, "from", where);
    s.to = field<std::string>(o, "to", where);
    s.length = field<double>(o, "length_m", where);
    s.capacity = field<double>(o, "capacity", where);
    s.speed_limit = field<double>(o, "speed_ms", where);
    try {
      s.road_class = road_class_from_string(field<std::string>(o, "class", where));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    auto d = o.find("district");
    if (d != o.end() && !d->is_null()) s.district = field<int>(o, "district", where);
    segs.push_back(std::move(s));
  }
  return RoadNetwork(std::move(nodes), std::move(segs), districts);
}

void save_network(const RoadNetwork& net, const std::filesystem::path& path) {
  io::write_text(path, to_json(net));
}

RoadNetwork load_network(const std::filesystem::path& path) {
  try {
    return from_json(io::read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace surroflow::network
