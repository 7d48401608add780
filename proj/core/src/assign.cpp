#include "surroflow/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <sstream>

#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"
#include "surroflow/parallel.hpp"

namespace surroflow::assign {

namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kTieTolerance = 1e-12;
}  // namespace

double DemandTable::total() const noexcept {
  double t = 0.0;
  for (const auto& trip : trips) t += trip.count;
  return t;
}

void validate_demand(const RoadNetwork& net, const DemandTable& demand) {
  const auto n = net.intersection_count();
  double total = 0.0;
  for (const auto& t : demand.trips) {
    if (t.origin >= n || t.destination >= n)
      throw ValidationError("demand references an intersection outside the network");
    if (!(std::isfinite(t.count) && t.count > 0.0))
      throw ValidationError("demand trip counts must be positive");
    total += t.count;
  }
  if (!(total > 0.0)) throw ValidationError("total demand must be positive");
}

DemandTable generate_demand(const RoadNetwork& net, int agent_count, std::uint64_t seed) {
  if (agent_count < 1) throw ParameterError("agent_count must be >= 1");
  const auto& nodes = net.intersections();
  const std::size_t n = nodes.size();
  if (n < 2) throw ParameterError("demand needs at least two intersections");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t attractors = std::min<std::size_t>(3, n);
  for (std::size_t i = 0; i < attractors; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }

  std::vector<double> weight(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < attractors; ++a) {
      const auto& p = nodes[order[a]];
      weight[j] += std::exp(-std::hypot(nodes[j].x - p.x, nodes[j].y - p.y) / 2000.0);
    }
  }
  std::discrete_distribution<std::size_t> dest_dist(weight.begin(), weight.end());
  std::uniform_int_distribution<std::size_t> origin_dist(0, n - 1);

  std::map<std::pair<std::size_t, std::size_t>, double> od;
  for (int k = 0; k < agent_count; ++k) {
    const std::size_t o = origin_dist(rng);
    std::size_t d = dest_dist(rng);
    while (d == o) d = dest_dist(rng);
    od[{o, d}] += 1.0;
  }
  DemandTable table;
  table.trips.reserve(od.size());
  for (const auto& [key, count] : od) table.trips.push_back({key.first, key.second, count});
  return table;
}

double bpr_travel_time(double free_flow_time, double volume, double capacity) {
  if (!(capacity > 0.0)) throw ParameterError("BPR capacity must be positive");
  if (!(free_flow_time > 0.0)) throw ParameterError("BPR free-flow time must be positive");
  if (!(volume >= 0.0)) throw ParameterError("BPR volume must be non-negative");
  const double r = volume / capacity;
  const double r2 = r * r;
  return free_flow_time * (1.0 + kBprAlpha * r2 * r2);
}

namespace {

// Shortest-path tree from one origin. Among equal-time paths the one whose
// sequence of canonical segment ranks is lexicographically smallest wins.
class PathTree {
public:
  PathTree(const RoadNetwork& net, std::span<const double> times)
      : net_(net), times_(times), dist_(net.intersection_count()), pred_(net.intersection_count()) {}

  void build(std::size_t origin) {
    std::fill(dist_.begin(), dist_.end(), std::numeric_limits<double>::infinity());
    std::fill(pred_.begin(), pred_.end(), kNone);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    std::vector<char> done(dist_.size(), 0);
    dist_[origin] = 0.0;
    heap.emplace(0.0, origin);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (done[u]) continue;
      done[u] = 1;
      for (std::size_t s : net_.outgoing()[u]) {
        const std::size_t v = net_.to_index(s);
        if (done[v]) continue;
        const double cand = d + times_[s];
        if (pred_[v] == kNone) {
          dist_[v] = cand;
          pred_[v] = s;
          heap.emplace(cand, v);
          continue;
        }
        const double tol = kTieTolerance * std::max(1.0, dist_[v]);
        if (cand < dist_[v] - tol) {
          dist_[v] = cand;
          pred_[v] = s;
          heap.emplace(cand, v);
        } else if (cand <= dist_[v] + tol && lex_less(s, pred_[v])) {
          dist_[v] = std::min(dist_[v], cand);
          pred_[v] = s;
        }
      }
    }
  }

  [[nodiscard]] bool reached(std::size_t node) const { return std::isfinite(dist_[node]); }
  [[nodiscard]] std::size_t pred(std::size_t node) const { return pred_[node]; }

private:
  // Compare path(from(a)) + [a] against path(from(b)) + [b].
  bool lex_less(std::size_t a, std::size_t b) const {
    const auto pa = ranks_to(a);
    const auto pb = ranks_to(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  }

  std::vector<std::size_t> ranks_to(std::size_t last) const {
    std::vector<std::size_t> seq;
    for (std::size_t s = last; s != kNone; s = pred_[net_.from_index(s)])
      seq.push_back(net_.canonical_rank()[s]);
    std::reverse(seq.begin(), seq.end());
    return seq;
  }

  const RoadNetwork& net_;
  std::span<const double> times_;
  std::vector<double> dist_;
  std::vector<std::size_t> pred_;
};

void check_times(const RoadNetwork& net, std::span<const double> times) {
  if (times.size() != net.segment_count())
    throw ShapeError("travel times: " + std::to_string(times.size()) + " values for " +
                     std::to_string(net.segment_count()) + " segments");
  for (double t : times)
    if (!(std::isfinite(t) && t > 0.0)) throw ParameterError("travel times must be positive and finite");
}

double load_all_or_nothing(const RoadNetwork& net, std::span<const double> times,
                           const DemandTable& demand, std::vector<double>& volumes) {
  volumes.assign(net.segment_count(), 0.0);
  PathTree tree(net, times);
  double loaded = 0.0;
  std::size_t current = kNone;
  for (const auto& trip : demand.trips) {
    if (trip.origin != current) {
      current = trip.origin;
      tree.build(current);
    }
    if (!tree.reached(trip.destination))
      throw AssignmentError("destination '" + net.intersections()[trip.destination].id +
                            "' unreachable from origin '" + net.intersections()[trip.origin].id + "'");
    for (std::size_t node = trip.destination; node != trip.origin;) {
      const std::size_t s = tree.pred(node);
      volumes[s] += trip.count;
      node = net.from_index(s);
    }
    loaded += trip.count;
  }
  return loaded;
}

double node_imbalance(const RoadNetwork& net, std::span<const double> volumes, const DemandTable& demand) {
  std::vector<double> balance(net.intersection_count(), 0.0);
  for (std::size_t s = 0; s < net.segment_count(); ++s) {
    balance[net.from_index(s)] += volumes[s];
    balance[net.to_index(s)] -= volumes[s];
  }
  for (const auto& t : demand.trips) {
    balance[t.origin] -= t.count;
    balance[t.destination] += t.count;
  }
  double worst = 0.0;
  for (double b : balance) worst = std::max(worst, std::abs(b));
  return worst;
}

}  // namespace

std::vector<double> all_or_nothing(const RoadNetwork& net, std::span<const double> times,
                                   const DemandTable& demand) {
  check_times(net, times);
  validate_demand(net, demand);
  std::vector<double> volumes;
  load_all_or_nothing(net, times, demand, volumes);
  return volumes;
}

std::vector<double> perturbed_free_flow_times(const RoadNetwork& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.95, 1.05);
  std::vector<double> t0(net.segment_count());
  for (std::size_t s = 0; s < t0.size(); ++s) t0[s] = net.segments()[s].free_flow_time() * noise(rng);
  return t0;
}

AssignmentResult msa_assignment(const RoadNetwork& net, const DemandTable& demand,
                                const MsaOptions& options, std::uint64_t seed) {
  if (options.max_iterations < 1) throw ParameterError("max_iterations must be >= 1");
  if (!(options.gap_tolerance > 0.0)) throw ParameterError("gap_tolerance must be > 0");
  if (!(options.capacity_factor > 0.0)) throw ParameterError("capacity_factor must be > 0");
  validate_demand(net, demand);

  const auto t0 = perturbed_free_flow_times(net, seed);
  const auto& segs = net.segments();
  const std::size_t m = segs.size();

  AssignmentResult result;
  load_all_or_nothing(net, t0, demand, result.volumes);
  auto& v = result.volumes;

  std::vector<double> capacity(m);
  for (std::size_t s = 0; s < m; ++s) capacity[s] = segs[s].capacity * options.capacity_factor;

  std::vector<double> times(m), aon;
  for (int k = 1; k <= options.max_iterations; ++k) {
    for (std::size_t s = 0; s < m; ++s) times[s] = bpr_travel_time(t0[s], v[s], capacity[s]);
    IterationTrace step;
    step.iteration = k;
    step.loaded_trips = load_all_or_nothing(net, times, demand, aon);
    step.max_node_imbalance = node_imbalance(net, v, demand);

    double current = 0.0, shortest = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      current += v[s] * times[s];
      shortest += aon[s] * times[s];
    }
    step.relative_gap = current > 0.0 ? std::abs(current - shortest) / current : 0.0;
    result.trace.push_back(step);
    result.relative_gap = step.relative_gap;
    result.iterations = k;
    if (step.relative_gap <= options.gap_tolerance) break;

    const double w = 1.0 / static_cast<double>(k + 1);
    for (std::size_t s = 0; s < m; ++s) v[s] = (1.0 - w) * v[s] + w * aon[s];
  }
  return result;
}

namespace {

AssignmentResult average_runs(const RoadNetwork& net, const DemandTable& demand,
                              std::span<const std::uint64_t> seeds, const MsaOptions& options,
                              unsigned threads) {
  if (seeds.empty()) throw ParameterError("at least one seed is required");
  std::vector<AssignmentResult> runs(seeds.size());
  parallel_for(seeds.size(), threads,
               [&](std::size_t i) { runs[i] = msa_assignment(net, demand, options, seeds[i]); });
  if (runs.size() == 1) return std::move(runs.front());

  AssignmentResult mean;
  mean.volumes.assign(net.segment_count(), 0.0);
  for (const auto& r : runs) {
    for (std::size_t s = 0; s < r.volumes.size(); ++s) mean.volumes[s] += r.volumes[s];
    mean.relative_gap += r.relative_gap;
    mean.iterations = std::max(mean.iterations, r.iterations);
  }
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (double& x : mean.volumes) x *= inv;
  mean.relative_gap *= inv;
  return mean;
}

}  // namespace

AssignmentResult base_case(const RoadNetwork& net, const DemandTable& demand,
                           std::span<const std::uint64_t> seeds, const MsaOptions& options,
                           unsigned threads) {
  return average_runs(net, demand, seeds, options, threads);
}

TargetVector simulate_scenario(const RoadNetwork& net, const scenario::Scenario& scn,
                               const DemandTable& demand, const AssignmentResult& base,
                               const MsaOptions& options, unsigned threads) {
  if (base.volumes.size() != net.segment_count())
    throw DataError("base volumes do not match the network (" + std::to_string(base.volumes.size()) +
                    " vs " + std::to_string(net.segment_count()) + " segments)");
  const auto treated = scenario::apply_policy(net, scn.policy);
  const auto policy = average_runs(treated, demand, scn.seeds, options, threads);
  TargetVector y;
  y.change.resize(net.segment_count());
  for (std::size_t s = 0; s < y.change.size(); ++s) y.change[s] = policy.volumes[s] - base.volumes[s];
  return y;
}

void save_demand(const RoadNetwork& net, const DemandTable& demand, const std::filesystem::path& path) {
  std::string out = "origin,destination,trips\n";
  for (const auto& t : demand.trips) {
    out += net.intersections().at(t.origin).id + "," + net.intersections().at(t.destination).id + "," +
           io::format_double(t.count) + "\n";
  }
  io::write_text(path, out);
}

DemandTable load_demand(const RoadNetwork& net, const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) ||
      io::split_csv_line(line) != std::vector<std::string>{"origin", "destination", "trips"})
    throw ParseError(path.string() + ": expected header 'origin,destination,trips'");
  std::map<std::pair<std::size_t, std::size_t>, double> od;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = io::split_csv_line(line);
    const auto ctx = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 3) throw ParseError(ctx + ": expected 3 fields");
    std::size_t o = 0, d = 0;
    try {
      o = net.intersection_index(f[0]);
      d = net.intersection_index(f[1]);
    } catch (const ParameterError& e) {
      throw ValidationError(ctx + ": " + e.what());
    }
    if (o == d) throw ValidationError(ctx + ": origin equals destination");
    od[{o, d}] += io::parse_double(f[2], ctx);
  }
  DemandTable table;
  for (const auto& [key, count] : od) table.trips.push_back({key.first, key.second, count});
  validate_demand(net, table);
  return table;
}

void save_segment_values(const RoadNetwork& net, std::span<const double> values,
                         const std::filesystem::path& path) {
  std::vector<std::string> ids;
  ids.reserve(net.segment_count());
  for (const auto& s : net.segments()) ids.push_back(s.id);
  io::write_segment_values(path, ids, values);
}

std::vector<double> load_segment_values(const RoadNetwork& net, const std::filesystem::path& path) {
  const auto rows = io::read_segment_values(path);
  std::vector<double> values(net.segment_count(), 0.0);
  std::vector<char> seen(net.segment_count(), 0);
  for (const auto& [id, value] : rows) {
    const auto idx = net.find_segment(id);
    if (!idx) throw ValidationError(path.string() + ": unknown segment '" + id + "'");
    if (seen[*idx]) throw ValidationError(path.string() + ": segment '" + id + "' listed twice");
    seen[*idx] = 1;
    values[*idx] = value;
  }
  for (std::size_t s = 0; s < seen.size(); ++s)
    if (!seen[s]) throw DataError(path.string() + ": missing segment '" + net.segments()[s].id + "'");
  return values;
}

}  // namespace surroflow::assign
