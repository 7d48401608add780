#include "surroflow/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "json.hpp"
#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"

namespace surroflow::scenario {

using ordered_json = nlohmann::ordered_json;

std::set<RoadClass> default_affected_classes() {
  return {RoadClass::Primary, RoadClass::Secondary, RoadClass::Tertiary};
}

int combination_size(double raw_draw, int district_count) {
  if (district_count < 1) throw ParameterError("district_count must be positive");
  const double rounded = std::round(raw_draw);  // half away from zero
  if (!(rounded >= 1.0)) return 1;
  if (rounded >= static_cast<double>(district_count)) return district_count;
  return static_cast<int>(rounded);
}

std::set<int> sample_district_combination(std::uint64_t rng_seed, int district_count,
                                          double mean_size, double sd_size) {
  if (district_count < 1) throw ParameterError("district_count must be >= 1");
  if (!(mean_size > 0.0)) throw ParameterError("mean_size must be > 0");
  if (!(sd_size >= 0.0)) throw ParameterError("sd_size must be >= 0");

  std::mt19937_64 rng(rng_seed);
  double raw = mean_size;
  if (sd_size > 0.0) raw = std::normal_distribution<double>(mean_size, sd_size)(rng);
  const int size = combination_size(raw, district_count);

  std::vector<int> pool(static_cast<std::size_t>(district_count));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < size; ++i) {
    std::uniform_int_distribution<int> pick(i, district_count - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  return {pool.begin(), pool.begin() + size};
}

Policy build_policy(std::set<int> districts, std::optional<double> reduction,
                    std::optional<std::set<RoadClass>> classes) {
  Policy p;
  if (districts.empty()) throw ParameterError("policy needs at least one district");
  p.districts = std::move(districts);
  p.reduction = reduction.value_or(kDefaultReduction);
  if (!(p.reduction > 0.0 && p.reduction <= 1.0))
    throw ParameterError("reduction must lie in (0, 1], got " + io::format_double(p.reduction));
  p.affected_classes = classes.value_or(default_affected_classes());
  if (p.affected_classes.empty()) throw ParameterError("policy needs at least one road class");
  return p;
}

bool is_treated(const network::RoadSegment& seg, const Policy& policy) noexcept {
  return seg.district && policy.districts.contains(*seg.district) &&
         policy.affected_classes.contains(seg.road_class);
}

RoadNetwork apply_policy(const RoadNetwork& net, const Policy& policy) {
  for (int d : policy.districts)
    if (d < 0 || d >= net.district_count())
      throw ParameterError("policy references unknown district " + std::to_string(d));
  auto segments = net.segments();
  for (auto& s : segments) {
    if (!is_treated(s, policy)) continue;
    s.capacity = policy.reduction >= 1.0 ? kClosedCapacity : s.capacity * (1.0 - policy.reduction);
  }
  return net.with_segments(std::move(segments));
}

DatasetSplit split_dataset(const std::vector<std::string>& scenario_ids,
                           std::array<double, 3> ratios, std::uint64_t seed) {
  const std::size_t n = scenario_ids.size();
  if (n < 3) throw ParameterError("split needs at least 3 scenarios, got " + std::to_string(n));
  for (double r : ratios)
    if (!(r > 0.0)) throw ParameterError("split ratios must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw ParameterError("split ratios must sum to 1");

  auto rounded = [&](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(n))));
  };
  std::size_t n_val = rounded(ratios[1]);
  std::size_t n_test = rounded(ratios[2]);
  while (n_val + n_test > n - 1) {
    if (n_val >= n_test) --n_val; else --n_test;
  }

  std::vector<std::string> ids = scenario_ids;
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(ids[i - 1], ids[pick(rng)]);
  }
  DatasetSplit split;
  const std::size_t n_train = n - n_val - n_test;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                          ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return split;
}

std::vector<Scenario> generate_scenarios(const ScenarioSamplerConfig& cfg, int district_count) {
  if (cfg.count < 1) throw ParameterError("scenario count must be >= 1");
  if (cfg.seeds_per_scenario < 1) throw ParameterError("seeds_per_scenario must be >= 1");
  std::mt19937_64 master(cfg.seed);
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  const auto width = std::max<std::size_t>(4, std::to_string(cfg.count - 1).size());
  for (int i = 0; i < cfg.count; ++i) {
    Scenario s;
    auto idx = std::to_string(i);
    s.id = "scn" + std::string(width - idx.size(), '0') + idx;
    const auto combo = sample_district_combination(master(), district_count, cfg.mean_size, cfg.sd_size);
    s.policy = build_policy(combo, cfg.reduction, cfg.classes);
    // Oracle seeds live in their own range so they never collide with base-case seeds 0..N.
    for (int k = 0; k < cfg.seeds_per_scenario; ++k)
      s.seeds.push_back(1'000'000ULL + static_cast<std::uint64_t>(i) * 1000ULL + static_cast<std::uint64_t>(k));
    out.push_back(std::move(s));
  }
  return out;
}

std::string scenarios_to_json(const std::vector<Scenario>& scenarios) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : scenarios) {
    ordered_json classes = ordered_json::array();
    for (auto c : s.policy.affected_classes) classes.push_back(std::string(network::to_string(c)));
    arr.push_back({{"id", s.id},
                   {"districts", s.policy.districts},
                   {"reduction", s.policy.reduction},
                   {"classes", classes},
                   {"seeds", s.seeds}});
  }
  return arr.dump(1) + "\n";
}

std::vector<Scenario> scenarios_from_json(std::string_view text) {
  ordered_json arr;
  try {
    arr = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  if (!arr.is_array()) throw ParseError("scenario file must be a JSON list");
  std::vector<Scenario> out;
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& o = arr[i];
    const std::string where = "scenarios[" + std::to_string(i) + "]";
    try {
      Scenario s;
      s.id = o.at("id").get<std::string>();
      std::set<RoadClass> classes;
      for (const auto& c : o.at("classes")) classes.insert(network::road_class_from_string(c.get<std::string>()));
      s.policy = build_policy(o.at("districts").get<std::set<int>>(), o.at("reduction").get<double>(),
                              std::move(classes));
      s.seeds = o.at("seeds").get<std::vector<std::uint64_t>>();
      if (s.seeds.empty()) throw ValidationError("seeds must be non-empty");
      if (std::set<std::uint64_t>(s.seeds.begin(), s.seeds.end()).size() != s.seeds.size())
        throw ValidationError("seeds must be pairwise distinct");
      if (!ids.insert(s.id).second) throw ValidationError("duplicate scenario id '" + s.id + "'");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const ParameterError& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return out;
}

void save_scenarios(const std::vector<Scenario>& scenarios, const std::filesystem::path& path) {
  io::write_text(path, scenarios_to_json(scenarios));
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  return scenarios_from_json(io::read_text(path));
}

std::string split_to_json(const DatasetSplit& split) {
  ordered_json j{{"train", split.train}, {"val", split.validation}, {"test", split.test}};
  return j.dump(1) + "\n";
}

DatasetSplit split_from_json(std::string_view text) {
  try {
    auto j = ordered_json::parse(text);
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    std::unordered_set<std::string> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& id : *part)
        if (!seen.insert(id).second) throw ValidationError("split lists scenario '" + id + "' twice");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what());
  }
}

}  // namespace surroflow::scenario
