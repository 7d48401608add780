#include "surroflow/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "surroflow/assign.hpp"
#include "surroflow/csv.hpp"
#include "surroflow/dual.hpp"
#include "surroflow/error.hpp"
#include "surroflow/geojson.hpp"
#include "surroflow/parallel.hpp"

#ifndef SURROFLOW_VERSION
#define SURROFLOW_VERSION "dev"
#endif

namespace surroflow::pipeline {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

RunConfig RunConfig::full_scale() {
  RunConfig c;
  c.network.district_count = 20;
  c.scenarios.count = 10'000;
  c.oracle.base_seeds = 50;
  return c;
}

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where + "." + key + ": wrong type");
  }
}

}  // namespace

RunConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  reject_unknown(j, {"network", "demand", "scenarios", "oracle", "model", "split", "output_dir"}, "config");
  if (auto it = j.find("network"); it != j.end()) {
    reject_unknown(*it, {"grid_size", "district_count", "seed"}, "network");
    read(*it, "grid_size", c.network.grid_size, "network");
    read(*it, "district_count", c.network.district_count, "network");
    read(*it, "seed", c.network.seed, "network");
  }
  if (auto it = j.find("demand"); it != j.end()) {
    reject_unknown(*it, {"agents", "seed"}, "demand");
    read(*it, "agents", c.demand.agents, "demand");
    read(*it, "seed", c.demand.seed, "demand");
  }
  if (auto it = j.find("scenarios"); it != j.end()) {
    reject_unknown(*it, {"count", "mean_size", "sd_size", "reduction", "classes", "seeds_per_scenario", "seed"},
                   "scenarios");
    auto& s = c.scenarios;
    read(*it, "count", s.count, "scenarios");
    read(*it, "mean_size", s.mean_size, "scenarios");
    read(*it, "sd_size", s.sd_size, "scenarios");
    read(*it, "reduction", s.reduction, "scenarios");
    read(*it, "seeds_per_scenario", s.seeds_per_scenario, "scenarios");
    read(*it, "seed", s.seed, "scenarios");
    if (auto cl = it->find("classes"); cl != it->end()) {
      std::vector<std::string> names;
      read(*it, "classes", names, "scenarios");
      s.classes.clear();
      for (const auto& n : names) s.classes.insert(network::road_class_from_string(n));
    }
  }
  if (auto it = j.find("oracle"); it != j.end()) {
    reject_unknown(*it, {"base_seeds", "max_iterations", "gap_tolerance", "capacity_factor", "threads"}, "oracle");
    read(*it, "base_seeds", c.oracle.base_seeds, "oracle");
    read(*it, "max_iterations", c.oracle.max_iterations, "oracle");
    read(*it, "gap_tolerance", c.oracle.gap_tolerance, "oracle");
    read(*it, "capacity_factor", c.oracle.capacity_factor, "oracle");
    read(*it, "threads", c.oracle.threads, "oracle");
  }
  if (auto it = j.find("model"); it != j.end()) {
    reject_unknown(*it, {"hidden_dim", "transformer_heads", "leaky_slope", "learning_rate", "max_epochs", "patience",
                         "seed", "dropout", "weight_decay"},
                   "model");
    auto& m = c.model;
    read(*it, "hidden_dim", m.hidden_dim, "model");
    read(*it, "transformer_heads", m.transformer_heads, "model");
    read(*it, "leaky_slope", m.leaky_slope, "model");
    read(*it, "learning_rate", m.learning_rate, "model");
    read(*it, "max_epochs", m.max_epochs, "model");
    read(*it, "patience", m.patience, "model");
    read(*it, "seed", m.seed, "model");
    read(*it, "dropout", m.dropout, "model");
    read(*it, "weight_decay", m.weight_decay, "model");
  }
  if (auto it = j.find("split"); it != j.end()) {
    reject_unknown(*it, {"ratios", "seed"}, "split");
    read(*it, "ratios", c.split.ratios, "split");
    read(*it, "seed", c.split.seed, "split");
  }
  std::string out = c.output_dir.string();
  read(j, "output_dir", out, "config");
  c.output_dir = out;
  return c;
}

namespace {

json network_json(const NetworkSettings& n) {
  return {{"grid_size", n.grid_size}, {"district_count", n.district_count}, {"seed", n.seed}};
}
json demand_json(const DemandSettings& d) { return {{"agents", d.agents}, {"seed", d.seed}}; }
json scenarios_json(const scenario::ScenarioSamplerConfig& s) {
  json classes = json::array();
  for (auto c : s.classes) classes.push_back(std::string(network::to_string(c)));
  return {{"count", s.count},         {"mean_size", s.mean_size}, {"sd_size", s.sd_size},
          {"reduction", s.reduction}, {"classes", classes},       {"seeds_per_scenario", s.seeds_per_scenario},
          {"seed", s.seed}};
}
json oracle_json(const OracleSettings& o) {
  return {{"base_seeds", o.base_seeds},
          {"max_iterations", o.max_iterations},
          {"gap_tolerance", o.gap_tolerance},
          {"capacity_factor", o.capacity_factor},
          {"threads", o.threads}};
}
json model_json(const gnn::ModelConfig& m) {
  return {{"hidden_dim", m.hidden_dim}, {"transformer_heads", m.transformer_heads},
          {"leaky_slope", m.leaky_slope}, {"learning_rate", m.learning_rate},
          {"max_epochs", m.max_epochs}, {"patience", m.patience},
          {"seed", m.seed},             {"dropout", m.dropout},
          {"weight_decay", m.weight_decay}};
}
json split_json(const SplitSettings& s) { return {{"ratios", s.ratios}, {"seed", s.seed}}; }

}  // namespace

std::string config_to_json(const RunConfig& c) {
  json j{{"network", network_json(c.network)}, {"demand", demand_json(c.demand)},
         {"scenarios", scenarios_json(c.scenarios)}, {"oracle", oracle_json(c.oracle)},
         {"model", model_json(c.model)},         {"split", split_json(c.split)},
         {"output_dir", c.output_dir.string()}};
  return j.dump(2) + "\n";
}

RunConfig load_config(const fs::path& path) {
  try {
    return config_from_json(io::read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void validate(const RunConfig& c) {
  if (c.network.grid_size < 3) throw ParameterError("network.grid_size must be >= 3");
  if (c.network.district_count < 1 || c.network.district_count > c.network.grid_size * c.network.grid_size)
    throw ParameterError("network.district_count must lie in [1, grid_size^2]");
  if (c.demand.agents < 1) throw ParameterError("demand.agents must be >= 1");
  if (c.scenarios.count < 3) throw ParameterError("scenarios.count must be >= 3");
  if (!(c.scenarios.mean_size > 0.0)) throw ParameterError("scenarios.mean_size must be > 0");
  if (!(c.scenarios.sd_size >= 0.0)) throw ParameterError("scenarios.sd_size must be >= 0");
  if (!(c.scenarios.reduction > 0.0 && c.scenarios.reduction <= 1.0))
    throw ParameterError("scenarios.reduction must lie in (0, 1]");
  if (c.scenarios.classes.empty()) throw ParameterError("scenarios.classes must not be empty");
  if (c.scenarios.seeds_per_scenario < 1) throw ParameterError("scenarios.seeds_per_scenario must be >= 1");
  if (c.oracle.base_seeds < 1) throw ParameterError("oracle.base_seeds must be >= 1");
  if (c.oracle.max_iterations < 1) throw ParameterError("oracle.max_iterations must be >= 1");
  if (!(c.oracle.gap_tolerance > 0.0)) throw ParameterError("oracle.gap_tolerance must be > 0");
  if (!(c.oracle.capacity_factor > 0.0)) throw ParameterError("oracle.capacity_factor must be > 0");
  gnn::validate(c.model);
  double total = 0.0;
  for (double r : c.split.ratios) {
    if (!(r > 0.0)) throw ParameterError("split.ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("split.ratios must sum to 1");
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

using Clock = std::chrono::steady_clock;

std::string fnv1a(const fs::path& path) {
  const auto text = io::read_text(path);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class StageRecord {
public:
  StageRecord(const RunConfig& config, std::string stage)
      : layout_{config.output_dir}, stage_(std::move(stage)), start_(Clock::now()) {
    io::make_directories(layout_.root);
  }

  void input(const std::string& name, const fs::path& path) {
    if (!fs::exists(path))
      throw ValidationError(stage_ + ": missing input '" + path.string() + "' (run the earlier stage first)");
    inputs_[name] = {{"path", fs::relative(path, layout_.root).generic_string()},
                     {"bytes", fs::file_size(path)},
                     {"fnv1a64", fnv1a(path)}};
  }
  void output(const fs::path& path) { outputs_.push_back(fs::relative(path, layout_.root).generic_string()); }
  void settings(json s) { settings_ = std::move(s); }

  void commit() {
    json manifest = json::object();
    if (fs::exists(layout_.manifest())) {
      try {
        manifest = json::parse(io::read_text(layout_.manifest()));
      } catch (const nlohmann::json::exception&) {
        manifest = json::object();
      }
    }
    manifest[stage_] = {{"version", SURROFLOW_VERSION},
                        {"inputs", inputs_},
                        {"outputs", outputs_},
                        {"settings", settings_},
                        {"wall_clock_seconds", std::chrono::duration<double>(Clock::now() - start_).count()}};
    io::write_text(layout_.manifest(), manifest.dump(2) + "\n");
  }

  [[nodiscard]] const Layout& layout() const { return layout_; }

private:
  Layout layout_;
  std::string stage_;
  Clock::time_point start_;
  json inputs_ = json::object();
  json outputs_ = json::array();
  json settings_ = json::object();
};

unsigned worker_count(const OracleSettings& o) {
  if (o.threads > 0) return o.threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

assign::MsaOptions msa_options(const OracleSettings& o) { return {o.max_iterations, o.gap_tolerance, o.capacity_factor}; }

std::vector<std::uint64_t> base_seed_list(const OracleSettings& o) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(o.base_seeds));
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  return seeds;
}

const scenario::Scenario& find_scenario(const std::vector<scenario::Scenario>& all, const std::string& id) {
  for (const auto& s : all)
    if (s.id == id) return s;
  throw ValidationError("unknown scenario '" + id + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

void gen_network(const RunConfig& config) {
  validate(config);
  StageRecord rec(config, "gen-network");
  const auto net = network::generate_synthetic_city(config.network.grid_size, config.network.district_count,
                                                    config.network.seed);
  if (!network::is_strongly_connected(net)) throw ValidationError("generated network is not strongly connected");
  network::save_network(net, rec.layout().network());
  rec.output(rec.layout().network());
  rec.settings({{"network", network_json(config.network)}});
  rec.commit();
}

void gen_demand(const RunConfig& config) {
  validate(config);
  StageRecord rec(config, "gen-demand");
  rec.input("network", rec.layout().network());
  const auto net = network::load_network(rec.layout().network());
  const auto demand = assign::generate_demand(net, config.demand.agents, config.demand.seed);
  assign::save_demand(net, demand, rec.layout().demand());
  rec.output(rec.layout().demand());
  rec.settings({{"demand", demand_json(config.demand)}});
  rec.commit();
}

void gen_scenarios(const RunConfig& config) {
  validate(config);
  StageRecord rec(config, "gen-scenarios");
  rec.input("network", rec.layout().network());
  const auto net = network::load_network(rec.layout().network());
  const auto scenarios = scenario::generate_scenarios(config.scenarios, net.district_count());
  scenario::save_scenarios(scenarios, rec.layout().scenarios());
  rec.output(rec.layout().scenarios());
  rec.settings({{"scenarios", scenarios_json(config.scenarios)}});
  rec.commit();
}

SimulateSummary simulate(const RunConfig& config) {
  validate(config);
  StageRecord rec(config, "simulate");
  const auto& L = rec.layout();
  rec.input("network", L.network());
  rec.input("demand", L.demand());
  rec.input("scenarios", L.scenarios());
  const auto net = network::load_network(L.network());
  const auto demand = assign::load_demand(net, L.demand());
  const auto scenarios = scenario::load_scenarios(L.scenarios());
  const auto options = msa_options(config.oracle);
  const unsigned threads = worker_count(config.oracle);

  SimulateSummary summary;
  auto t0 = Clock::now();
  const auto seeds = base_seed_list(config.oracle);
  const auto base = assign::base_case(net, demand, seeds, options, threads);
  summary.base_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  assign::save_segment_values(net, base.volumes, L.base_volumes());
  rec.output(L.base_volumes());

  std::vector<double> seconds(scenarios.size(), 0.0);
  parallel_for(scenarios.size(), threads, [&](std::size_t i) {
    const auto start = Clock::now();
    const auto y = assign::simulate_scenario(net, scenarios[i], demand, base, options, 1);
    assign::save_segment_values(net, y.change, L.target(scenarios[i].id));
    seconds[i] = std::chrono::duration<double>(Clock::now() - start).count();
  });
  for (const auto& s : scenarios) rec.output(L.target(s.id));
  for (double s : seconds) summary.scenario_seconds += s;
  summary.scenarios = scenarios.size();

  rec.settings({{"oracle", oracle_json(config.oracle)},
                {"base_seeds", seeds},
                {"base_relative_gap", base.relative_gap},
                {"threads", threads},
                {"base_seconds", summary.base_seconds},
                {"mean_scenario_seconds", summary.scenario_seconds / static_cast<double>(scenarios.size())}});
  rec.commit();
  return summary;
}

void build_dataset(const RunConfig& config) {
  validate(config);
  StageRecord rec(config, "build-dataset");
  const auto& L = rec.layout();
  rec.input("network", L.network());
  rec.input("scenarios", L.scenarios());
  rec.input("base_volumes", L.base_volumes());
  const auto net = network::load_network(L.network());
  const auto scenarios = scenario::load_scenarios(L.scenarios());
  const auto base = assign::load_segment_values(net, L.base_volumes());
  const auto graph = dual::to_dual(net);
  dual::save_topology(L.topology(), graph);
  rec.output(L.topology());

  std::vector<std::string> ids;
  for (const auto& s : scenarios) {
    const auto change = assign::load_segment_values(net, L.target(s.id));
    std::vector<double> y(graph.node_count());
    for (std::size_t r = 0; r < y.size(); ++r) y[r] = change[graph.segment_of_node[r]];
    dual::save_sample(L.sample(s.id), graph, dual::build_features(net, s.policy, base), y);
    rec.output(L.sample(s.id));
    ids.push_back(s.id);
  }
  const auto split = scenario::split_dataset(ids, config.split.ratios, config.split.seed);
  io::write_text(L.split(), scenario::split_to_json(split));
  rec.output(L.split());
  rec.settings({{"split", split_json(config.split)},
                {"sizes", {split.train.size(), split.validation.size(), split.test.size()}}});
  rec.commit();
}

namespace {

struct Dataset {
  network::RoadNetwork net;
  dual::DualGraph graph;
  std::shared_ptr<const gnn::MessageGraph> messages;
  scenario::DatasetSplit split;
  std::vector<scenario::Scenario> scenarios;
};

Dataset load_dataset(StageRecord& rec) {
  const auto& L = rec.layout();
  rec.input("network", L.network());
  rec.input("scenarios", L.scenarios());
  rec.input("split", L.split());
  auto net = network::load_network(L.network());
  auto graph = dual::to_dual(net);
  auto messages = std::make_shared<const gnn::MessageGraph>(gnn::make_message_graph(graph));
  auto split = scenario::split_from_json(io::read_text(L.split()));
  auto scenarios = scenario::load_scenarios(L.scenarios());
  return {std::move(net), std::move(graph), std::move(messages), std::move(split), std::move(scenarios)};
}

gnn::GraphSample load_graph_sample(const Dataset& ds, const Layout& L, const std::string& id) {
  auto s = dual::load_sample(L.sample(id));
  if (s.node_ids != ds.graph.node_ids)
    throw ValidationError(L.sample(id).string() + ": node order does not match the network's dual graph");
  return {id, ds.messages, std::move(s.features), std::move(s.targets)};
}

std::vector<gnn::GraphSample> load_split(const Dataset& ds, const Layout& L, const std::vector<std::string>& ids) {
  std::vector<gnn::GraphSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(load_graph_sample(ds, L, id));
  return out;
}

}  // namespace

gnn::TrainingHistory train(const RunConfig& config, const gnn::EpochCallback& on_epoch) {
  validate(config);
  StageRecord rec(config, "train");
  const auto& L = rec.layout();
  const auto ds = load_dataset(rec);
  auto training = load_split(ds, L, ds.split.train);
  auto validation = load_split(ds, L, ds.split.validation);

  std::vector<dual::FeatureMatrix> raw;
  raw.reserve(training.size());
  for (const auto& s : training) raw.push_back(s.features);
  const auto standardizer = dual::fit_standardizer(raw);
  const double scale = gnn::fit_target_scale(training);
  for (auto* split : {&training, &validation})
    for (auto& s : *split) s.features = dual::apply_standardizer(s.features, standardizer);

  auto result = gnn::train(config.model, training, validation, standardizer, scale, on_epoch);
  gnn::save_model(result.model, L.checkpoint(), L.model_sidecar());
  rec.output(L.checkpoint());
  rec.output(L.model_sidecar());

  std::string history = "epoch,train_mse,validation_mse\n";
  for (std::size_t e = 0; e < result.history.train_mse.size(); ++e)
    history += std::to_string(e + 1) + "," + io::format_double(result.history.train_mse[e]) + "," +
               io::format_double(result.history.validation_mse[e]) + "\n";
  io::write_text(L.history(), history);
  rec.output(L.history());
  rec.settings({{"model", model_json(config.model)},
                {"epochs", result.history.train_mse.size()},
                {"best_epoch", result.history.best_epoch},
                {"target_scale", scale}});
  rec.commit();
  return result.history;
}

namespace {

std::vector<network::RoadClass> node_classes(const network::RoadNetwork& net, const dual::DualGraph& graph) {
  std::vector<network::RoadClass> out;
  out.reserve(graph.node_count());
  for (std::size_t s : graph.segment_of_node) out.push_back(net.segments()[s].road_class);
  return out;
}

void save_node_values(const fs::path& path, const dual::DualGraph& graph, std::span<const double> values) {
  io::write_segment_values(path, graph.node_ids, values);
}

}  // namespace

Evaluation evaluate(const RunConfig& config) {
  validate(config);
  StageRecord rec(config, "evaluate");
  const auto& L = rec.layout();
  const auto ds = load_dataset(rec);
  rec.input("checkpoint", L.checkpoint());
  rec.input("model", L.model_sidecar());
  const auto model = gnn::load_model(L.checkpoint(), L.model_sidecar());
  const auto classes = node_classes(ds.net, ds.graph);

  std::vector<double> y_all, yhat_all;
  std::vector<network::RoadClass> class_all;
  std::vector<bool> mask_all;
  Evaluation result;
  for (const auto& id : ds.split.test) {
    const auto sample = load_graph_sample(ds, L, id);
    const auto pred = gnn::predict(model, *ds.messages, sample.features);
    save_node_values(L.prediction(id), ds.graph, pred.values);
    rec.output(L.prediction(id));
    const auto mask = dual::treated_mask(ds.net, find_scenario(ds.scenarios, id).policy);
    y_all.insert(y_all.end(), sample.targets.begin(), sample.targets.end());
    yhat_all.insert(yhat_all.end(), pred.values.begin(), pred.values.end());
    class_all.insert(class_all.end(), classes.begin(), classes.end());
    mask_all.insert(mask_all.end(), mask.begin(), mask.end());
    result.per_scenario.push_back(eval::scenario_metrics(id, sample.targets, pred.values));
  }
  result.report = eval::subset_report(y_all, yhat_all, class_all, mask_all);
  io::write_text(L.report_csv(), eval::report_csv(result.report));
  io::write_text(L.report_text(), eval::report_text(result.report));
  io::write_text(L.scenario_metrics(), eval::scenario_metrics_csv(result.per_scenario));
  rec.output(L.report_csv());
  rec.output(L.report_text());
  rec.output(L.scenario_metrics());
  rec.settings({{"test_scenarios", ds.split.test.size()}});
  rec.commit();
  return result;
}

std::vector<PredictionSummary> predict(const RunConfig& config, const std::vector<std::string>& scenario_ids) {
  validate(config);
  StageRecord rec(config, "predict");
  const auto& L = rec.layout();
  const auto ds = load_dataset(rec);
  rec.input("checkpoint", L.checkpoint());
  rec.input("model", L.model_sidecar());
  const auto model = gnn::load_model(L.checkpoint(), L.model_sidecar());
  const auto& ids = scenario_ids.empty() ? ds.split.test : scenario_ids;

  std::vector<PredictionSummary> out;
  json timings = json::object();
  for (const auto& id : ids) {
    (void)find_scenario(ds.scenarios, id);
    const auto sample = load_graph_sample(ds, L, id);
    const auto pred = gnn::predict(model, *ds.messages, sample.features);
    save_node_values(L.prediction(id), ds.graph, pred.values);
    rec.output(L.prediction(id));
    out.push_back({eval::scenario_metrics(id, sample.targets, pred.values), pred.seconds});
    timings[id] = pred.seconds;
  }
  rec.settings({{"inference_seconds", timings}});
  rec.commit();
  return out;
}

std::vector<fs::path> export_maps(const RunConfig& config, const std::string& scenario_id) {
  validate(config);
  StageRecord rec(config, "export-map");
  const auto& L = rec.layout();
  rec.input("network", L.network());
  rec.input("scenarios", L.scenarios());
  rec.input("base_volumes", L.base_volumes());
  rec.input("target", L.target(scenario_id));
  const auto net = network::load_network(L.network());
  const auto scenarios = scenario::load_scenarios(L.scenarios());
  const auto& scn = find_scenario(scenarios, scenario_id);
  const auto base = assign::load_segment_values(net, L.base_volumes());
  const auto actual = assign::load_segment_values(net, L.target(scenario_id));
  std::vector<bool> treated;
  treated.reserve(net.segment_count());
  for (const auto& s : net.segments()) treated.push_back(scenario::is_treated(s, scn.policy));

  std::vector<fs::path> written;
  geojson::export_map(net, actual, base, treated, L.map(scenario_id, "actual"));
  written.push_back(L.map(scenario_id, "actual"));

  if (fs::exists(L.checkpoint()) && fs::exists(L.model_sidecar()) && fs::exists(L.sample(scenario_id))) {
    rec.input("checkpoint", L.checkpoint());
    const auto model = gnn::load_model(L.checkpoint(), L.model_sidecar());
    const auto graph = dual::to_dual(net);
    const auto messages = gnn::make_message_graph(graph);
    const auto sample = dual::load_sample(L.sample(scenario_id));
    const auto pred = gnn::predict(model, messages, sample.features);
    std::vector<double> per_segment(net.segment_count());
    for (std::size_t r = 0; r < pred.values.size(); ++r) per_segment[graph.segment_of_node[r]] = pred.values[r];
    geojson::export_map(net, per_segment, base, treated, L.map(scenario_id, "predicted"));
    written.push_back(L.map(scenario_id, "predicted"));
  }
  for (const auto& p : written) rec.output(p);
  rec.settings({{"scenario", scenario_id}});
  rec.commit();
  return written;
}

Evaluation run_all(const RunConfig& config, const gnn::EpochCallback& on_epoch) {
  gen_network(config);
  gen_demand(config);
  gen_scenarios(config);
  simulate(config);
  build_dataset(config);
  train(config, on_epoch);
  return evaluate(config);
}

}  // namespace surroflow::pipeline
