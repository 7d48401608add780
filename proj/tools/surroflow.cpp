// surroflow command-line driver.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"
#include "surroflow/pipeline.hpp"

namespace pl = surroflow::pipeline;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct Overrides {
  std::optional<int> grid_size, districts, agents, count, seeds_per_scenario, base_seeds, max_iterations;
  std::optional<double> mean_size, sd_size, reduction, gap_tolerance, capacity_factor, learning_rate;
  std::optional<unsigned> threads;
  std::optional<int> epochs, patience, hidden_dim, heads;
  std::vector<std::string> scenarios;
  bool full_scale = false;
  bool quiet = false;
};

template <typename T, typename U>
void apply(const std::optional<T>& v, U& target) {
  if (v) target = static_cast<U>(*v);
}

pl::RunConfig resolve(const std::string& stage, const Common& c, const Overrides& o) {
  pl::RunConfig cfg = o.full_scale ? pl::RunConfig::full_scale() : pl::RunConfig{};
  if (!c.config_path.empty()) cfg = pl::load_config(c.config_path);
  if (!c.out.empty()) cfg.output_dir = c.out;
  apply(o.grid_size, cfg.network.grid_size);
  apply(o.districts, cfg.network.district_count);
  apply(o.agents, cfg.demand.agents);
  apply(o.count, cfg.scenarios.count);
  apply(o.mean_size, cfg.scenarios.mean_size);
  apply(o.sd_size, cfg.scenarios.sd_size);
  apply(o.reduction, cfg.scenarios.reduction);
  apply(o.seeds_per_scenario, cfg.scenarios.seeds_per_scenario);
  apply(o.base_seeds, cfg.oracle.base_seeds);
  apply(o.max_iterations, cfg.oracle.max_iterations);
  apply(o.gap_tolerance, cfg.oracle.gap_tolerance);
  apply(o.capacity_factor, cfg.oracle.capacity_factor);
  apply(o.threads, cfg.oracle.threads);
  apply(o.epochs, cfg.model.max_epochs);
  apply(o.patience, cfg.model.patience);
  apply(o.hidden_dim, cfg.model.hidden_dim);
  apply(o.heads, cfg.model.transformer_heads);
  apply(o.learning_rate, cfg.model.learning_rate);
  if (c.seed) {
    const auto s = *c.seed;
    if (stage == "gen-network") cfg.network.seed = s;
    else if (stage == "gen-demand") cfg.demand.seed = s;
    else if (stage == "gen-scenarios") cfg.scenarios.seed = s;
    else if (stage == "build-dataset") cfg.split.seed = s;
    else if (stage == "train") cfg.model.seed = s;
    else if (stage == "run") {
      cfg.network.seed = cfg.demand.seed = cfg.scenarios.seed = cfg.split.seed = cfg.model.seed = s;
    } else {
      throw surroflow::UsageError("--seed has no effect on '" + stage + "'");
    }
  }
  pl::validate(cfg);
  return cfg;
}

void print_predictions(const std::vector<pl::PredictionSummary>& rows) {
  std::printf("%-10s %12s %12s %8s %10s\n", "scenario", "mse", "naive_mse", "r2", "seconds");
  for (const auto& r : rows)
    std::printf("%-10s %12.4f %12.4f %8.4f %10.6f\n", r.metrics.id.c_str(), r.metrics.predicted_mse,
                r.metrics.naive_mse, r.metrics.r_squared, r.seconds);
}

int report_error(const std::string& kind, const std::string& message, int code, bool as_json) {
  std::cerr << "surroflow: error (" << kind << "): " << message << "\n";
  if (as_json) {
    nlohmann::ordered_json j{{"error", kind}, {"message", message}, {"exit_code", code}};
    std::cout << j.dump() << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate a graph-network surrogate for a traffic-assignment oracle"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(SURROFLOW_VERSION));
  bool error_json = false;
  app.add_flag("--error-json", error_json, "Also print failures as one JSON object on stdout");

  Common common;
  Overrides o;
  const std::vector<std::pair<const char*, const char*>> stages = {
      {"gen-network", "Generate the synthetic grid city"},
      {"gen-demand", "Sample origin-destination demand"},
      {"gen-scenarios", "Sample capacity-reduction scenarios"},
      {"simulate", "Run the assignment oracle for the base case and every scenario"},
      {"build-dataset", "Write the dual topology, per-scenario samples and the split"},
      {"train", "Train the surrogate on the training split"},
      {"evaluate", "Report metrics on the test split"},
      {"predict", "Predict scenarios with the trained model and time inference"},
      {"export-map", "Write GeoJSON change maps for one scenario"},
      {"run", "Every stage from gen-network through evaluate"},
  };
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", common.config_path, "Run configuration (JSON)");
    sub->add_option("--out", common.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", common.seed, "Seed for this stage's random choices");
    sub->add_flag("--full-scale", o.full_scale, "Start from full-scale counts instead of desk-scale defaults");
    const std::string n = name;
    if (n == "gen-network" || n == "run") {
      sub->add_option("--grid-size", o.grid_size, "Intersections per grid side");
      sub->add_option("--districts", o.districts, "Number of districts");
    }
    if (n == "gen-demand" || n == "run") sub->add_option("--agents", o.agents, "Number of trips");
    if (n == "gen-scenarios" || n == "run") {
      sub->add_option("--count", o.count, "Number of scenarios");
      sub->add_option("--mean-size", o.mean_size, "Mean district-combination size");
      sub->add_option("--sd-size", o.sd_size, "Standard deviation of the combination size");
      sub->add_option("--reduction", o.reduction, "Capacity reduction fraction in (0, 1]");
      sub->add_option("--seeds-per-scenario", o.seeds_per_scenario, "Oracle replications per scenario");
    }
    if (n == "simulate" || n == "run") {
      sub->add_option("--base-seeds", o.base_seeds, "Oracle replications for the base case");
      sub->add_option("--max-iterations", o.max_iterations, "MSA iteration cap");
      sub->add_option("--gap-tolerance", o.gap_tolerance, "MSA relative-gap tolerance");
      sub->add_option("--capacity-factor", o.capacity_factor, "Capacity multiplier inside the delay function");
      sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    }
    if (n == "train" || n == "run") {
      sub->add_option("--epochs", o.epochs, "Maximum epochs");
      sub->add_option("--patience", o.patience, "Early-stopping patience");
      sub->add_option("--hidden-dim", o.hidden_dim, "Hidden width");
      sub->add_option("--heads", o.heads, "Transformer heads");
      sub->add_option("--lr", o.learning_rate, "Adam learning rate");
      sub->add_flag("--quiet", o.quiet, "Do not print per-epoch progress");
    }
    if (n == "predict") sub->add_option("--scenario", o.scenarios, "Scenario id (repeatable; default: test split)");
    if (n == "export-map") sub->add_option("--scenario", o.scenarios, "Scenario id")->required()->expected(1);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (error_json) return report_error("usage", e.what(), 1, true);
    app.exit(e);
    return 1;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = resolve(stage, common, o);
    surroflow::gnn::EpochCallback progress;
    if (!o.quiet)
      progress = [](int epoch, double tr, double va) {
        std::fprintf(stderr, "epoch %4d  train_mse %.4f  val_mse %.4f\n", epoch, tr, va);
      };
    if (stage == "gen-network") pl::gen_network(cfg);
    else if (stage == "gen-demand") pl::gen_demand(cfg);
    else if (stage == "gen-scenarios") pl::gen_scenarios(cfg);
    else if (stage == "simulate") {
      const auto s = pl::simulate(cfg);
      std::printf("simulated %zu scenarios (base case %.2f s, scenarios %.2f s total)\n", s.scenarios,
                  s.base_seconds, s.scenario_seconds);
    } else if (stage == "build-dataset") pl::build_dataset(cfg);
    else if (stage == "train") {
      const auto h = pl::train(cfg, progress);
      std::printf("trained %zu epochs, best epoch %d (validation mse %.4f)\n", h.train_mse.size(), h.best_epoch,
                  h.validation_mse[static_cast<std::size_t>(h.best_epoch - 1)]);
    } else if (stage == "evaluate" || stage == "run") {
      const auto e = stage == "run" ? pl::run_all(cfg, progress) : pl::evaluate(cfg);
      std::fputs(surroflow::eval::report_text(e.report).c_str(), stdout);
    } else if (stage == "predict") {
      print_predictions(pl::predict(cfg, o.scenarios));
    } else if (stage == "export-map") {
      for (const auto& p : pl::export_maps(cfg, o.scenarios.front())) std::printf("%s\n", p.string().c_str());
    }
    return 0;
  } catch (const surroflow::Error& e) {
    return report_error(e.kind(), e.what(), e.is_validation() ? 1 : 2, error_json);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 2, error_json);
  }
}
