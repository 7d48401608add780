#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "surroflow/error.hpp"
#include "surroflow/gnn.hpp"

namespace surroflow::gnn {

double fit_target_scale(const std::vector<GraphSample>& training) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : training) {
    for (double y : s.targets) sum += y;
    n += s.targets.size();
  }
  if (n < 2) return 1.0;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : training)
    for (double y : s.targets) ss += (y - mean) * (y - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n));
  return sd > 1e-12 ? sd : 1.0;
}

namespace {

// Every training step allocates and frees the same set of large temporaries.
// glibc serves those with mmap/munmap by default, so each step pays for fresh
// page faults; keeping them on the heap lets the next step reuse the pages.
void keep_freed_pages() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
  });
#endif
}

void check_sample(const GraphSample& s) {
  if (!s.graph) throw UsageError("sample '" + s.id + "' has no graph");
  if (s.features.rows() != s.graph->nodes || s.targets.size() != s.graph->nodes)
    throw ShapeError("sample '" + s.id + "': rows do not match the graph");
}

double pooled_mse(const SurrogateModel& model, const std::vector<GraphSample>& samples) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const auto yhat = infer(model, *s.graph, s.features);
    for (std::size_t i = 0; i < yhat.size(); ++i) {
      const double d = yhat[i] - s.targets[i];
      total += d * d;
    }
    n += yhat.size();
  }
  return total / static_cast<double>(n);
}

}  // namespace

TrainingResult train(const ModelConfig& config, const std::vector<GraphSample>& training,
                     const std::vector<GraphSample>& validation, const dual::Standardizer& standardizer,
                     double target_scale, const EpochCallback& on_epoch) {
  validate(config);
  if (training.empty()) throw ParameterError("training split is empty");
  if (validation.empty()) throw ParameterError("validation split is empty");
  if (!(target_scale > 0.0) || !std::isfinite(target_scale)) throw ParameterError("target_scale must be positive");
  for (const auto* split : {&training, &validation})
    for (const auto& s : *split) {
      check_sample(s);
      if (!s.features.standardized) throw UsageError("sample '" + s.id + "' is not standardized");
    }

  keep_freed_pages();
  TrainingResult result{SurrogateModel(config), {}};
  auto& model = result.model;
  model.standardizer = standardizer;
  model.target_scale = target_scale;

  std::vector<Matrix> scaled_targets;
  scaled_targets.reserve(training.size());
  for (const auto& s : training) {
    Matrix t(s.targets.size(), 1);
    for (std::size_t i = 0; i < s.targets.size(); ++i) t(i, 0) = s.targets[i] / target_scale;
    scaled_targets.push_back(std::move(t));
  }

  auto params = model.parameters();
  auto state = ad::AdamState::zeros_like(params);
  const ad::AdamOptions adam{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay};
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5bd1e995ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0xc2b2ae35ULL);
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_params = model.snapshot();
  int since_best = 0;
  long step = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }
    double epoch_loss = 0.0;
    try {
      for (std::size_t idx : order) {
        const auto& sample = training[idx];
        ad::Tape tape;
        const auto pred = forward_scaled(tape, model, *sample.graph, sample.features, {true, &dropout_rng});
        const auto loss = ad::mse(tape, pred, scaled_targets[idx]);
        if (!std::isfinite(loss.item())) throw NumericError("loss is not finite");
        for (auto& p : params) p.zero_grad();
        tape.backward(loss);
        ad::adam_step(params, state, adam, ++step);
        epoch_loss += loss.item() * target_scale * target_scale;
      }
    } catch (const NumericError& e) {
      throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    const double train_mse = epoch_loss / static_cast<double>(training.size());
    double val_mse = 0.0;
    try {
      val_mse = pooled_mse(model, validation);
    } catch (const NumericError& e) {
      throw TrainingError("validation diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse))
      throw TrainingError("training diverged in epoch " + std::to_string(epoch));

    result.history.train_mse.push_back(train_mse);
    result.history.validation_mse.push_back(val_mse);
    if (on_epoch) on_epoch(epoch, train_mse, val_mse);

    if (val_mse < best) {
      best = val_mse;
      best_params = model.snapshot();
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best > config.patience) {
      break;
    }
  }
  model.restore(best_params);
  return result;
}

}  // namespace surroflow::gnn
