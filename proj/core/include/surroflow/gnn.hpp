#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "surroflow/autodiff.hpp"
#include "surroflow/dual.hpp"

namespace surroflow::gnn {

struct ModelConfig {
  int hidden_dim = 64;
  int transformer_heads = 4;
  double leaky_slope = 0.2;
  double learning_rate = 1e-3;
  int max_epochs = 200;
  int patience = 20;
  std::uint64_t seed = 0;
  double dropout = 0.0;
  double weight_decay = 0.0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws ParameterError on non-positive sizes or hidden_dim % heads != 0.
void validate(const ModelConfig& config);

/// Dual edges plus one self-loop per node, ordered by (target, source).
/// Messages flow from `source` into `target`.
struct MessageGraph {
  std::size_t nodes = 0;
  ad::Index source;
  ad::Index target;

  [[nodiscard]] std::size_t edge_count() const noexcept { return source->size(); }
};

[[nodiscard]] MessageGraph make_message_graph(std::size_t nodes,
                                              const std::vector<std::pair<std::size_t, std::size_t>>& edges);
[[nodiscard]] MessageGraph make_message_graph(const dual::DualGraph& graph);

struct Linear {
  ad::Tensor weight;  // in x out
  ad::Tensor bias;    // 1 x out, may be empty
};

/// Linear -> relu -> Linear.
struct Mlp {
  Linear hidden;
  Linear output;
};

/// The message MLP's first layer acts on concat(x_j, pos_j - pos_i); its weight
/// is stored as the feature block and the position block.
struct PointNetParams {
  ad::Tensor local_feature_weight;   // f x h
  ad::Tensor local_position_weight;  // 4 x h
  ad::Tensor local_bias;             // 1 x h
  Linear local_output;               // h x h
  Mlp global;                        // h -> h -> h
};

struct TransformerParams {
  Linear query;
  Linear key;
  Linear value;
  Linear skip;
};

struct GatParams {
  ad::Tensor weight;     // h x out
  ad::Tensor attention;  // 2*out x 1, first half scores the target node
};

// Layers. `attention_out`, when given, receives the per-edge attention weights.
[[nodiscard]] ad::Tensor pointnet_conv(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& pos,
                                       const MessageGraph& graph, const PointNetParams& p);
[[nodiscard]] ad::Tensor transformer_conv(ad::Tape& tape, const ad::Tensor& x, const MessageGraph& graph,
                                          const TransformerParams& p, int heads,
                                          Matrix* attention_out = nullptr);
[[nodiscard]] ad::Tensor gat_conv(ad::Tape& tape, const ad::Tensor& x, const MessageGraph& graph,
                                  const GatParams& p, double slope, Matrix* attention_out = nullptr);

/// Two PointNet layers, two Transformer layers and a single-head GAT output.
class SurrogateModel {
public:
  /// Glorot-uniform weights and zero biases drawn from config.seed.
  explicit SurrogateModel(const ModelConfig& config);

  ModelConfig config;
  PointNetParams pointnet1;
  PointNetParams pointnet2;
  TransformerParams transformer1;
  TransformerParams transformer2;
  GatParams gat;
  dual::Standardizer standardizer;
  double target_scale = 1.0;

  /// Stable order used by the optimizer and the checkpoint.
  [[nodiscard]] std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  [[nodiscard]] std::vector<ad::Tensor> parameters() const;
  /// Deep copy of every parameter value.
  [[nodiscard]] std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* dropout_rng = nullptr;
};

/// Scaled prediction (n x 1) before multiplying by target_scale. Throws UsageError
/// for unstandardized features.
[[nodiscard]] ad::Tensor forward_scaled(ad::Tape& tape, const SurrogateModel& model, const MessageGraph& graph,
                                        const dual::FeatureMatrix& features, const ForwardOptions& options = {});

/// y-hat in vehicles/hour, one per dual node.
[[nodiscard]] std::vector<double> forward(const SurrogateModel& model, const MessageGraph& graph,
                                          const dual::FeatureMatrix& features);

/// Same result as forward() without recording a tape: aggregations run over
/// contiguous per-target edge ranges. Used for prediction and validation.
[[nodiscard]] std::vector<double> infer(const SurrogateModel& model, const MessageGraph& graph,
                                        const dual::FeatureMatrix& features);
/// (1/|E|) sum (yhat - y)^2.
[[nodiscard]] double mse_loss(std::span<const double> predicted, std::span<const double> actual);

struct Prediction {
  std::vector<double> values;
  double seconds = 0.0;
};

/// Standardizes raw features with the model's standardizer when needed, then runs forward.
[[nodiscard]] Prediction predict(const SurrogateModel& model, const MessageGraph& graph,
                                 const dual::FeatureMatrix& features);

/// One graph: standardized features and targets in vehicles/hour.
struct GraphSample {
  std::string id;
  std::shared_ptr<const MessageGraph> graph;
  dual::FeatureMatrix features;
  std::vector<double> targets;
};

/// Population standard deviation of all training targets (1 when degenerate).
[[nodiscard]] double fit_target_scale(const std::vector<GraphSample>& training);

struct TrainingHistory {
  std::vector<double> train_mse;       // mean per-graph MSE, vehicles^2/h^2
  std::vector<double> validation_mse;  // pooled over validation nodes
  int best_epoch = 0;                  // 1-based
};

struct TrainingResult {
  SurrogateModel model;
  TrainingHistory history;
};

using EpochCallback = std::function<void(int epoch, double train_mse, double validation_mse)>;

/// Adam, one step per graph, per-epoch shuffling, early stopping on validation
/// MSE. Returns the parameters of the best validation epoch.
[[nodiscard]] TrainingResult train(const ModelConfig& config, const std::vector<GraphSample>& training,
                                   const std::vector<GraphSample>& validation,
                                   const dual::Standardizer& standardizer, double target_scale,
                                   const EpochCallback& on_epoch = {});

/// Binary parameters at `checkpoint`, JSON sidecar (config, standardizer, target scale) at `sidecar`.
void save_model(const SurrogateModel& model, const std::filesystem::path& checkpoint,
                const std::filesystem::path& sidecar);
[[nodiscard]] SurrogateModel load_model(const std::filesystem::path& checkpoint,
                                        const std::filesystem::path& sidecar);

}  // namespace surroflow::gnn
