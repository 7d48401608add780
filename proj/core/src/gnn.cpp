#include "surroflow/gnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json.hpp"
#include "surroflow/csv.hpp"
#include "surroflow/error.hpp"

namespace surroflow::gnn {

using ad::Tape;
using ad::Tensor;

void validate(const ModelConfig& c) {
  if (c.hidden_dim < 1) throw ParameterError("hidden_dim must be positive");
  if (c.transformer_heads < 1) throw ParameterError("transformer_heads must be positive");
  if (c.hidden_dim % c.transformer_heads != 0)
    throw ParameterError("hidden_dim (" + std::to_string(c.hidden_dim) + ") must be divisible by transformer_heads (" +
                         std::to_string(c.transformer_heads) + ")");
  if (!(c.leaky_slope > 0.0)) throw ParameterError("leaky_slope must be positive");
  if (!(c.learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (c.max_epochs < 1) throw ParameterError("max_epochs must be positive");
  if (c.patience < 0) throw ParameterError("patience must be non-negative");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  if (!(c.weight_decay >= 0.0)) throw ParameterError("weight_decay must be non-negative");
}

MessageGraph make_message_graph(std::size_t nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::pair<std::size_t, std::size_t>> by_target;
  by_target.reserve(edges.size() + nodes);
  for (const auto& [src, dst] : edges) {
    if (src >= nodes || dst >= nodes) throw IndexError("dual edge refers to a node outside [0, " + std::to_string(nodes) + ")");
    if (src != dst) by_target.emplace_back(dst, src);
  }
  for (std::size_t i = 0; i < nodes; ++i) by_target.emplace_back(i, i);
  std::sort(by_target.begin(), by_target.end());
  by_target.erase(std::unique(by_target.begin(), by_target.end()), by_target.end());
  std::vector<std::size_t> src, dst;
  src.reserve(by_target.size());
  dst.reserve(by_target.size());
  for (const auto& [t, s] : by_target) {
    dst.push_back(t);
    src.push_back(s);
  }
  return {nodes, ad::make_index(std::move(src)), ad::make_index(std::move(dst))};
}

MessageGraph make_message_graph(const dual::DualGraph& graph) {
  return make_message_graph(graph.node_count(), graph.edges);
}

namespace {

Tensor affine(Tape& tape, const Tensor& x, const Linear& lin) {
  auto y = ad::matmul(tape, x, lin.weight);
  return lin.bias.valid() ? ad::add(tape, y, lin.bias) : y;
}

void check_width(const Tensor& x, std::size_t width, const char* layer) {
  if (x.cols() != width)
    throw ShapeError(std::string(layer) + ": input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(width));
}

}  // namespace

Tensor pointnet_conv(Tape& tape, const Tensor& x, const Tensor& pos, const MessageGraph& graph, const PointNetParams& p) {
  if (x.rows() != graph.nodes || pos.rows() != graph.nodes)
    throw ShapeError("pointnet_conv: " + std::to_string(x.rows()) + " feature rows and " + std::to_string(pos.rows()) +
                     " position rows for " + std::to_string(graph.nodes) + " nodes");
  check_width(x, p.local_feature_weight.rows(), "pointnet_conv");
  check_width(pos, p.local_position_weight.rows(), "pointnet_conv positions");

  // [x_j, pos_j - pos_i] W = x_j Wx + pos_j Wp - pos_i Wp, evaluated per node and gathered per edge.
  const auto xw = ad::matmul(tape, x, p.local_feature_weight);
  const auto pw = ad::matmul(tape, pos, p.local_position_weight);
  const auto hidden =
      ad::edge_difference_relu(tape, ad::add(tape, xw, pw), pw, p.local_bias, graph.source, graph.target);
  const auto message = affine(tape, hidden, p.local_output);
  const auto pooled = ad::scatter_max(tape, message, graph.target, graph.nodes);
  return affine(tape, ad::relu(tape, affine(tape, pooled, p.global.hidden)), p.global.output);
}

Tensor transformer_conv(Tape& tape, const Tensor& x, const MessageGraph& graph, const TransformerParams& p, int heads,
                        Matrix* attention_out) {
  if (x.rows() != graph.nodes) throw ShapeError("transformer_conv: row count does not match node count");
  check_width(x, p.query.weight.rows(), "transformer_conv");
  const std::size_t width = p.query.weight.cols();
  if (heads < 1 || width % static_cast<std::size_t>(heads) != 0)
    throw ShapeError("transformer_conv: width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
  const auto h = static_cast<std::size_t>(heads);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(width / h));

  const auto q = affine(tape, x, p.query);
  const auto k = affine(tape, x, p.key);
  const auto v = affine(tape, x, p.value);
  const auto scores = ad::scale(tape, ad::edge_dot(tape, q, k, graph.target, graph.source, h), inv_sqrt_d);
  const auto alpha = ad::segment_softmax(tape, scores, graph.target, graph.nodes);
  if (attention_out) *attention_out = alpha.value();
  const auto aggregated = ad::weighted_scatter(tape, v, alpha, graph.source, graph.target, graph.nodes);
  return ad::add(tape, aggregated, affine(tape, x, p.skip));
}

Tensor gat_conv(Tape& tape, const Tensor& x, const MessageGraph& graph, const GatParams& p, double slope,
                Matrix* attention_out) {
  if (x.rows() != graph.nodes) throw ShapeError("gat_conv: row count does not match node count");
  check_width(x, p.weight.rows(), "gat_conv");
  if (p.attention.rows() != 2 * p.weight.cols() || p.attention.cols() != 1)
    throw ShapeError("gat_conv: attention vector must be " + std::to_string(2 * p.weight.cols()) + "x1");
  const auto wx = ad::matmul(tape, x, p.weight);
  const auto wx_source = ad::gather_rows(tape, wx, graph.source);
  const auto pair = ad::concat_cols(tape, ad::gather_rows(tape, wx, graph.target), wx_source);
  const auto logits = ad::leaky_relu(tape, ad::matmul(tape, pair, p.attention), slope);
  const auto alpha = ad::segment_softmax(tape, logits, graph.target, graph.nodes);
  if (attention_out) *attention_out = alpha.value();
  return ad::weighted_scatter(tape, wx, alpha, graph.source, graph.target, graph.nodes);
}

namespace {

Matrix glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(fan_in, fan_out);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool bias = true) {
  Linear l;
  l.weight = Tensor::parameter(glorot(in, out, rng));
  if (bias) l.bias = Tensor::parameter(Matrix(1, out));
  return l;
}

PointNetParams make_pointnet(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  PointNetParams p;
  // Glorot bounds use the full concatenated fan-in of the message layer.
  const Matrix full = glorot(in + dual::kPositionalWidth, hidden, rng);
  Matrix wx(in, hidden), wp(dual::kPositionalWidth, hidden);
  for (std::size_t r = 0; r < in; ++r) std::copy_n(full.row(r).data(), hidden, wx.row(r).data());
  for (std::size_t r = 0; r < dual::kPositionalWidth; ++r)
    std::copy_n(full.row(in + r).data(), hidden, wp.row(r).data());
  p.local_feature_weight = Tensor::parameter(std::move(wx));
  p.local_position_weight = Tensor::parameter(std::move(wp));
  p.local_bias = Tensor::parameter(Matrix(1, hidden));
  p.local_output = make_linear(hidden, hidden, rng);
  p.global.hidden = make_linear(hidden, hidden, rng);
  p.global.output = make_linear(hidden, hidden, rng);
  return p;
}

TransformerParams make_transformer(std::size_t width, std::mt19937_64& rng) {
  return {make_linear(width, width, rng), make_linear(width, width, rng), make_linear(width, width, rng),
          make_linear(width, width, rng)};
}

}  // namespace

SurrogateModel::SurrogateModel(const ModelConfig& cfg) : config(cfg) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  const auto h = static_cast<std::size_t>(config.hidden_dim);
  pointnet1 = make_pointnet(dual::kStaticWidth + dual::kVariableWidth, h, rng);
  pointnet2 = make_pointnet(h, h, rng);
  transformer1 = make_transformer(h, rng);
  transformer2 = make_transformer(h, rng);
  gat.weight = Tensor::parameter(glorot(h, 1, rng));
  gat.attention = Tensor::parameter(glorot(2, 1, rng));
}

std::vector<std::pair<std::string, Tensor>> SurrogateModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto linear = [&](const std::string& name, const Linear& l) {
    out.emplace_back(name + ".weight", l.weight);
    if (l.bias.valid()) out.emplace_back(name + ".bias", l.bias);
  };
  const auto pointnet = [&](const std::string& name, const PointNetParams& p) {
    out.emplace_back(name + ".local.feature_weight", p.local_feature_weight);
    out.emplace_back(name + ".local.position_weight", p.local_position_weight);
    out.emplace_back(name + ".local.bias", p.local_bias);
    linear(name + ".local.output", p.local_output);
    linear(name + ".global.hidden", p.global.hidden);
    linear(name + ".global.output", p.global.output);
  };
  const auto transformer = [&](const std::string& name, const TransformerParams& p) {
    linear(name + ".query", p.query);
    linear(name + ".key", p.key);
    linear(name + ".value", p.value);
    linear(name + ".skip", p.skip);
  };
  pointnet("pointnet1", pointnet1);
  pointnet("pointnet2", pointnet2);
  transformer("transformer1", transformer1);
  transformer("transformer2", transformer2);
  out.emplace_back("gat.weight", gat.weight);
  out.emplace_back("gat.attention", gat.attention);
  return out;
}

std::vector<Tensor> SurrogateModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<Matrix> SurrogateModel::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& t : parameters()) out.push_back(t.value());
  return out;
}

void SurrogateModel::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ShapeError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].rows() != params[i].rows() || values[i].cols() != params[i].cols())
      throw ShapeError("restore: shape mismatch for parameter " + std::to_string(i));
    params[i].value() = values[i];
  }
}

namespace {

Tensor dropout(Tape& tape, const Tensor& x, const ModelConfig& cfg, const ForwardOptions& opt) {
  if (!opt.training || cfg.dropout <= 0.0 || opt.dropout_rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - cfg.dropout);
  Matrix mask(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - cfg.dropout);
  for (double& m : mask.values()) m = keep(*opt.dropout_rng) ? s : 0.0;
  return ad::mul(tape, x, Tensor::constant(std::move(mask)));
}

}  // namespace

Tensor forward_scaled(Tape& tape, const SurrogateModel& model, const MessageGraph& graph,
                      const dual::FeatureMatrix& features, const ForwardOptions& options) {
  if (!features.standardized) throw UsageError("forward: features must be standardized with the model's standardizer");
  const std::size_t n = features.rows();
  if (n != graph.nodes)
    throw ShapeError("forward: " + std::to_string(n) + " feature rows for " + std::to_string(graph.nodes) + " nodes");

  Matrix x0(n, dual::kStaticWidth + dual::kVariableWidth);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < dual::kStaticWidth; ++c) x0(r, c) = features.statics(r, c);
    x0(r, dual::kStaticWidth) = features.variable(r, 0);
  }
  const auto x = Tensor::constant(std::move(x0));
  const auto pos = Tensor::constant(features.positional);
  const auto& cfg = model.config;

  auto h = dropout(tape, ad::relu(tape, pointnet_conv(tape, x, pos, graph, model.pointnet1)), cfg, options);
  h = dropout(tape, ad::relu(tape, pointnet_conv(tape, h, pos, graph, model.pointnet2)), cfg, options);
  h = dropout(tape, ad::relu(tape, transformer_conv(tape, h, graph, model.transformer1, cfg.transformer_heads)), cfg, options);
  h = dropout(tape, ad::relu(tape, transformer_conv(tape, h, graph, model.transformer2, cfg.transformer_heads)), cfg, options);
  return gat_conv(tape, h, graph, model.gat, cfg.leaky_slope);
}

std::vector<double> forward(const SurrogateModel& model, const MessageGraph& graph, const dual::FeatureMatrix& features) {
  Tape tape(false);
  const auto y = forward_scaled(tape, model, graph, features);
  std::vector<double> out(y.value().values());
  for (double& v : out) v *= model.target_scale;
  return out;
}

double mse_loss(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size())
    throw ShapeError("mse_loss: " + std::to_string(predicted.size()) + " predictions vs " + std::to_string(actual.size()) +
                     " targets");
  if (predicted.empty()) throw ShapeError("mse_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    total += d * d;
  }
  return total / static_cast<double>(predicted.size());
}

Prediction predict(const SurrogateModel& model, const MessageGraph& graph, const dual::FeatureMatrix& features) {
  const auto start = std::chrono::steady_clock::now();
  Prediction p;
  if (features.standardized)
    p.values = infer(model, graph, features);
  else
    p.values = infer(model, graph, dual::apply_standardizer(features, model.standardizer));
  p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return p;
}

namespace {

using json = nlohmann::ordered_json;

json stats_json(const dual::ColumnStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }
dual::ColumnStats stats_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

void save_model(const SurrogateModel& model, const std::filesystem::path& checkpoint, const std::filesystem::path& sidecar) {
  std::vector<ad::NamedTensor> tensors;
  for (const auto& [name, t] : model.named_parameters()) tensors.push_back({name, t.value()});
  ad::save_checkpoint(checkpoint, tensors);

  const auto& c = model.config;
  json j;
  j["config"] = {{"hidden_dim", c.hidden_dim},       {"transformer_heads", c.transformer_heads},
                 {"leaky_slope", c.leaky_slope},     {"learning_rate", c.learning_rate},
                 {"max_epochs", c.max_epochs},       {"patience", c.patience},
                 {"seed", c.seed},                   {"dropout", c.dropout},
                 {"weight_decay", c.weight_decay}};
  json statics = json::array();
  for (const auto& s : model.standardizer.statics) statics.push_back(stats_json(s));
  j["standardizer"] = {{"static", statics},
                       {"pos_x", stats_json(model.standardizer.pos_x)},
                       {"pos_y", stats_json(model.standardizer.pos_y)},
                       {"variable", stats_json(model.standardizer.variable)}};
  j["target_scale"] = model.target_scale;
  io::write_text(sidecar, j.dump(2) + "\n");
}

SurrogateModel load_model(const std::filesystem::path& checkpoint, const std::filesystem::path& sidecar) {
  ModelConfig c;
  dual::Standardizer st;
  double scale = 1.0;
  try {
    const auto j = json::parse(io::read_text(sidecar));
    const auto& jc = j.at("config");
    c.hidden_dim = jc.at("hidden_dim").get<int>();
    c.transformer_heads = jc.at("transformer_heads").get<int>();
    c.leaky_slope = jc.at("leaky_slope").get<double>();
    c.learning_rate = jc.at("learning_rate").get<double>();
    c.max_epochs = jc.at("max_epochs").get<int>();
    c.patience = jc.at("patience").get<int>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    c.dropout = jc.value("dropout", 0.0);
    c.weight_decay = jc.value("weight_decay", 0.0);
    const auto& js = j.at("standardizer");
    const auto& statics = js.at("static");
    if (statics.size() != st.statics.size()) throw ParseError("standardizer must have 4 static columns");
    for (std::size_t i = 0; i < st.statics.size(); ++i) st.statics[i] = stats_from(statics[i]);
    st.pos_x = stats_from(js.at("pos_x"));
    st.pos_y = stats_from(js.at("pos_y"));
    st.variable = stats_from(js.at("variable"));
    scale = j.at("target_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(sidecar.string() + ": " + e.what());
  }

  SurrogateModel model(c);
  model.standardizer = st;
  model.target_scale = scale;
  const auto tensors = ad::load_checkpoint(checkpoint);
  auto params = model.named_parameters();
  if (tensors.size() != params.size())
    throw ValidationError(checkpoint.string() + ": expected " + std::to_string(params.size()) + " tensors, found " +
                          std::to_string(tensors.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    if (tensors[i].name != name) throw ValidationError(checkpoint.string() + ": expected tensor '" + name + "', found '" + tensors[i].name + "'");
    if (tensors[i].value.rows() != t.rows() || tensors[i].value.cols() != t.cols())
      throw ValidationError(checkpoint.string() + ": tensor '" + name + "' has the wrong shape");
    t.value() = tensors[i].value;
  }
  return model;
}

}  // namespace surroflow::gnn
