#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "gradient_suite.hpp"
#include "support.hpp"
#include "surroflow/assign.hpp"
#include "surroflow/error.hpp"
#include "surroflow/gnn.hpp"

using namespace surroflow;
using ad::Tensor;
using testsupport::random_matrix;
using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

namespace {

// Plain-loop reference layers written directly from the layer definitions.
using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix& m) {
  Rows r(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

std::vector<double> linear(const std::vector<double>& x, const gnn::Linear& l) {
  const auto& w = l.weight.value();
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t o = 0; o < w.cols(); ++o) {
    for (std::size_t i = 0; i < w.rows(); ++i) y[o] += x[i] * w(i, o);
    if (l.bias.valid()) y[o] += l.bias.value()(0, o);
  }
  return y;
}

std::vector<double> relu(std::vector<double> v) {
  for (double& x : v) x = std::max(x, 0.0);
  return v;
}

// In-neighbourhood of each node including itself.
std::vector<std::vector<std::size_t>> neighbourhoods(std::size_t n, const Edges& edges) {
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i) nb[i].push_back(i);
  for (const auto& [s, t] : edges)
    if (s != t && std::find(nb[t].begin(), nb[t].end(), s) == nb[t].end()) nb[t].push_back(s);
  return nb;
}

Rows ref_pointnet(const Rows& x, const Rows& pos, const Edges& edges, const gnn::PointNetParams& p) {
  const auto nb = neighbourhoods(x.size(), edges);
  const auto& wx = p.local_feature_weight.value();
  const auto& wp = p.local_position_weight.value();
  const std::size_t h = wx.cols();
  Rows out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> agg(h, -std::numeric_limits<double>::infinity());
    for (std::size_t j : nb[i]) {
      std::vector<double> hidden(h, 0.0);
      for (std::size_t o = 0; o < h; ++o) {
        for (std::size_t f = 0; f < x[j].size(); ++f) hidden[o] += x[j][f] * wx(f, o);
        for (std::size_t f = 0; f < 4; ++f) hidden[o] += (pos[j][f] - pos[i][f]) * wp(f, o);
        hidden[o] += p.local_bias.value()(0, o);
      }
      const auto m = linear(relu(hidden), p.local_output);
      for (std::size_t o = 0; o < h; ++o) agg[o] = std::max(agg[o], m[o]);
    }
    out.push_back(linear(relu(linear(agg, p.global.hidden)), p.global.output));
  }
  return out;
}

Rows ref_transformer(const Rows& x, const Edges& edges, const gnn::TransformerParams& p, std::size_t heads,
                     Rows* attention = nullptr) {
  const auto nb = neighbourhoods(x.size(), edges);
  const std::size_t width = p.query.weight.value().cols(), d = width / heads;
  Rows q, k, v;
  for (const auto& row : x) {
    q.push_back(linear(row, p.query));
    k.push_back(linear(row, p.key));
    v.push_back(linear(row, p.value));
  }
  Rows out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto o = linear(x[i], p.skip);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      std::vector<double> score;
      for (std::size_t j : nb[i]) {
        double s = 0.0;
        for (std::size_t c = hd * d; c < (hd + 1) * d; ++c) s += q[i][c] * k[j][c];
        score.push_back(s / std::sqrt(static_cast<double>(d)));
      }
      const double mx = *std::max_element(score.begin(), score.end());
      double z = 0.0;
      for (double& s : score) z += (s = std::exp(s - mx));
      for (std::size_t n = 0; n < nb[i].size(); ++n) {
        const double a = score[n] / z;
        if (attention) (*attention).push_back({static_cast<double>(i), static_cast<double>(hd), a});
        for (std::size_t c = hd * d; c < (hd + 1) * d; ++c) o[c] += a * v[nb[i][n]][c];
      }
    }
    out.push_back(o);
  }
  return out;
}

std::vector<double> ref_gat(const Rows& x, const Edges& edges, const gnn::GatParams& p, double slope) {
  const auto nb = neighbourhoods(x.size(), edges);
  std::vector<double> z;
  for (const auto& row : x) {
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * p.weight.value()(c, 0);
    z.push_back(s);
  }
  const double a_i = p.attention.value()(0, 0), a_j = p.attention.value()(1, 0);
  std::vector<double> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> e;
    for (std::size_t j : nb[i]) {
      const double raw = a_i * z[i] + a_j * z[j];
      e.push_back(raw > 0.0 ? raw : slope * raw);
    }
    const double mx = *std::max_element(e.begin(), e.end());
    double total = 0.0;
    for (double& s : e) total += (s = std::exp(s - mx));
    double o = 0.0;
    for (std::size_t n = 0; n < nb[i].size(); ++n) o += e[n] / total * z[nb[i][n]];
    out.push_back(o);
  }
  return out;
}

void check_close(const Matrix& got, const Rows& want, double tol = 1e-12) {
  REQUIRE(got.rows() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    REQUIRE(got.cols() == want[i].size());
    for (std::size_t j = 0; j < want[i].size(); ++j)
      CHECK(std::abs(got(i, j) - want[i][j]) <= tol * std::max(1.0, std::abs(want[i][j])));
  }
}

gnn::SurrogateModel scrambled(std::uint64_t seed, int hidden = 8, int heads = 2) {
  gnn::ModelConfig cfg;
  cfg.hidden_dim = hidden;
  cfg.transformer_heads = heads;
  cfg.seed = seed;
  gnn::SurrogateModel m(cfg);
  std::mt19937_64 rng(seed + 100);
  testsupport::scramble(m, rng);
  return m;
}

dual::FeatureMatrix random_features(std::mt19937_64& rng, std::size_t n) {
  return {random_matrix(rng, n, dual::kStaticWidth), random_matrix(rng, n, dual::kPositionalWidth),
          random_matrix(rng, n, 1, 0.0, 1.0), true};
}

// Samples from simulated scenarios on a small city.
struct TinyDataset {
  std::vector<gnn::GraphSample> samples;
  dual::Standardizer standardizer;
};

TinyDataset tiny_dataset(int count) {
  const auto net = network::generate_synthetic_city(4, 4, 0);
  const auto demand = assign::generate_demand(net, 400, 0);
  const assign::MsaOptions opt{30, 0.01, 0.05};
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto base = assign::base_case(net, demand, seeds, opt);
  const auto graph = std::make_shared<gnn::MessageGraph>(gnn::make_message_graph(dual::to_dual(net)));
  std::vector<dual::FeatureMatrix> raw;
  std::vector<std::vector<double>> targets;
  for (int i = 0; i < count; ++i) {
    const scenario::Scenario scn{"s" + std::to_string(i), scenario::build_policy({i % 4, (i + 1) % 4}),
                                 {100u + static_cast<std::uint64_t>(i), 200u + static_cast<std::uint64_t>(i)}};
    const auto y = assign::simulate_scenario(net, scn, demand, base, opt);
    raw.push_back(dual::build_features(net, scn.policy, base.volumes));
    std::vector<double> t;
    for (std::size_t s : net.canonical_order()) t.push_back(y.change[s]);
    targets.push_back(t);
  }
  TinyDataset d;
  d.standardizer = dual::fit_standardizer(raw);
  for (int i = 0; i < count; ++i)
    d.samples.push_back({"s" + std::to_string(i), graph, dual::apply_standardizer(raw[i], d.standardizer), targets[i]});
  return d;
}

}  // namespace

TEST_SUITE("gnn") {
  TEST_CASE("config validation") {
    gnn::ModelConfig c;
    CHECK_NOTHROW(gnn::validate(c));
    c.transformer_heads = 3;
    CHECK_THROWS_AS(gnn::validate(c), ParameterError);
    c = {};
    c.hidden_dim = 0;
    CHECK_THROWS_AS(gnn::validate(c), ParameterError);
    c = {};
    c.patience = -1;
    CHECK_THROWS_AS(gnn::validate(c), ParameterError);
  }

  TEST_CASE("message graphs add self-loops and sort by target") {
    const auto g = gnn::make_message_graph(3, Edges{{0, 1}, {2, 1}, {0, 1}, {1, 1}});
    CHECK(*g.target == std::vector<std::size_t>{0, 1, 1, 1, 2});
    CHECK(*g.source == std::vector<std::size_t>{0, 0, 1, 2, 2});
    CHECK_THROWS_AS((void)gnn::make_message_graph(2, Edges{{0, 2}}), IndexError);
  }

  TEST_CASE("pointnet matches the hand-unrolled layer") {
    const Edges four{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}};
    std::mt19937_64 rng(1);
    auto model = scrambled(1);
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = random_matrix(rng, 4, 5), pos = random_matrix(rng, 4, 4);
      const auto g = gnn::make_message_graph(4, four);
      ad::Tape t(false);
      const auto y = gnn::pointnet_conv(t, Tensor::constant(x), Tensor::constant(pos), g, model.pointnet1);
      check_close(y.value(), ref_pointnet(to_rows(x), to_rows(pos), four, model.pointnet1));
    }
  }

  TEST_CASE("pointnet on an isolated node ignores positions") {
    auto model = scrambled(2);
    std::mt19937_64 rng(2);
    const auto x = random_matrix(rng, 1, 5);
    const auto g = gnn::make_message_graph(1, {});
    ad::Tape t(false);
    const auto a = gnn::pointnet_conv(t, Tensor::constant(x), Tensor::constant(random_matrix(rng, 1, 4)), g, model.pointnet1);
    const auto b = gnn::pointnet_conv(t, Tensor::constant(x), Tensor::constant(random_matrix(rng, 1, 4)), g, model.pointnet1);
    for (std::size_t c = 0; c < a.cols(); ++c) CHECK(a.value()(0, c) == doctest::Approx(b.value()(0, c)).epsilon(1e-12));
  }

  TEST_CASE("transformer matches the hand-unrolled layer on a 3-node chain") {
    const Edges chain{{0, 1}, {1, 2}};
    std::mt19937_64 rng(4);
    auto model = scrambled(4);
    const auto x = random_matrix(rng, 3, 8);
    Matrix attention;
    ad::Tape t(false);
    const auto y = gnn::transformer_conv(t, Tensor::constant(x), gnn::make_message_graph(3, chain), model.transformer1, 2,
                                         &attention);
    check_close(y.value(), ref_transformer(to_rows(x), chain, model.transformer1, 2));
    // rows of attention are edges ordered by (target, source); columns are heads
    REQUIRE(attention.rows() == 5);
    CHECK(attention(0, 0) == 1.0);  // node 0 only sees itself
    CHECK(attention(0, 1) == 1.0);
  }

  TEST_CASE("transformer on a self-loop-only node") {
    auto model = scrambled(5);
    std::mt19937_64 rng(5);
    const auto x = random_matrix(rng, 1, 8);
    ad::Tape t(false);
    const auto y = gnn::transformer_conv(t, Tensor::constant(x), gnn::make_message_graph(1, {}), model.transformer1, 2);
    const auto xs = to_rows(x)[0];
    const auto skip = linear(xs, model.transformer1.skip);
    const auto v = linear(xs, model.transformer1.value);
    for (std::size_t c = 0; c < 8; ++c) CHECK(y.value()(0, c) == doctest::Approx(skip[c] + v[c]).epsilon(1e-14));
  }

  TEST_CASE("gat matches the hand-unrolled layer on a 3-node star") {
    const Edges star{{1, 0}, {2, 0}, {0, 1}, {0, 2}};
    std::mt19937_64 rng(6);
    auto model = scrambled(6);
    const auto x = random_matrix(rng, 3, 8);
    ad::Tape t(false);
    const auto y = gnn::gat_conv(t, Tensor::constant(x), gnn::make_message_graph(3, star), model.gat, 0.2);
    const auto want = ref_gat(to_rows(x), star, model.gat, 0.2);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.value()(i, 0) == doctest::Approx(want[i]).epsilon(1e-12));

    // self-loop-only node returns W x
    ad::Tape t2(false);
    const auto single = gnn::gat_conv(t2, Tensor::constant(random_matrix(rng, 1, 8)), gnn::make_message_graph(1, {}), model.gat, 0.2);
    CHECK(single.rows() == 1);
  }

  TEST_CASE("layers match the references on random graphs") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      std::uniform_int_distribution<std::size_t> size(2, 9);
      const std::size_t n = size(rng);
      Edges edges;
      std::bernoulli_distribution link(0.3);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          if (a != b && link(rng)) edges.emplace_back(a, b);
      const auto g = gnn::make_message_graph(n, edges);
      auto model = scrambled(10 + trial);
      const auto x5 = random_matrix(rng, n, 5), pos = random_matrix(rng, n, 4), x8 = random_matrix(rng, n, 8);
      ad::Tape t(false);
      check_close(gnn::pointnet_conv(t, Tensor::constant(x5), Tensor::constant(pos), g, model.pointnet1).value(),
                  ref_pointnet(to_rows(x5), to_rows(pos), edges, model.pointnet1));
      check_close(gnn::transformer_conv(t, Tensor::constant(x8), g, model.transformer2, 2).value(),
                  ref_transformer(to_rows(x8), edges, model.transformer2, 2));
      const auto gat = gnn::gat_conv(t, Tensor::constant(x8), g, model.gat, 0.2);
      const auto want = ref_gat(to_rows(x8), edges, model.gat, 0.2);
      for (std::size_t i = 0; i < n; ++i) CHECK(gat.value()(i, 0) == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("attention distributions are probability vectors") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      const auto g = testsupport::random_message_graph(rng, 3, 12);
      auto model = scrambled(20 + trial);
      const auto x = random_matrix(rng, g.nodes, 8, -3.0, 3.0);
      Matrix at, ag;
      ad::Tape t(false);
      (void)gnn::transformer_conv(t, Tensor::constant(x), g, model.transformer1, 2, &at);
      (void)gnn::gat_conv(t, Tensor::constant(x), g, model.gat, 0.2, &ag);
      for (const Matrix* a : {&at, &ag}) {
        for (std::size_t h = 0; h < a->cols(); ++h) {
          std::vector<double> total(g.nodes, 0.0);
          for (std::size_t e = 0; e < g.edge_count(); ++e) {
            CHECK((*a)(e, h) >= 0.0);
            total[(*g.target)[e]] += (*a)(e, h);
          }
          for (double s : total) CHECK(std::abs(s - 1.0) <= 1e-12);
        }
      }
    }
  }

  TEST_CASE("every layer passes the finite-difference check on 20 random instances") {
    std::mt19937_64 rng(99);
    for (const auto& c : testsupport::layer_gradient_cases()) {
      CAPTURE(c.name);
      double worst = 0.0;
      for (int i = 0; i < 20; ++i) worst = std::max(worst, c.run(rng).max_relative_error);
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("forward has one output per node and is permutation equivariant") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t n = 12;
      Edges edges;
      std::bernoulli_distribution link(0.25);
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          if (a != b && link(rng)) edges.emplace_back(a, b);
      auto model = scrambled(30 + trial, 16, 4);
      const auto f = random_features(rng, n);
      const auto y = gnn::forward(model, gnn::make_message_graph(n, edges), f);
      REQUIRE(y.size() == n);

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      Edges pe;
      for (const auto& [a, b] : edges) pe.emplace_back(perm[a], perm[b]);
      dual::FeatureMatrix pf{Matrix(n, 4), Matrix(n, 4), Matrix(n, 1), true};
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
          pf.statics(perm[i], c) = f.statics(i, c);
          pf.positional(perm[i], c) = f.positional(i, c);
        }
        pf.variable(perm[i], 0) = f.variable(i, 0);
      }
      const auto py = gnn::forward(model, gnn::make_message_graph(n, pe), pf);
      for (std::size_t i = 0; i < n; ++i) CHECK(py[perm[i]] == doctest::Approx(y[i]).epsilon(1e-10));
    }
  }

  TEST_CASE("fresh model on zero-variance features is finite") {
    gnn::SurrogateModel model(gnn::ModelConfig{});
    const auto net = network::generate_synthetic_city(4, 2, 0);
    const std::vector<double> flat(net.segment_count(), 10.0);
    const std::vector<dual::FeatureMatrix> set{dual::build_features(net, scenario::build_policy({0}), flat)};
    const auto st = dual::fit_standardizer(set);
    const auto f = dual::apply_standardizer(set[0], st);
    const auto y = gnn::forward(model, gnn::make_message_graph(dual::to_dual(net)), f);
    for (double v : y) CHECK(std::isfinite(v));
  }

  TEST_CASE("forward rejects raw features") {
    gnn::SurrogateModel model(gnn::ModelConfig{});
    std::mt19937_64 rng(12);
    auto f = random_features(rng, 3);
    f.standardized = false;
    CHECK_THROWS_AS((void)gnn::forward(model, gnn::make_message_graph(3, {}), f), UsageError);
    CHECK_THROWS_AS((void)gnn::infer(model, gnn::make_message_graph(3, {}), f), UsageError);
  }

  TEST_CASE("tape-free inference equals the tape forward") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
      const auto g = testsupport::random_message_graph(rng, 5, 30);
      auto model = scrambled(40 + trial, 16, 4);
      model.target_scale = 3.5;
      const auto f = random_features(rng, g.nodes);
      const auto a = gnn::forward(model, g, f);
      const auto b = gnn::infer(model, g, f);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("mse loss") {
    const std::vector<double> y{1.0, -2.0, 3.5};
    CHECK(gnn::mse_loss(y, y) == 0.0);
    const std::vector<double> shifted{1.5, -1.5, 4.0};
    CHECK(gnn::mse_loss(shifted, y) == doctest::Approx(0.25));
    CHECK(gnn::mse_loss(std::vector<double>{1, 1}, std::vector<double>{0, 2}) == 1.0);
    CHECK_THROWS_AS((void)gnn::mse_loss(std::vector<double>{1}, y), ShapeError);
  }

  TEST_CASE("training is deterministic and keeps the best epoch") {
    auto data = tiny_dataset(6);
    std::vector<gnn::GraphSample> train(data.samples.begin(), data.samples.begin() + 4);
    std::vector<gnn::GraphSample> val(data.samples.begin() + 4, data.samples.end());
    gnn::ModelConfig cfg;
    cfg.hidden_dim = 16;
    cfg.transformer_heads = 4;
    cfg.max_epochs = 6;
    cfg.seed = 5;
    const double scale = gnn::fit_target_scale(train);
    int calls = 0;
    const auto a = gnn::train(cfg, train, val, data.standardizer, scale, [&](int, double, double) { ++calls; });
    const auto b = gnn::train(cfg, train, val, data.standardizer, scale);
    CHECK(calls == static_cast<int>(a.history.validation_mse.size()));
    CHECK(a.model.snapshot() == b.model.snapshot());
    CHECK(a.history.train_mse == b.history.train_mse);
    const auto& v = a.history.validation_mse;
    const double best = *std::min_element(v.begin(), v.end());
    CHECK(best <= v.front());
    CHECK(v[static_cast<std::size_t>(a.history.best_epoch - 1)] == best);
    // the returned parameters are those of the best epoch
    double pooled = 0.0;
    std::size_t n = 0;
    for (const auto& s : val) {
      const auto yhat = gnn::infer(a.model, *s.graph, s.features);
      for (std::size_t i = 0; i < yhat.size(); ++i) pooled += (yhat[i] - s.targets[i]) * (yhat[i] - s.targets[i]);
      n += yhat.size();
    }
    CHECK(pooled / static_cast<double>(n) == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("patience zero stops at the first epoch without improvement") {
    auto data = tiny_dataset(5);
    std::vector<gnn::GraphSample> train(data.samples.begin(), data.samples.begin() + 4);
    std::vector<gnn::GraphSample> val(data.samples.begin() + 4, data.samples.end());
    gnn::ModelConfig cfg;
    cfg.hidden_dim = 8;
    cfg.transformer_heads = 2;
    cfg.max_epochs = 60;
    cfg.patience = 0;
    cfg.learning_rate = 0.05;  // large steps make a non-improving epoch come quickly
    const auto r = gnn::train(cfg, train, val, data.standardizer, gnn::fit_target_scale(train));
    const auto& v = r.history.validation_mse;
    if (static_cast<int>(v.size()) < cfg.max_epochs) {
      CHECK(static_cast<int>(v.size()) == r.history.best_epoch + 1);
      CHECK(v.back() >= v[v.size() - 2]);
      for (std::size_t i = 1; i + 1 < v.size(); ++i) CHECK(v[i] < v[i - 1]);
    }
  }

  TEST_CASE("training rejects bad input") {
    auto data = tiny_dataset(3);
    gnn::ModelConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS_AS((void)gnn::train(cfg, {}, data.samples, data.standardizer, 1.0), ParameterError);
    CHECK_THROWS_AS((void)gnn::train(cfg, data.samples, {}, data.standardizer, 1.0), ParameterError);
    CHECK_THROWS_AS((void)gnn::train(cfg, data.samples, data.samples, data.standardizer, 0.0), ParameterError);
    auto poisoned = data.samples;
    poisoned[0].targets[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)gnn::train(cfg, poisoned, data.samples, data.standardizer, 1.0), TrainingError);
  }

  TEST_CASE("model files round-trip and predict is pure") {
    testsupport::TempDir dir("model");
    auto model = scrambled(50, 16, 4);
    model.target_scale = 12.5;
    model.standardizer.statics[1] = {800.0, 300.0};
    gnn::save_model(model, dir.path() / "m.ckpt", dir.path() / "m.json");
    const auto back = gnn::load_model(dir.path() / "m.ckpt", dir.path() / "m.json");
    CHECK(back.config == model.config);
    CHECK(back.standardizer == model.standardizer);
    CHECK(back.target_scale == model.target_scale);
    CHECK(back.snapshot() == model.snapshot());

    std::mt19937_64 rng(14);
    const auto g = testsupport::random_message_graph(rng, 6, 6);
    auto raw = random_features(rng, 6);
    raw.standardized = false;
    const auto p1 = gnn::predict(back, g, raw);
    const auto p2 = gnn::predict(back, g, raw);
    CHECK(p1.values == p2.values);
    CHECK(p1.seconds >= 0.0);
    CHECK(p1.values == gnn::forward(back, g, dual::apply_standardizer(raw, back.standardizer)));
  }
}
