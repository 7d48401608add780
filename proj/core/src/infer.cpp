#include <algorithm>
#include <cmath>
#include <limits>

#include "surroflow/error.hpp"
#include "surroflow/gnn.hpp"

// Tape-free forward pass. Message graphs are sorted by target, so every
// aggregation runs over a contiguous edge range and no per-edge tensors are
// materialized except the PointNet hidden layer.
namespace surroflow::gnn {

namespace {

struct Ranges {
  const std::vector<std::size_t>& source;
  std::vector<std::size_t> start;  // nodes + 1 entries
};

Ranges edge_ranges(const MessageGraph& g) {
  Ranges r{*g.source, std::vector<std::size_t>(g.nodes + 1, 0)};
  const auto& target = *g.target;
  for (std::size_t e = 0; e < target.size(); ++e) {
    if (target[e] >= g.nodes || r.source[e] >= g.nodes) throw IndexError("message graph index out of range");
    if (e > 0 && target[e] < target[e - 1]) throw UsageError("message graph edges must be sorted by target");
    ++r.start[target[e] + 1];
  }
  for (std::size_t i = 0; i < g.nodes; ++i) r.start[i + 1] += r.start[i];
  return r;
}

// Buffers reused across calls so repeated predictions do not reallocate.
struct Workspace {
  Matrix x, xw, pw, hidden, message, pooled, inner, h1, h2, q, k, v;
  std::vector<double> score, agg;
};

void check(const Matrix& m, const char* stage) {
  if (!m.all_finite()) throw NumericError(std::string(stage) + ": produced a non-finite value");
}

void add_bias(Matrix& m, const ad::Tensor& bias) {
  if (!bias.valid()) return;
  const double* b = bias.value().data();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row(r).data();
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += b[c];
  }
}

void affine(const Matrix& x, const Linear& l, Matrix& out) {
  kernels::matmul(x, l.weight.value(), out);
  add_bias(out, l.bias);
}

void relu_inplace(Matrix& m) {
  for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
}

void pointnet(const Matrix& x, const Matrix& pos, const Ranges& g, const PointNetParams& p, Workspace& w,
              Matrix& out) {
  Matrix& xw = w.xw;
  Matrix& pw = w.pw;
  kernels::matmul(x, p.local_feature_weight.value(), xw);
  kernels::matmul(pos, p.local_position_weight.value(), pw);
  const std::size_t n = x.rows(), h = xw.cols();
  const double* bias = p.local_bias.value().data();

  Matrix& hidden = w.hidden;
  if (hidden.rows() != g.source.size() || hidden.cols() != h) hidden = Matrix(g.source.size(), h);
  for (std::size_t i = 0; i < n; ++i) {
    const double* pi = pw.row(i).data();
    for (std::size_t e = g.start[i]; e < g.start[i + 1]; ++e) {
      const std::size_t j = g.source[e];
      const double* xj = xw.row(j).data();
      const double* pj = pw.row(j).data();
      double* out = hidden.row(e).data();
      for (std::size_t c = 0; c < h; ++c) {
        const double v = ((xj[c] + pj[c]) - pi[c]) + bias[c];
        out[c] = v > 0.0 ? v : 0.0;
      }
    }
  }
  Matrix& message = w.message;
  affine(hidden, p.local_output, message);

  Matrix& pooled = w.pooled;
  if (pooled.rows() != n || pooled.cols() != h) pooled = Matrix(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    double* out = pooled.row(i).data();
    if (g.start[i] == g.start[i + 1]) {
      std::fill_n(out, h, 0.0);
      continue;
    }
    std::copy_n(message.row(g.start[i]).data(), h, out);
    for (std::size_t e = g.start[i] + 1; e < g.start[i + 1]; ++e) {
      const double* m = message.row(e).data();
      for (std::size_t c = 0; c < h; ++c) out[c] = m[c] > out[c] ? m[c] : out[c];
    }
  }
  affine(pooled, p.global.hidden, w.inner);
  relu_inplace(w.inner);
  affine(w.inner, p.global.output, out);
  check(out, "pointnet_conv");
}

void transformer(const Matrix& x, const Ranges& g, const TransformerParams& p, std::size_t heads, Workspace& w,
                 Matrix& out) {
  const Matrix& q = w.q;
  const Matrix& k = w.k;
  const Matrix& v = w.v;
  affine(x, p.query, w.q);
  affine(x, p.key, w.k);
  affine(x, p.value, w.v);
  affine(x, p.skip, out);
  const std::size_t n = x.rows(), width = q.cols(), d = width / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  auto& score = w.score;
  auto& agg = w.agg;
  agg.resize(width);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t first = g.start[i], count = g.start[i + 1] - first;
    if (count == 0) continue;
    score.assign(count * heads, 0.0);
    const double* qi = q.row(i).data();
    for (std::size_t e = 0; e < count; ++e) {
      const double* kj = k.row(g.source[first + e]).data();
      for (std::size_t hd = 0; hd < heads; ++hd) {
        double acc = 0.0;
        for (std::size_t c = hd * d; c < (hd + 1) * d; ++c) acc += qi[c] * kj[c];
        score[e * heads + hd] = acc * inv_sqrt_d;
      }
    }
    std::fill(agg.begin(), agg.end(), 0.0);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < count; ++e) peak = std::max(peak, score[e * heads + hd]);
      double total = 0.0;
      for (std::size_t e = 0; e < count; ++e) {
        double& s = score[e * heads + hd];
        s = std::exp(s - peak);
        total += s;
      }
      for (std::size_t e = 0; e < count; ++e) {
        const double alpha = score[e * heads + hd] / total;
        const double* vj = v.row(g.source[first + e]).data();
        for (std::size_t c = hd * d; c < (hd + 1) * d; ++c) agg[c] += vj[c] * alpha;
      }
    }
    double* o = out.row(i).data();
    for (std::size_t c = 0; c < width; ++c) o[c] = agg[c] + o[c];
  }
  check(out, "transformer_conv");
}

Matrix gat(const Matrix& x, const Ranges& g, const GatParams& p, double slope) {
  Matrix wx;
  kernels::matmul(x, p.weight.value(), wx);
  const std::size_t n = x.rows(), width = wx.cols();
  const Matrix& a = p.attention.value();
  Matrix out(n, width);
  std::vector<double> logit;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t first = g.start[i], count = g.start[i + 1] - first;
    if (count == 0) continue;
    logit.assign(count, 0.0);
    const double* wi = wx.row(i).data();
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < count; ++e) {
      const double* wj = wx.row(g.source[first + e]).data();
      double s = 0.0;
      for (std::size_t c = 0; c < width; ++c) s += wi[c] * a(c, 0) + wj[c] * a(width + c, 0);
      s = s < 0.0 ? s * slope : s;
      logit[e] = s;
      peak = std::max(peak, s);
    }
    double total = 0.0;
    for (double& s : logit) {
      s = std::exp(s - peak);
      total += s;
    }
    double* o = out.row(i).data();
    for (std::size_t e = 0; e < count; ++e) {
      const double alpha = logit[e] / total;
      const double* wj = wx.row(g.source[first + e]).data();
      for (std::size_t c = 0; c < width; ++c) o[c] += wj[c] * alpha;
    }
  }
  check(out, "gat_conv");
  return out;
}

}  // namespace

std::vector<double> infer(const SurrogateModel& model, const MessageGraph& graph, const dual::FeatureMatrix& features) {
  if (!features.standardized) throw UsageError("infer: features must be standardized with the model's standardizer");
  const std::size_t n = features.rows();
  if (n != graph.nodes)
    throw ShapeError("infer: " + std::to_string(n) + " feature rows for " + std::to_string(graph.nodes) + " nodes");
  const auto ranges = edge_ranges(graph);
  thread_local Workspace w;

  Matrix& x = w.x;
  if (x.rows() != n || x.cols() != dual::kStaticWidth + dual::kVariableWidth)
    x = Matrix(n, dual::kStaticWidth + dual::kVariableWidth);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < dual::kStaticWidth; ++c) x(r, c) = features.statics(r, c);
    x(r, dual::kStaticWidth) = features.variable(r, 0);
  }
  const auto heads = static_cast<std::size_t>(model.config.transformer_heads);
  pointnet(x, features.positional, ranges, model.pointnet1, w, w.h1);
  relu_inplace(w.h1);
  pointnet(w.h1, features.positional, ranges, model.pointnet2, w, w.h2);
  relu_inplace(w.h2);
  transformer(w.h2, ranges, model.transformer1, heads, w, w.h1);
  relu_inplace(w.h1);
  transformer(w.h1, ranges, model.transformer2, heads, w, w.h2);
  relu_inplace(w.h2);
  const Matrix y = gat(w.h2, ranges, model.gat, model.config.leaky_slope);

  std::vector<double> out(y.values());
  for (double& v : out) v *= model.target_scale;
  return out;
}

}  // namespace surroflow::gnn
