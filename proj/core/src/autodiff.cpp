#include "surroflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "surroflow/error.hpp"

namespace surroflow::ad {

namespace {

constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.value().shape_string() + " and " + b.value().shape_string();
}

// dst[i] += factor * src[i]
void axpy(double* __restrict dst, const double* __restrict src, std::size_t n, double factor = 1.0) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += factor * src[i];
}

void check_index(const Index& index, std::size_t bound, const char* op) {
  if (!index) throw IndexError(std::string(op) + ": null index");
  for (std::size_t i : *index)
    if (i >= bound)
      throw IndexError(std::string(op) + ": index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(bound) + ")");
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto d = std::make_shared<TensorData>();
  d->value = std::move(value);
  return Tensor(std::move(d));
}

Tensor Tensor::parameter(Matrix value) {
  auto d = std::make_shared<TensorData>();
  d->grad = Matrix(value.rows(), value.cols());
  d->value = std::move(value);
  d->requires_grad = true;
  return Tensor(std::move(d));
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar " + value().shape_string());
  return value()(0, 0);
}

void Tensor::zero_grad() {
  if (data_->requires_grad) data_->grad.fill(0.0);
}

Index make_index(std::vector<std::size_t> values) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(values));
}

Tensor Tape::make_output(Matrix value, std::initializer_list<const Tensor*> inputs, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
  auto d = std::make_shared<TensorData>();
  d->value = std::move(value);
  if (recording_)
    for (const Tensor* in : inputs) d->requires_grad = d->requires_grad || in->requires_grad();
  return Tensor(std::move(d));
}

void Tape::record(const Tensor& out, std::function<void()> backward_fn) {
  entries_.push_back({out.data(), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backward needs a 1x1 loss, got " + loss.value().shape_string());
  if (entries_.empty()) throw UsageError("backward on an empty tape");
  if (!loss.requires_grad()) throw UsageError("loss does not depend on any parameter");

  bool loss_recorded = false;
  for (auto& e : entries_) {
    e.out->grad = Matrix(e.out->value.rows(), e.out->value.cols());
    loss_recorded = loss_recorded || e.out == loss.data();
  }
  if (loss_recorded)
    loss.data()->grad(0, 0) = 1.0;
  else
    loss.data()->grad(0, 0) += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: incompatible shapes " + shapes(a, b));
  Matrix out;
  kernels::matmul(a.value(), b.value(), out);
  auto y = tape.make_output(std::move(out), {&a, &b}, "matmul");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), Y = y.data()] {
      if (A->requires_grad) kernels::matmul_nt(Y->grad, B->value, A->grad, true);
      if (B->requires_grad) kernels::matmul_tn(A->value, Y->grad, B->grad, true);
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1;
  if (b.cols() != a.cols() || (!broadcast && b.rows() != a.rows()))
    throw ShapeError("add: incompatible shapes " + shapes(a, b));
  Matrix out = a.value();
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) axpy(out.row(r).data(), b.value().row(broadcast ? 0 : r).data(), cols);
  auto y = tape.make_output(std::move(out), {&a, &b}, "add");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), Y = y.data(), broadcast] {
      if (A->requires_grad) axpy(A->grad.data(), Y->grad.data(), Y->grad.size());
      if (B->requires_grad) {
        if (broadcast) {
          double* dst = B->grad.data();
          for (std::size_t r = 0; r < Y->grad.rows(); ++r) axpy(dst, Y->grad.row(r).data(), Y->grad.cols());
        } else {
          axpy(B->grad.data(), Y->grad.data(), Y->grad.size());
        }
      }
    });
  }
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("sub: incompatible shapes " + shapes(a, b));
  Matrix out = a.value();
  axpy(out.data(), b.value().data(), out.size(), -1.0);
  auto y = tape.make_output(std::move(out), {&a, &b}, "sub");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), Y = y.data()] {
      if (A->requires_grad) axpy(A->grad.data(), Y->grad.data(), Y->grad.size());
      if (B->requires_grad) axpy(B->grad.data(), Y->grad.data(), Y->grad.size(), -1.0);
    });
  }
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("mul: incompatible shapes " + shapes(a, b));
  Matrix out = a.value();
  {
    double* __restrict o = out.data();
    const double* __restrict bv = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] *= bv[i];
  }
  auto y = tape.make_output(std::move(out), {&a, &b}, "mul");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), Y = y.data()] {
      const double* __restrict g = Y->grad.data();
      const std::size_t n = Y->grad.size();
      if (A->requires_grad) {
        double* __restrict da = A->grad.data();
        const double* __restrict bv = B->value.data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
      }
      if (B->requires_grad) {
        double* __restrict db = B->grad.data();
        const double* __restrict av = A->value.data();
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
      }
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Matrix out = a.value();
  for (double& v : out.values()) v *= factor;
  auto y = tape.make_output(std::move(out), {&a}, "scale");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), Y = y.data(), factor] {
      axpy(A->grad.data(), Y->grad.data(), Y->grad.size(), factor);
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch " + shapes(a, b));
  const std::size_t ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy_n(a.value().row(r).data(), ca, out.row(r).data());
    std::copy_n(b.value().row(r).data(), cb, out.row(r).data() + ca);
  }
  auto y = tape.make_output(std::move(out), {&a, &b}, "concat_cols");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), Y = y.data(), ca, cb] {
      for (std::size_t r = 0; r < Y->grad.rows(); ++r) {
        auto g = Y->grad.row(r);
        if (A->requires_grad)
          for (std::size_t c = 0; c < ca; ++c) A->grad(r, c) += g[c];
        if (B->requires_grad)
          for (std::size_t c = 0; c < cb; ++c) B->grad(r, c) += g[ca + c];
      }
    });
  }
  return y;
}

Tensor leaky_relu(Tape& tape, const Tensor& a, double slope) {
  Matrix out = a.value();
  if (slope == 0.0) {
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : out.values()) v = v < 0.0 ? v * slope : v;
  }
  auto y = tape.make_output(std::move(out), {&a}, "leaky_relu");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), Y = y.data(), slope] {
      const double* __restrict g = Y->grad.data();
      const double* __restrict x = A->value.data();
      double* __restrict d = A->grad.data();
      for (std::size_t i = 0; i < Y->grad.size(); ++i) d[i] += x[i] > 0.0 ? g[i] : slope * g[i];
    });
  }
  return y;
}

Tensor relu(Tape& tape, const Tensor& a) { return leaky_relu(tape, a, 0.0); }

Tensor rowwise_scale(Tape& tape, const Tensor& x, const Tensor& s) {
  const std::size_t blocks = s.cols();
  if (s.rows() != x.rows() || blocks == 0 || x.cols() % blocks != 0)
    throw ShapeError("rowwise_scale: incompatible shapes " + shapes(x, s));
  const std::size_t width = x.cols() / blocks;
  Matrix out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r).data();
    for (std::size_t b = 0; b < blocks; ++b) {
      const double f = s.value()(r, b);
      for (std::size_t c = 0; c < width; ++c) row[b * width + c] *= f;
    }
  }
  auto y = tape.make_output(std::move(out), {&x, &s}, "rowwise_scale");
  if (y.requires_grad()) {
    tape.record(y, [X = x.data(), S = s.data(), Y = y.data(), width, blocks] {
      for (std::size_t r = 0; r < Y->grad.rows(); ++r) {
        const double* g = Y->grad.row(r).data();
        const double* xv = X->value.row(r).data();
        for (std::size_t b = 0; b < blocks; ++b) {
          const std::size_t o = b * width;
          if (X->requires_grad) {
            const double f = S->value(r, b);
            double* dx = X->grad.row(r).data() + o;
            for (std::size_t c = 0; c < width; ++c) dx[c] += g[o + c] * f;
          }
          if (S->requires_grad) {
            double acc = 0.0;
            for (std::size_t c = 0; c < width; ++c) acc += g[o + c] * xv[o + c];
            S->grad(r, b) += acc;
          }
        }
      }
    });
  }
  return y;
}

Tensor block_sum(Tape& tape, const Tensor& x, std::size_t blocks) {
  if (blocks == 0 || x.cols() % blocks != 0)
    throw ShapeError("block_sum: " + std::to_string(x.cols()) + " columns not divisible into " +
                     std::to_string(blocks) + " blocks");
  const std::size_t width = x.cols() / blocks;
  Matrix out(x.rows(), blocks);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* row = x.value().row(r).data();
    for (std::size_t b = 0; b < blocks; ++b) {
      double acc = 0.0;
      for (std::size_t c = 0; c < width; ++c) acc += row[b * width + c];
      out(r, b) = acc;
    }
  }
  auto y = tape.make_output(std::move(out), {&x}, "block_sum");
  if (y.requires_grad()) {
    tape.record(y, [X = x.data(), Y = y.data(), width, blocks] {
      for (std::size_t r = 0; r < X->grad.rows(); ++r) {
        double* g = X->grad.row(r).data();
        for (std::size_t b = 0; b < blocks; ++b) {
          const double up = Y->grad(r, b);
          for (std::size_t c = 0; c < width; ++c) g[b * width + c] += up;
        }
      }
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  auto y = tape.make_output(Matrix(1, 1, total), {&a}, "sum");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), Y = y.data()] {
      const double g = Y->grad(0, 0);
      for (double& v : A->grad.values()) v += g;
    });
  }
  return y;
}

Tensor mse(Tape& tape, const Tensor& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("mse: prediction " + pred.value().shape_string() + " vs target " +
                     target.shape_string());
  if (pred.value().size() == 0) throw ShapeError("mse: empty input");
  const double n = static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = pred.value().values()[i] - target.values()[i];
    total += d * d;
  }
  auto y = tape.make_output(Matrix(1, 1, total / n), {&pred}, "mse");
  if (y.requires_grad()) {
    tape.record(y, [P = pred.data(), Y = y.data(), target, n] {
      const double g = Y->grad(0, 0) * 2.0 / n;
      for (std::size_t i = 0; i < target.size(); ++i)
        P->grad.values()[i] += g * (P->value.values()[i] - target.values()[i]);
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& x, const Index& index) {
  check_index(index, x.rows(), "gather_rows");
  const std::size_t cols = x.cols();
  Matrix out(index->size(), cols);
  for (std::size_t r = 0; r < index->size(); ++r)
    std::copy_n(x.value().row((*index)[r]).data(), cols, out.row(r).data());
  auto y = tape.make_output(std::move(out), {&x}, "gather_rows");
  if (y.requires_grad()) {
    tape.record(y, [X = x.data(), Y = y.data(), index] {
      const std::size_t cols = Y->grad.cols();
      for (std::size_t r = 0; r < index->size(); ++r)
        axpy(X->grad.row((*index)[r]).data(), Y->grad.row(r).data(), cols);
    });
  }
  return y;
}

Tensor scatter_sum(Tape& tape, const Tensor& x, const Index& index, std::size_t out_rows) {
  check_index(index, out_rows, "scatter_sum");
  if (index->size() != x.rows())
    throw ShapeError("scatter_sum: index length " + std::to_string(index->size()) + " vs " +
                     std::to_string(x.rows()) + " rows");
  const std::size_t cols = x.cols();
  Matrix out(out_rows, cols);
  for (std::size_t r = 0; r < x.rows(); ++r) axpy(out.row((*index)[r]).data(), x.value().row(r).data(), cols);
  auto y = tape.make_output(std::move(out), {&x}, "scatter_sum");
  if (y.requires_grad()) {
    tape.record(y, [X = x.data(), Y = y.data(), index] {
      const std::size_t cols = X->grad.cols();
      for (std::size_t r = 0; r < index->size(); ++r)
        axpy(X->grad.row(r).data(), Y->grad.row((*index)[r]).data(), cols);
    });
  }
  return y;
}

Tensor scatter_max(Tape& tape, const Tensor& x, const Index& index, std::size_t out_rows) {
  check_index(index, out_rows, "scatter_max");
  if (index->size() != x.rows())
    throw ShapeError("scatter_max: index length " + std::to_string(index->size()) + " vs " +
                     std::to_string(x.rows()) + " rows");
  const std::size_t cols = x.cols();
  Matrix out(out_rows, cols);
  std::vector<std::size_t> argmax(out_rows * cols, kNoRow);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const std::size_t o = (*index)[r];
    auto src = x.value().row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      auto& arg = argmax[o * cols + c];
      if (arg == kNoRow || src[c] > out(o, c)) {
        arg = r;
        out(o, c) = src[c];
      }
    }
  }
  auto y = tape.make_output(std::move(out), {&x}, "scatter_max");
  if (y.requires_grad()) {
    tape.record(y, [X = x.data(), Y = y.data(), argmax = std::move(argmax), cols] {
      for (std::size_t i = 0; i < argmax.size(); ++i)
        if (argmax[i] != kNoRow) X->grad(argmax[i], i % cols) += Y->grad.values()[i];
    });
  }
  return y;
}

Tensor segment_softmax(Tape& tape, const Tensor& scores, const Index& segment, std::size_t segments) {
  check_index(segment, segments, "segment_softmax");
  if (segment->size() != scores.rows())
    throw ShapeError("segment_softmax: index length " + std::to_string(segment->size()) + " vs " +
                     std::to_string(scores.rows()) + " rows");
  const std::size_t cols = scores.cols();
  const auto& s = scores.value();
  Matrix peak(segments, cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) peak((*segment)[r], c) = std::max(peak((*segment)[r], c), s(r, c));
  Matrix out(s.rows(), cols);
  Matrix total(segments, cols);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const std::size_t g = (*segment)[r];
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = std::exp(s(r, c) - peak(g, c));
      total(g, c) += out(r, c);
    }
  }
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= total((*segment)[r], c);

  auto y = tape.make_output(std::move(out), {&scores}, "segment_softmax");
  if (y.requires_grad()) {
    tape.record(y, [S = scores.data(), Y = y.data(), segment, segments, cols] {
      const auto& a = Y->value;
      const auto& g = Y->grad;
      Matrix dot(segments, cols);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) dot((*segment)[r], c) += a(r, c) * g(r, c);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c)
          S->grad(r, c) += a(r, c) * (g(r, c) - dot((*segment)[r], c));
    });
  }
  return y;
}

namespace {

void check_pair(const Index& a, const Index& b, const char* op) {
  if (!a || !b) throw IndexError(std::string(op) + ": null index");
  if (a->size() != b->size())
    throw ShapeError(std::string(op) + ": index lengths " + std::to_string(a->size()) + " and " +
                     std::to_string(b->size()) + " differ");
}

}  // namespace

Tensor edge_difference_relu(Tape& tape, const Tensor& a, const Tensor& b, const Tensor& bias, const Index& source,
                            const Index& target) {
  check_pair(source, target, "edge_difference_relu");
  check_index(source, a.rows(), "edge_difference_relu");
  check_index(target, b.rows(), "edge_difference_relu");
  const std::size_t cols = a.cols();
  if (b.cols() != cols || bias.rows() != 1 || bias.cols() != cols)
    throw ShapeError("edge_difference_relu: incompatible shapes " + shapes(a, b) + ", " + bias.value().shape_string());
  Matrix out(source->size(), cols);
  const double* bv = bias.value().data();
  for (std::size_t e = 0; e < source->size(); ++e) {
    const double* __restrict av = a.value().row((*source)[e]).data();
    const double* __restrict tv = b.value().row((*target)[e]).data();
    double* __restrict o = out.row(e).data();
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = av[c] - tv[c] + bv[c];
      o[c] = v > 0.0 ? v : 0.0;
    }
  }
  auto y = tape.make_output(std::move(out), {&a, &b, &bias}, "edge_difference_relu");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), C = bias.data(), Y = y.data(), source, target, cols] {
      std::vector<double> g(cols);
      for (std::size_t e = 0; e < source->size(); ++e) {
        const double* __restrict gy = Y->grad.row(e).data();
        const double* __restrict yv = Y->value.row(e).data();
        for (std::size_t c = 0; c < cols; ++c) g[c] = yv[c] > 0.0 ? gy[c] : 0.0;
        if (A->requires_grad) axpy(A->grad.row((*source)[e]).data(), g.data(), cols);
        if (B->requires_grad) axpy(B->grad.row((*target)[e]).data(), g.data(), cols, -1.0);
        if (C->requires_grad) axpy(C->grad.data(), g.data(), cols);
      }
    });
  }
  return y;
}

Tensor edge_dot(Tape& tape, const Tensor& a, const Tensor& b, const Index& a_index, const Index& b_index,
                std::size_t blocks) {
  check_pair(a_index, b_index, "edge_dot");
  check_index(a_index, a.rows(), "edge_dot");
  check_index(b_index, b.rows(), "edge_dot");
  if (a.cols() != b.cols()) throw ShapeError("edge_dot: incompatible shapes " + shapes(a, b));
  if (blocks == 0 || a.cols() % blocks != 0)
    throw ShapeError("edge_dot: " + std::to_string(a.cols()) + " columns not divisible into " +
                     std::to_string(blocks) + " blocks");
  const std::size_t width = a.cols() / blocks;
  Matrix out(a_index->size(), blocks);
  for (std::size_t e = 0; e < a_index->size(); ++e) {
    const double* av = a.value().row((*a_index)[e]).data();
    const double* bv = b.value().row((*b_index)[e]).data();
    for (std::size_t k = 0; k < blocks; ++k) {
      double acc = 0.0;
      for (std::size_t c = k * width; c < (k + 1) * width; ++c) acc += av[c] * bv[c];
      out(e, k) = acc;
    }
  }
  auto y = tape.make_output(std::move(out), {&a, &b}, "edge_dot");
  if (y.requires_grad()) {
    tape.record(y, [A = a.data(), B = b.data(), Y = y.data(), a_index, b_index, blocks, width] {
      for (std::size_t e = 0; e < a_index->size(); ++e) {
        const std::size_t ia = (*a_index)[e];
        const std::size_t ib = (*b_index)[e];
        for (std::size_t k = 0; k < blocks; ++k) {
          const double g = Y->grad(e, k);
          const std::size_t o = k * width;
          if (A->requires_grad) axpy(A->grad.row(ia).data() + o, B->value.row(ib).data() + o, width, g);
          if (B->requires_grad) axpy(B->grad.row(ib).data() + o, A->value.row(ia).data() + o, width, g);
        }
      }
    });
  }
  return y;
}

Tensor weighted_scatter(Tape& tape, const Tensor& x, const Tensor& w, const Index& source, const Index& target,
                        std::size_t out_rows) {
  check_pair(source, target, "weighted_scatter");
  check_index(source, x.rows(), "weighted_scatter");
  check_index(target, out_rows, "weighted_scatter");
  const std::size_t blocks = w.cols();
  if (w.rows() != source->size() || blocks == 0 || x.cols() % blocks != 0)
    throw ShapeError("weighted_scatter: incompatible shapes " + shapes(x, w));
  const std::size_t width = x.cols() / blocks;
  Matrix out(out_rows, x.cols());
  for (std::size_t e = 0; e < source->size(); ++e) {
    const double* xv = x.value().row((*source)[e]).data();
    double* o = out.row((*target)[e]).data();
    for (std::size_t k = 0; k < blocks; ++k) axpy(o + k * width, xv + k * width, width, w.value()(e, k));
  }
  auto y = tape.make_output(std::move(out), {&x, &w}, "weighted_scatter");
  if (y.requires_grad()) {
    tape.record(y, [X = x.data(), W = w.data(), Y = y.data(), source, target, blocks, width] {
      for (std::size_t e = 0; e < source->size(); ++e) {
        const std::size_t is = (*source)[e];
        const double* g = Y->grad.row((*target)[e]).data();
        const double* xv = X->value.row(is).data();
        for (std::size_t k = 0; k < blocks; ++k) {
          const std::size_t o = k * width;
          if (X->requires_grad) axpy(X->grad.row(is).data() + o, g + o, width, W->value(e, k));
          if (W->requires_grad) {
            double acc = 0.0;
            for (std::size_t c = o; c < o + width; ++c) acc += g[c] * xv[c];
            W->grad(e, k) += acc;
          }
        }
      }
    });
  }
  return y;
}

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState st;
  for (const auto& p : params) {
    st.first_moment.emplace_back(p.rows(), p.cols());
    st.second_moment.emplace_back(p.rows(), p.cols());
  }
  return st;
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options, long t) {
  if (t < 1) throw ParameterError("adam_step: t must be >= 1");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw UsageError("adam_step: optimizer state does not match the parameter list");
  const double b1 = options.beta1, b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].value().values();
    const auto& g = params[k].grad().values();
    auto& m = state.first_moment[k].values();
    auto& v = state.second_moment[k].values();
    if (g.size() != p.size() || m.size() != p.size())
      throw ShapeError("adam_step: parameter " + std::to_string(k) + " changed shape");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double grad = g[i] + options.weight_decay * p[i];
      m[i] = b1 * m[i] + (1.0 - b1) * grad;
      v[i] = b2 * v[i] + (1.0 - b2) * grad * grad;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= options.learning_rate * mhat / (std::sqrt(vhat) + options.epsilon);
    }
  }
}

}  // namespace surroflow::ad
