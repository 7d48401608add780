#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "surroflow/matrix.hpp"

/// Dense reverse-mode differentiation over 64-bit matrices, with the gather and
/// scatter primitives needed for message passing on graphs.
///
/// A Tape records every operation whose inputs require gradients. Tensors are
/// shared handles; parameters outlive tapes, intermediates die with them.
namespace surroflow::ad {

struct TensorData {
  Matrix value;
  Matrix grad;  // allocated iff requires_grad
  bool requires_grad = false;
};

class Tensor {
public:
  Tensor() = default;

  /// A value that never receives gradients.
  static Tensor constant(Matrix value);
  /// A leaf that accumulates gradients across backward passes.
  static Tensor parameter(Matrix value);

  [[nodiscard]] std::size_t rows() const noexcept { return data_->value.rows(); }
  [[nodiscard]] std::size_t cols() const noexcept { return data_->value.cols(); }
  [[nodiscard]] const Matrix& value() const noexcept { return data_->value; }
  [[nodiscard]] Matrix& value() noexcept { return data_->value; }
  [[nodiscard]] const Matrix& grad() const noexcept { return data_->grad; }
  [[nodiscard]] Matrix& grad() noexcept { return data_->grad; }
  [[nodiscard]] bool requires_grad() const noexcept { return data_->requires_grad; }
  [[nodiscard]] bool valid() const noexcept { return static_cast<bool>(data_); }
  /// Scalar value of a 1x1 tensor.
  [[nodiscard]] double item() const;

  void zero_grad();

  [[nodiscard]] const std::shared_ptr<TensorData>& data() const noexcept { return data_; }

private:
  explicit Tensor(std::shared_ptr<TensorData> d) : data_(std::move(d)) {}
  friend class Tape;
  std::shared_ptr<TensorData> data_;
};

using Index = std::shared_ptr<const std::vector<std::size_t>>;
[[nodiscard]] Index make_index(std::vector<std::size_t> values);

class Tape {
public:
  /// With record_gradients = false nothing is recorded (inference mode).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  void clear() noexcept { entries_.clear(); }

  /// Populates gradients of every requires_grad tensor reachable from `loss`.
  /// Leaf gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor& loss);

  // Internal: used by the op implementations.
  Tensor make_output(Matrix value, std::initializer_list<const Tensor*> inputs, const char* op);
  void record(const Tensor& out, std::function<void()> backward_fn);

private:
  struct Entry {
    std::shared_ptr<TensorData> out;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool recording_ = true;
};

// Dense ops.
[[nodiscard]] Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// Same shape, or b is 1 x cols and broadcast over rows.
[[nodiscard]] Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
[[nodiscard]] Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
/// Elementwise product of equal shapes.
[[nodiscard]] Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
[[nodiscard]] Tensor scale(Tape& tape, const Tensor& a, double factor);
[[nodiscard]] Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
[[nodiscard]] Tensor relu(Tape& tape, const Tensor& a);
[[nodiscard]] Tensor leaky_relu(Tape& tape, const Tensor& a, double slope = 0.2);
/// x is n x c, s is n x h with h dividing c: block k of row r is multiplied by s(r, k).
/// With h = 1 this is a plain per-row scale.
[[nodiscard]] Tensor rowwise_scale(Tape& tape, const Tensor& x, const Tensor& s);
/// n x c -> n x h, summing each of the h contiguous column blocks.
[[nodiscard]] Tensor block_sum(Tape& tape, const Tensor& x, std::size_t blocks);
[[nodiscard]] Tensor sum(Tape& tape, const Tensor& a);
/// mean over all entries of (pred - target)^2; target is held constant.
[[nodiscard]] Tensor mse(Tape& tape, const Tensor& pred, const Matrix& target);

// Graph ops.
[[nodiscard]] Tensor gather_rows(Tape& tape, const Tensor& x, const Index& index);
[[nodiscard]] Tensor scatter_sum(Tape& tape, const Tensor& x, const Index& index, std::size_t out_rows);
/// Column-wise max per output row; empty rows are 0 with zero gradient. The
/// gradient goes to the first row attaining the max.
[[nodiscard]] Tensor scatter_max(Tape& tape, const Tensor& x, const Index& index, std::size_t out_rows);
/// Softmax of each column within groups of rows sharing a segment id.
[[nodiscard]] Tensor segment_softmax(Tape& tape, const Tensor& scores, const Index& segment,
                                     std::size_t segments);

// Fused edge ops. Each equals a chain of the ops above but never materializes
// the per-edge intermediates.
/// relu(a[source[e]] - b[target[e]] + bias) per edge e; bias is 1 x c.
[[nodiscard]] Tensor edge_difference_relu(Tape& tape, const Tensor& a, const Tensor& b, const Tensor& bias,
                                          const Index& source, const Index& target);
/// out(e, k) = sum over block k of a[a_index[e]] * b[b_index[e]]; out is E x blocks.
[[nodiscard]] Tensor edge_dot(Tape& tape, const Tensor& a, const Tensor& b, const Index& a_index,
                              const Index& b_index, std::size_t blocks);
/// out[target[e]] += block k of x[source[e]] scaled by w(e, k); w is E x blocks.
[[nodiscard]] Tensor weighted_scatter(Tape& tape, const Tensor& x, const Tensor& w, const Index& source,
                                      const Index& target, std::size_t out_rows);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(std::span<const Tensor> params);
};

/// One bias-corrected Adam update at step t >= 1. Gradients are left untouched.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options, long t);

struct NamedTensor {
  std::string name;
  Matrix value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Binary checkpoint; layout documented in docs/checkpoint-format.md.
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
[[nodiscard]] std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace surroflow::ad
