#include "surroflow/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "surroflow/error.hpp"

namespace surroflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols)
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                     std::to_string(data_.size()) + " values");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  // x - x is 0 for finite x and NaN otherwise; the sum stays 0 only if every entry is finite.
  double acc = 0.0;
  for (double v : data_) acc += v - v;
  return acc == 0.0;
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

namespace kernels {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
Eigen::Map<RowMajor> view(Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

void prepare(Matrix& out, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (out.rows() != rows || out.cols() != cols)
      throw ShapeError("matmul accumulator " + out.shape_string() + " expected (" +
                       std::to_string(rows) + "x" + std::to_string(cols) + ")");
  } else if (out.rows() != rows || out.cols() != cols) {
    out = Matrix(rows, cols);
  } else {
    out.fill(0.0);
  }
}
}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul " + a.shape_string() + " x " + b.shape_string());
  prepare(out, a.rows(), b.cols(), accumulate);
  if (out.size() == 0 || a.cols() == 0) return;
  view(out).noalias() += view(a) * view(b);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn " + a.shape_string() + "^T x " + b.shape_string());
  prepare(out, a.cols(), b.cols(), accumulate);
  if (out.size() == 0 || a.rows() == 0) return;
  view(out).noalias() += view(a).transpose() * view(b);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt " + a.shape_string() + " x " + b.shape_string() + "^T");
  prepare(out, a.rows(), b.rows(), accumulate);
  if (out.size() == 0 || a.cols() == 0) return;
  view(out).noalias() += view(a) * view(b).transpose();
}

}  // namespace kernels
}  // namespace surroflow
