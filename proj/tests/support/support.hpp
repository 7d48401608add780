#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "surroflow/autodiff.hpp"
#include "surroflow/network.hpp"

namespace testsupport {

using surroflow::Matrix;
namespace ad = surroflow::ad;
namespace network = surroflow::network;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("surroflow-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

/// Entries uniform in [-1, 1] but at least `margin` away from zero.
inline Matrix away_from_zero(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = sign(rng) ? u(rng) : -u(rng);
  return m;
}

/// Small random directed network. Parallel and antiparallel segments are
/// allowed; self-loops are not. Segment ids are shuffled so that the
/// canonical order differs from the construction order.
inline network::RoadNetwork random_network(std::mt19937_64& rng, int max_segments) {
  std::uniform_int_distribution<int> node_count(2, 9);
  const int n = node_count(rng);
  std::uniform_int_distribution<int> seg_count(1, max_segments);
  const int m = seg_count(rng);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_real_distribution<double> coord(0.0, 1000.0);

  std::vector<network::Intersection> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back({"n" + std::to_string(i), coord(rng), coord(rng)});
  std::vector<int> labels(m);
  for (int i = 0; i < m; ++i) labels[i] = i;
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<network::RoadSegment> segments;
  for (int i = 0; i < m; ++i) {
    int u = pick(rng), v = pick(rng);
    while (v == u) v = pick(rng);
    network::RoadSegment s;
    s.id = "s" + std::to_string(labels[i]);
    s.from = nodes[u].id;
    s.to = nodes[v].id;
    s.length = 100.0;
    s.capacity = 500.0;
    s.speed_limit = 10.0;
    s.district = 0;
    segments.push_back(std::move(s));
  }
  return network::RoadNetwork(std::move(nodes), std::move(segments), 1);
}

struct GradCheck {
  /// Largest per-tensor relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  /// with floor = floor_factor * max(1, |loss|). Central differences carry roughly
  /// eps * |loss| / h of rounding noise per entry, so a tensor whose exact gradient is
  /// zero (an attention key bias, for instance) would otherwise score a relative error
  /// near one. Below the floor the test is an absolute one.
  double max_relative_error = 0.0;
  /// Largest elementwise absolute difference, for diagnostics.
  double max_abs_error = 0.0;
};

/// Compares the tape gradient of `loss_fn` with central differences in every
/// entry of every tensor in `inputs`. `loss_fn` must build a fresh 1x1 loss.
inline GradCheck grad_check(const std::vector<ad::Tensor>& inputs,
                            const std::function<ad::Tensor(ad::Tape&)>& loss_fn, double h = 1e-5,
                            double floor_factor = 1e-5) {
  for (auto t : inputs) t.zero_grad();
  double floor = floor_factor;
  {
    ad::Tape tape(false);
    floor *= std::max(1.0, std::abs(loss_fn(tape).item()));
  }
  {
    ad::Tape tape;
    tape.backward(loss_fn(tape));
  }
  GradCheck result;
  for (auto t : inputs) {
    const Matrix analytic = t.grad();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < t.value().size(); ++i) {
      double& x = t.value().values()[i];
      const double saved = x;
      x = saved + h;
      double plus = 0.0, minus = 0.0;
      {
        ad::Tape tape(false);
        plus = loss_fn(tape).item();
      }
      x = saved - h;
      {
        ad::Tape tape(false);
        minus = loss_fn(tape).item();
      }
      x = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic.values()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
    }
    const double scale = std::max(std::sqrt(std::max(a2, n2)), floor);
    const double rel = std::sqrt(diff2) / scale;
    result.max_relative_error = std::max(result.max_relative_error, rel);
  }
  return result;
}

/// sum(y .* w): a scalar whose gradient with respect to y is w.
inline ad::Tensor weighted_sum(ad::Tape& tape, const ad::Tensor& y, const Matrix& w) {
  return ad::sum(tape, ad::mul(tape, y, ad::Tensor::constant(w)));
}

}  // namespace testsupport
