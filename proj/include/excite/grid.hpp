#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace excite {

/// Uniform time grid on [t0, tf] with step h; (tf - t0) must be an integer
/// multiple of h.
struct TimeGrid {
  double t0 = 0.0;
  double tf = 1.0;
  double h = 1e-3;

  TimeGrid() = default;
  TimeGrid(double t0_, double tf_, double h_) : t0(t0_), tf(tf_), h(h_) {
    if (!(h > 0.0)) throw std::invalid_argument("TimeGrid: step must be positive");
    if (!(tf > t0)) throw std::invalid_argument("TimeGrid: tf must exceed t0");
    const double n = (tf - t0) / h;
    if (std::abs(n - std::round(n)) > 1e-6)
      throw std::invalid_argument("TimeGrid: (tf - t0) not a multiple of h");
  }

  int steps() const { return static_cast<int>(std::lround((tf - t0) / h)); }
  int size() const { return steps() + 1; }
  double time(int k) const { return t0 + k * h; }

  std::vector<double> times() const {
    std::vector<double> t(size());
    for (int k = 0; k < size(); ++k) t[k] = time(k);
    return t;
  }

  double duration() const { return tf - t0; }
};

/// Time-indexed sequence of equally shaped matrices (e.g. S(t) in R^{m x q}).
struct MatrixSeries {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> values;

  int size() const { return static_cast<int>(times.size()); }
  bool empty() const { return times.empty(); }
  int rows() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
  int cols() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }
};

}  // namespace excite
