#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "excite/grid.hpp"
#include "excite/pce.hpp"

namespace excite {

/// Per-parameter basis index sets: first_order[j] holds the terms depending
/// on theta_j alone, total_order[j] every term touching theta_j. Selection
/// vectors carry E[phi_i^2] on members and zero elsewhere.
struct IndexSets {
  std::vector<std::vector<int>> first_order;
  std::vector<std::vector<int>> total_order;
  Eigen::MatrixXd v_first;  // ell x q
  Eigen::MatrixXd v_total;  // ell x q
  int ell = 0;
  int q = 0;
};

IndexSets build_index_sets(const ChaosBasis& basis);

enum class SensKind { FirstOrder, TotalOrder };

/// S_{.j}(t) = sqrt((I_m (x) v_j^T) Y^2(t)) from surrogate output
/// coefficients Y (ml x T, state-major blocks of length ell).
MatrixSeries sensitivity_trajectory(const std::vector<double>& times, const Eigen::MatrixXd& Y,
                                    int m, const IndexSets& sets, SensKind kind);

/// Parametric output variance v^T Y^2 per output, m x T.
Eigen::MatrixXd variance_trajectory(const Eigen::MatrixXd& Y, int m, const ChaosBasis& basis);

/// First-order Sobol indices SU_ij = S_ij^2 / V(y_i); outputs with
/// V(y_i) <= eps are flagged undefined and reported as zero.
struct SobolResult {
  Eigen::MatrixXd su;          // m x q
  std::vector<char> defined;   // per output
};

SobolResult normalized_sobol(const Eigen::MatrixXd& S, const Eigen::VectorXd& total_variance,
                             double eps = 1e-12);

/// max(0, S - S_min), elementwise.
Eigen::MatrixXd effective_sensitivity(const Eigen::MatrixXd& S, const Eigen::MatrixXd& S_min);
MatrixSeries effective_sensitivity(const MatrixSeries& S, const MatrixSeries& S_min);

/// Trapezoid time integral of |dS| per (output, parameter).
Eigen::MatrixXd impact_score(const MatrixSeries& dS, const TimeGrid& grid);

/// Long-format CSV: t, output, parameter, S, S_min, dS, SU.
void write_sensitivity_csv(const std::filesystem::path& path, const MatrixSeries& S,
                           const MatrixSeries& S_min, const MatrixSeries& dS,
                           const std::vector<SobolResult>& su,
                           const std::vector<std::string>& parameter_names);

}  // namespace excite
