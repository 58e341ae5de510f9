#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "excite/common.hpp"

namespace excite {

/// Marginal distribution of one uncertain parameter.
struct Marginal {
  enum class Kind { Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  double a = 0.0;  // Uniform: lower;  Gaussian: mean
  double b = 1.0;  // Uniform: upper;  Gaussian: standard deviation

  static Marginal uniform(double lower, double upper);
  static Marginal gaussian(double mean, double std_dev);

  double mean() const;
  double std_dev() const;
};

/// Independent uncertain parameters theta in R^q with named marginals.
struct ParameterEnsemble {
  std::vector<Marginal> marginals;
  std::vector<std::string> names;

  int dim() const { return static_cast<int>(marginals.size()); }
  Eigen::VectorXd mean() const;
  void validate() const;
};

/// Exponents of one multivariate polynomial term, length q.
using MultiIndex = std::vector<int>;

/// All multi-indices with total degree <= d, graded lexicographic order
/// (total degree ascending, then lexicographic); the zero index comes first.
std::vector<MultiIndex> build_multi_index_set(int q, int d);

/// Number of terms (q + d)! / (q! d!); throws SizeError on overflow.
long multi_index_count(int q, int d);

/// Multivariate orthogonal basis phi matched to the ensemble: Legendre
/// factors for uniform marginals, probabilists' Hermite for Gaussian ones.
/// Polynomials are not normalized; `norms` carries E[phi_i^2].
struct ChaosBasis {
  ParameterEnsemble ensemble;
  int degree = 0;
  std::vector<MultiIndex> indices;
  Eigen::VectorXd norms;

  int size() const { return static_cast<int>(indices.size()); }
};

ChaosBasis make_basis(const ParameterEnsemble& ensemble, int degree);

/// phi(theta) in R^l. Uniform coordinates map affinely onto [-1, 1] before
/// the Legendre recurrence; Gaussian ones are standardized before the
/// Hermite recurrence. Throws std::domain_error outside a uniform support.
Eigen::VectorXd eval_basis(const ChaosBasis& basis, const Eigen::VectorXd& theta);

/// Tensor-product Gauss rule matched to the marginals with probability
/// weights (sum = 1); nodes are in physical parameter scale.
struct QuadratureGrid {
  Eigen::MatrixXd nodes;    // N x q
  Eigen::VectorXd weights;  // N

  int size() const { return static_cast<int>(weights.size()); }
};

QuadratureGrid gauss_quadrature(const ParameterEnsemble& ensemble, int order_per_dim);

/// Univariate Gauss rules against the probability measure (weights sum 1).
void gauss_rule_legendre(int order, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);
void gauss_rule_hermite(int order, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// Coefficients of f against the basis: row i holds the expansion of the
/// i-th output, computed as G^{-1} sum_k w_k phi(theta_k) f(theta_k)^T.
Eigen::MatrixXd project(const ChaosBasis& basis, const QuadratureGrid& grid,
                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                        int output_dim);

/// (mean, variance) of the expansion: mean = R_1, var = sum_{i>=2} E[phi_i^2] R_i^2.
std::pair<double, double> pce_moments(const ChaosBasis& basis, const Eigen::VectorXd& coeffs);

}  // namespace excite
