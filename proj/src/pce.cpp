#include "excite/pce.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace excite {

Marginal Marginal::uniform(double lower, double upper) {
  if (!(lower < upper)) throw std::invalid_argument("uniform marginal requires lower < upper");
  Marginal m;
  m.kind = Kind::Uniform;
  m.a = lower;
  m.b = upper;
  return m;
}

Marginal Marginal::gaussian(double mean, double std_dev) {
  if (!(std_dev > 0.0)) throw std::invalid_argument("gaussian marginal requires std > 0");
  Marginal m;
  m.kind = Kind::Gaussian;
  m.a = mean;
  m.b = std_dev;
  return m;
}

double Marginal::mean() const { return kind == Kind::Uniform ? 0.5 * (a + b) : a; }

double Marginal::std_dev() const {
  return kind == Kind::Uniform ? (b - a) / std::sqrt(12.0) : b;
}

Eigen::VectorXd ParameterEnsemble::mean() const {
  Eigen::VectorXd m(dim());
  for (int j = 0; j < dim(); ++j) m[j] = marginals[j].mean();
  return m;
}

void ParameterEnsemble::validate() const {
  if (marginals.empty()) throw std::invalid_argument("ensemble needs at least one parameter");
  if (names.size() != marginals.size())
    throw std::invalid_argument("ensemble names/marginals length mismatch");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate parameter name: " + n);
  for (const auto& m : marginals) {
    if (m.kind == Marginal::Kind::Uniform && !(m.a < m.b))
      throw std::invalid_argument("uniform marginal requires lower < upper");
    if (m.kind == Marginal::Kind::Gaussian && !(m.b > 0.0))
      throw std::invalid_argument("gaussian marginal requires std > 0");
  }
}

long multi_index_count(int q, int d) {
  if (q < 1 || d < 0) throw std::invalid_argument("multi_index_count: q >= 1, d >= 0 required");
  // C(q + d, d) as an exact integer product; guard against overflow.
  unsigned long long c = 1;
  for (int i = 1; i <= d; ++i) {
    const unsigned long long num = static_cast<unsigned long long>(q + i);
    if (c > (1ull << 62) / num) throw SizeError("multi-index count overflows");
    c = c * num / static_cast<unsigned long long>(i);
  }
  if (c > 100000000ull) throw SizeError("multi-index set too large: " + std::to_string(c));
  return static_cast<long>(c);
}

namespace {

void enumerate_degree(int q, int total, MultiIndex& current, std::vector<MultiIndex>& out) {
  if (q == 1) {
    current.push_back(total);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (int a = 0; a <= total; ++a) {
    current.push_back(a);
    enumerate_degree(q - 1, total - a, current, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<MultiIndex> build_multi_index_set(int q, int d) {
  const long count = multi_index_count(q, d);
  std::vector<MultiIndex> indices;
  indices.reserve(static_cast<std::size_t>(count));
  MultiIndex current;
  for (int g = 0; g <= d; ++g) enumerate_degree(q, g, current, indices);
  return indices;
}

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

double univariate_norm(const Marginal& m, int degree) {
  // Legendre against uniform probability: E[P_n^2] = 1/(2n+1);
  // probabilists' Hermite against standard normal: E[He_n^2] = n!.
  if (m.kind == Marginal::Kind::Uniform) return 1.0 / (2.0 * degree + 1.0);
  return factorial(degree);
}

// Values P_0..P_d (or He_0..He_d) at the standardized coordinate x.
void recurrence_values(const Marginal& m, double x, int d, double* out) {
  out[0] = 1.0;
  if (d == 0) return;
  out[1] = x;
  if (m.kind == Marginal::Kind::Uniform) {
    for (int n = 1; n < d; ++n)
      out[n + 1] = ((2.0 * n + 1.0) * x * out[n] - n * out[n - 1]) / (n + 1.0);
  } else {
    for (int n = 1; n < d; ++n) out[n + 1] = x * out[n] - n * out[n - 1];
  }
}

double standardize(const Marginal& m, double theta) {
  if (m.kind == Marginal::Kind::Uniform) {
    const double x = (2.0 * theta - (m.a + m.b)) / (m.b - m.a);
    if (std::abs(x) > 1.0 + 1e-9)
      throw std::domain_error("parameter value outside uniform support");
    return x;
  }
  return (theta - m.a) / m.b;
}

}  // namespace

ChaosBasis make_basis(const ParameterEnsemble& ensemble, int degree) {
  ensemble.validate();
  if (degree < 0) throw std::invalid_argument("basis degree must be >= 0");
  ChaosBasis basis;
  basis.ensemble = ensemble;
  basis.degree = degree;
  basis.indices = build_multi_index_set(ensemble.dim(), degree);
  basis.norms.resize(static_cast<int>(basis.indices.size()));
  for (int i = 0; i < basis.size(); ++i) {
    double norm = 1.0;
    for (int j = 0; j < ensemble.dim(); ++j)
      norm *= univariate_norm(ensemble.marginals[j], basis.indices[i][j]);
    basis.norms[i] = norm;
  }
  return basis;
}

Eigen::VectorXd eval_basis(const ChaosBasis& basis, const Eigen::VectorXd& theta) {
  const int q = basis.ensemble.dim();
  if (theta.size() != q) throw std::invalid_argument("eval_basis: theta dimension mismatch");
  const int d = basis.degree;
  Eigen::MatrixXd table(d + 1, q);
  for (int j = 0; j < q; ++j) {
    const double x = standardize(basis.ensemble.marginals[j], theta[j]);
    recurrence_values(basis.ensemble.marginals[j], x, d, table.col(j).data());
  }
  Eigen::VectorXd phi(basis.size());
  for (int i = 0; i < basis.size(); ++i) {
    double v = 1.0;
    for (int j = 0; j < q; ++j) v *= table(basis.indices[i][j], j);
    phi[i] = v;
  }
  return phi;
}

namespace {

// Golub-Welsch from the Jacobi matrix of the (monic) orthogonal family.
void golub_welsch(const Eigen::VectorXd& offdiag, Eigen::VectorXd& nodes,
                  Eigen::VectorXd& weights) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  nodes = solver.eigenvalues();
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = solver.eigenvectors()(0, i);
    weights[i] = v * v;  // total measure 1
  }
}

}  // namespace

void gauss_rule_legendre(int order, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (order < 1) throw std::invalid_argument("quadrature order must be >= 1");
  if (order == 1) {
    nodes = Eigen::VectorXd::Zero(1);
    weights = Eigen::VectorXd::Ones(1);
    return;
  }
  Eigen::VectorXd off(order - 1);
  for (int k = 1; k < order; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  golub_welsch(off, nodes, weights);
}

void gauss_rule_hermite(int order, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (order < 1) throw std::invalid_argument("quadrature order must be >= 1");
  if (order == 1) {
    nodes = Eigen::VectorXd::Zero(1);
    weights = Eigen::VectorXd::Ones(1);
    return;
  }
  Eigen::VectorXd off(order - 1);
  for (int k = 1; k < order; ++k) off[k - 1] = std::sqrt(static_cast<double>(k));
  golub_welsch(off, nodes, weights);
}

QuadratureGrid gauss_quadrature(const ParameterEnsemble& ensemble, int order_per_dim) {
  ensemble.validate();
  if (order_per_dim < 1) throw std::invalid_argument("quadrature order must be >= 1");
  const int q = ensemble.dim();

  double total = 1.0;
  for (int j = 0; j < q; ++j) {
    total *= order_per_dim;
    if (total > 2e7) throw SizeError("tensor quadrature grid too large");
  }
  const long n_total = static_cast<long>(total);

  std::vector<Eigen::VectorXd> x1(q), w1(q);
  for (int j = 0; j < q; ++j) {
    const Marginal& m = ensemble.marginals[j];
    if (m.kind == Marginal::Kind::Uniform) {
      gauss_rule_legendre(order_per_dim, x1[j], w1[j]);
      x1[j] = (0.5 * (m.a + m.b) + 0.5 * (m.b - m.a) * x1[j].array()).matrix();
    } else {
      gauss_rule_hermite(order_per_dim, x1[j], w1[j]);
      x1[j] = (m.a + m.b * x1[j].array()).matrix();
    }
  }

  QuadratureGrid grid;
  grid.nodes.resize(n_total, q);
  grid.weights.resize(n_total);
  std::vector<int> idx(q, 0);
  for (long k = 0; k < n_total; ++k) {
    double w = 1.0;
    for (int j = 0; j < q; ++j) {
      grid.nodes(k, j) = x1[j][idx[j]];
      w *= w1[j][idx[j]];
    }
    grid.weights[k] = w;
    // odometer, last dimension fastest
    for (int j = q - 1; j >= 0; --j) {
      if (++idx[j] < order_per_dim) break;
      idx[j] = 0;
    }
  }
  return grid;
}

Eigen::MatrixXd project(const ChaosBasis& basis, const QuadratureGrid& grid,
                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                        int output_dim) {
  if (grid.nodes.cols() != basis.ensemble.dim())
    throw std::invalid_argument("project: grid/basis dimension mismatch");
  const int ell = basis.size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(output_dim, ell);
  for (long k = 0; k < grid.size(); ++k) {
    const Eigen::VectorXd theta = grid.nodes.row(k);
    const Eigen::VectorXd phi = eval_basis(basis, theta);
    const Eigen::VectorXd fk = f(theta);
    if (fk.size() != output_dim) throw std::invalid_argument("project: f output size mismatch");
    acc.noalias() += grid.weights[k] * fk * phi.transpose();
  }
  for (int i = 0; i < ell; ++i) acc.col(i) /= basis.norms[i];
  return acc;
}

std::pair<double, double> pce_moments(const ChaosBasis& basis, const Eigen::VectorXd& coeffs) {
  if (coeffs.size() != basis.size())
    throw std::invalid_argument("pce_moments: coefficient length mismatch");
  const double mean = coeffs[0];
  double var = 0.0;
  for (int i = 1; i < basis.size(); ++i) var += basis.norms[i] * coeffs[i] * coeffs[i];
  return {mean, var};
}

}  // namespace excite
