#include <doctest.h>

#include <cmath>
#include <set>

#include "excite/pce.hpp"
#include "excite/rng.hpp"
#include "support/oracles.hpp"

using namespace excite;

namespace {

ParameterEnsemble spring_damper_ensemble() {
  ParameterEnsemble e;
  e.marginals = {Marginal::uniform(1.8, 2.2), Marginal::uniform(0.9, 1.1)};
  e.names = {"c", "d"};
  return e;
}

ParameterEnsemble mixed_ensemble(int q) {
  ParameterEnsemble e;
  for (int j = 0; j < q; ++j) {
    if (j % 2 == 0)
      e.marginals.push_back(Marginal::uniform(-1.0 - j, 2.0 + j));
    else
      e.marginals.push_back(Marginal::gaussian(0.5 * j, 1.0 + 0.25 * j));
    e.names.push_back("p" + std::to_string(j));
  }
  return e;
}

long binom(int n, int k) {
  long c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("pce");

TEST_CASE("multi-index set sizes match the closed form") {
  CHECK(build_multi_index_set(2, 3).size() == 10);
  CHECK(build_multi_index_set(6, 3).size() == 84);

  const auto trivial = build_multi_index_set(1, 0);
  REQUIRE(trivial.size() == 1);
  CHECK(trivial[0] == MultiIndex{0});

  for (int q = 1; q <= 6; ++q)
    for (int d = 0; d <= 4; ++d)
      CHECK(static_cast<long>(build_multi_index_set(q, d).size()) == binom(q + d, d));
}

TEST_CASE("multi-index ordering is graded lexicographic with zero first") {
  const auto set = build_multi_index_set(3, 3);
  CHECK(set.front() == MultiIndex{0, 0, 0});
  for (std::size_t i = 1; i < set.size(); ++i) {
    int ga = 0, gb = 0;
    for (int v : set[i - 1]) ga += v;
    for (int v : set[i]) gb += v;
    const bool graded = ga < gb || (ga == gb && set[i - 1] < set[i]);
    CHECK(graded);
  }
  std::set<MultiIndex> unique(set.begin(), set.end());
  CHECK(unique.size() == set.size());
}

TEST_CASE("oversized multi-index requests raise SizeError") {
  CHECK_THROWS_AS(multi_index_count(60, 40), SizeError);
}

TEST_CASE("basis evaluation: constant term and interval midpoint") {
  const ChaosBasis basis = make_basis(spring_damper_ensemble(), 3);
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd theta(2);
    theta << rng.uniform(1.8, 2.2), rng.uniform(0.9, 1.1);
    const Eigen::VectorXd phi = eval_basis(basis, theta);
    CHECK(phi[0] == 1.0);
  }

  ParameterEnsemble uni;
  uni.marginals = {Marginal::uniform(1.8, 2.2)};
  uni.names = {"c"};
  const ChaosBasis b1 = make_basis(uni, 3);
  Eigen::VectorXd mid(1);
  mid << 2.0;
  CHECK(eval_basis(b1, mid)[1] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("basis evaluation matches the Legendre recurrence oracle") {
  ParameterEnsemble uni;
  uni.marginals = {Marginal::uniform(-1.0, 1.0)};
  uni.names = {"x"};
  const ChaosBasis basis = make_basis(uni, 4);
  Eigen::VectorXd at(1);
  at << 1.0;
  const Eigen::VectorXd phi = eval_basis(basis, at);
  CHECK(phi[2] == doctest::Approx(oracles::legendre(2, 1.0)).epsilon(1e-14));  // P2(1) = 1
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    at[0] = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd p = eval_basis(basis, at);
    for (int n = 0; n <= 4; ++n) CHECK(p[n] == doctest::Approx(oracles::legendre(n, at[0])).epsilon(1e-12));
  }
}

TEST_CASE("gaussian marginals use probabilists' Hermite polynomials") {
  ParameterEnsemble g;
  g.marginals = {Marginal::gaussian(2.0, 0.5)};
  g.names = {"g"};
  const ChaosBasis basis = make_basis(g, 4);
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd theta(1);
    theta << rng.normal(2.0, 0.5);
    const double x = (theta[0] - 2.0) / 0.5;
    const Eigen::VectorXd phi = eval_basis(basis, theta);
    for (int n = 0; n <= 4; ++n)
      CHECK(phi[n] == doctest::Approx(oracles::hermite(n, x)).epsilon(1e-11));
  }
  // norms are n!
  CHECK(basis.norms[2] == doctest::Approx(2.0));
  CHECK(basis.norms[4] == doctest::Approx(24.0));
}

TEST_CASE("evaluation outside a uniform support is a domain error") {
  const ChaosBasis basis = make_basis(spring_damper_ensemble(), 2);
  Eigen::VectorXd theta(2);
  theta << 2.5, 1.0;
  CHECK_THROWS_AS(eval_basis(basis, theta), std::domain_error);
}

TEST_CASE("tensor quadrature: size, normalization, polynomial exactness") {
  const QuadratureGrid grid = gauss_quadrature(spring_damper_ensemble(), 4);
  CHECK(grid.size() == 16);
  CHECK(grid.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(grid.weights.minCoeff() > 0.0);

  ParameterEnsemble sym;
  sym.marginals = {Marginal::uniform(-1.0, 1.0)};
  sym.names = {"x"};
  const QuadratureGrid g2 = gauss_quadrature(sym, 2);
  double cubic = 0.0;
  for (int k = 0; k < g2.size(); ++k) cubic += g2.weights[k] * std::pow(g2.nodes(k, 0), 3);
  CHECK(cubic == doctest::Approx(0.0).epsilon(1e-15));

  ParameterEnsemble unit;
  unit.marginals = {Marginal::uniform(0.0, 1.0)};
  unit.names = {"x"};
  const QuadratureGrid g3 = gauss_quadrature(unit, 3);
  double quartic = 0.0;
  for (int k = 0; k < g3.size(); ++k) quartic += g3.weights[k] * std::pow(g3.nodes(k, 0), 4);
  CHECK(quartic == doctest::Approx(0.2).epsilon(1e-12));

  ParameterEnsemble gauss;
  gauss.marginals = {Marginal::gaussian(0.0, 1.0)};
  gauss.names = {"z"};
  const QuadratureGrid g4 = gauss_quadrature(gauss, 4);
  double second = 0.0, fourth = 0.0;
  for (int k = 0; k < g4.size(); ++k) {
    second += g4.weights[k] * std::pow(g4.nodes(k, 0), 2);
    fourth += g4.weights[k] * std::pow(g4.nodes(k, 0), 4);
  }
  CHECK(second == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fourth == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("orthogonality: quadrature Gram matrix is diagonal with the norms") {
  struct Case {
    int q, d;
  };
  for (const Case cs : {Case{1, 4}, Case{2, 3}, Case{3, 2}, Case{6, 2}}) {
    const ParameterEnsemble ensemble = mixed_ensemble(cs.q);
    const ChaosBasis basis = make_basis(ensemble, cs.d);
    const QuadratureGrid grid = gauss_quadrature(ensemble, cs.d + 1);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(basis.size(), basis.size());
    for (int k = 0; k < grid.size(); ++k) {
      const Eigen::VectorXd phi = eval_basis(basis, grid.nodes.row(k));
      gram.noalias() += grid.weights[k] * phi * phi.transpose();
    }
    for (int a = 0; a < basis.size(); ++a) {
      for (int b = 0; b < basis.size(); ++b) {
        if (a == b)
          CHECK(std::abs(gram(a, b) - basis.norms[a]) <= 1e-10 * std::max(1.0, basis.norms[a]));
        else
          CHECK(std::abs(gram(a, b)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("projection: constants, coordinates, and reproducing a basis function") {
  const ParameterEnsemble ensemble = spring_damper_ensemble();
  const ChaosBasis basis = make_basis(ensemble, 3);
  const QuadratureGrid grid = gauss_quadrature(ensemble, 5);

  const Eigen::MatrixXd c =
      project(basis, grid, [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 4.25); },
              1);
  CHECK(c(0, 0) == doctest::Approx(4.25).epsilon(1e-13));
  for (int i = 1; i < basis.size(); ++i) CHECK(std::abs(c(0, i)) <= 1e-12);

  // f(theta) = theta_1: mean 2.0 plus a single degree-1 Legendre term with
  // coefficient (upper - lower)/2 = 0.2 on the c-axis
  const Eigen::MatrixXd lin = project(
      basis, grid, [](const Eigen::VectorXd& th) { return Eigen::VectorXd::Constant(1, th[0]); },
      1);
  CHECK(lin(0, 0) == doctest::Approx(2.0).epsilon(1e-13));
  int nonzero_deg1 = -1;
  for (int i = 1; i < basis.size(); ++i) {
    if (std::abs(lin(0, i)) > 1e-10) {
      CHECK(nonzero_deg1 == -1);
      nonzero_deg1 = i;
    }
  }
  REQUIRE(nonzero_deg1 >= 0);
  CHECK(basis.indices[nonzero_deg1] == MultiIndex{1, 0});
  CHECK(lin(0, nonzero_deg1) == doctest::Approx(0.2).epsilon(1e-12));

  const ChaosBasis basis_copy = basis;
  const Eigen::MatrixXd rep = project(
      basis, grid,
      [&](const Eigen::VectorXd& th) {
        return Eigen::VectorXd::Constant(1, eval_basis(basis_copy, th)[3]);
      },
      1);
  for (int i = 0; i < basis.size(); ++i)
    CHECK(std::abs(rep(0, i) - (i == 3 ? 1.0 : 0.0)) <= 1e-10);
}

TEST_CASE("pce moments: closed cases and quadrature consistency") {
  const ParameterEnsemble ensemble = mixed_ensemble(2);
  const ChaosBasis basis = make_basis(ensemble, 3);

  Eigen::VectorXd r = Eigen::VectorXd::Zero(basis.size());
  r[0] = 3.0;
  auto [m0, v0] = pce_moments(basis, r);
  CHECK(m0 == 3.0);
  CHECK(v0 == 0.0);

  r.setZero();
  r[2] = 1.7;
  auto [m1, v1] = pce_moments(basis, r);
  CHECK(m1 == 0.0);
  CHECK(v1 == doctest::Approx(basis.norms[2] * 1.7 * 1.7).epsilon(1e-14));

  // random coefficient vectors against direct quadrature of the reconstruction
  const QuadratureGrid grid = gauss_quadrature(ensemble, basis.degree + 1);
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    for (int i = 0; i < r.size(); ++i) r[i] = rng.uniform(-1.0, 1.0);
    double mean = 0.0, second = 0.0;
    for (int k = 0; k < grid.size(); ++k) {
      const double val = eval_basis(basis, grid.nodes.row(k)).dot(r);
      mean += grid.weights[k] * val;
      second += grid.weights[k] * val * val;
    }
    const auto [m, v] = pce_moments(basis, r);
    CHECK(m == doctest::Approx(mean).epsilon(1e-9));
    CHECK(v == doctest::Approx(second - mean * mean).epsilon(1e-9));
  }
}

TEST_SUITE_END();
