#include <doctest.h>

#include <cmath>

#include "excite/lpv.hpp"
#include "excite/models.hpp"
#include "excite/rng.hpp"
#include "excite/sensitivity.hpp"
#include "support/oracles.hpp"

using namespace excite;

namespace {

struct SpringDamperRun {
  SurrogateSystem surrogate;
  SurrogateTrajectory traj;
  IndexSets sets;
  TimeGrid grid{0.0, 10.0, 1e-3};
};

SpringDamperRun spring_damper_run(double freq = 0.5) {
  SpringDamperRun run;
  ParameterEnsemble ensemble;
  ensemble.marginals = {Marginal::uniform(1.8, 2.2), Marginal::uniform(0.9, 1.1)};
  ensemble.names = {"c", "d"};
  const ChaosBasis basis = make_basis(ensemble, 3);
  run.surrogate = build_surrogate(spring_damper_lpv(), basis, gauss_quadrature(ensemble, 8));
  run.sets = build_index_sets(basis);
  run.traj = simulate_surrogate(
      run.surrogate,
      [freq](double t) {
        return Eigen::VectorXd::Constant(1, std::sin(2.0 * M_PI * freq * t));
      },
      run.grid);
  return run;
}

// brute-force membership from the dependency pattern of each multi-index
void brute_force_sets(const ChaosBasis& basis, std::vector<std::vector<int>>& first,
                      std::vector<std::vector<int>>& total) {
  const int q = basis.ensemble.dim();
  first.assign(q, {});
  total.assign(q, {});
  for (int i = 0; i < basis.size(); ++i) {
    const MultiIndex& mi = basis.indices[i];
    const int active = static_cast<int>(std::count_if(mi.begin(), mi.end(),
                                                      [](int a) { return a > 0; }));
    if (active == 0) continue;
    for (int j = 0; j < q; ++j) {
      if (mi[j] == 0) continue;
      total[j].push_back(i);
      if (active == 1) first[j].push_back(i);
    }
  }
}

}  // namespace

TEST_SUITE_BEGIN("sensitivity");

TEST_CASE("index sets for q=2, d=3 have the enumerated sizes") {
  ParameterEnsemble ensemble;
  ensemble.marginals = {Marginal::uniform(1.8, 2.2), Marginal::uniform(0.9, 1.1)};
  ensemble.names = {"c", "d"};
  const ChaosBasis basis = make_basis(ensemble, 3);
  const IndexSets sets = build_index_sets(basis);
  CHECK(sets.first_order[0].size() == 3);  // pure theta_1 terms of degree 1..3
  CHECK(sets.total_order[0].size() == 6);  // all terms with a1 >= 1
  CHECK(sets.first_order[1].size() == 3);
  CHECK(sets.total_order[1].size() == 6);
}

TEST_CASE("index sets match a brute-force enumeration and cover the basis") {
  for (int q : {1, 2, 3, 4}) {
    ParameterEnsemble ensemble;
    for (int j = 0; j < q; ++j) {
      ensemble.marginals.push_back(Marginal::uniform(0.0, 1.0));
      ensemble.names.push_back("p" + std::to_string(j));
    }
    const ChaosBasis basis = make_basis(ensemble, 3);
    const IndexSets sets = build_index_sets(basis);

    std::vector<std::vector<int>> first, total;
    brute_force_sets(basis, first, total);
    for (int j = 0; j < q; ++j) {
      CHECK(sets.first_order[j] == first[j]);
      CHECK(sets.total_order[j] == total[j]);
      // selection vectors carry the norms on members
      for (int i : sets.first_order[j])
        CHECK(sets.v_first(i, j) == doctest::Approx(basis.norms[i]));
    }

    // union of the total-order sets is every non-constant index
    std::vector<char> covered(basis.size(), 0);
    for (int j = 0; j < q; ++j)
      for (int i : sets.total_order[j]) covered[i] = 1;
    CHECK(covered[0] == 0);
    for (int i = 1; i < basis.size(); ++i) CHECK(covered[i] == 1);

    if (q == 1) CHECK(sets.first_order[0] == sets.total_order[0]);

    // first-order sets are pairwise disjoint and contained in the total sets
    for (int j = 0; j < q; ++j) {
      for (int i : sets.first_order[j]) {
        CHECK(std::count(sets.total_order[j].begin(), sets.total_order[j].end(), i) == 1);
        for (int k = 0; k < q; ++k)
          if (k != j)
            CHECK(std::count(sets.first_order[k].begin(), sets.first_order[k].end(), i) == 0);
      }
    }
  }
}

TEST_CASE("zero or deterministic coefficients give zero sensitivity") {
  const SpringDamperRun run = spring_damper_run();
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(run.surrogate.output_dim(), 5);
  std::vector<double> times{0, 1, 2, 3, 4};
  MatrixSeries S = sensitivity_trajectory(times, Y, 1, run.sets, SensKind::FirstOrder);
  for (const auto& v : S.values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);

  Y.row(0).setConstant(4.2);  // only the constant chaos term
  S = sensitivity_trajectory(times, Y, 1, run.sets, SensKind::FirstOrder);
  for (const auto& v : S.values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("steady-state sensitivity peaks sit where the phasor analysis puts them") {
  // For d x' = -c x + u with u = sin(w t), the first-order sensitivities at
  // steady state behave like |sin(w t + pi - 2 phi)| (spring constant) and
  // |cos(w t - 2 phi)| (damping), phi = atan(w d / c). The implementation's
  // argmax inside the final period must match those angles.
  const SpringDamperRun run = spring_damper_run();
  const MatrixSeries S =
      sensitivity_trajectory(run.traj.times, run.traj.Y, 1, run.sets, SensKind::FirstOrder);

  const double w = 2.0 * M_PI * 0.5;
  const double phi = std::atan(w * 1.0 / 2.0);
  // peaks of |sin(w t + pi - 2 phi)|: w t = 2 phi - pi/2 (mod pi)
  const double tc_expected = std::fmod((2.0 * phi - M_PI / 2.0) / w + 10.0, 1.0);
  // peaks of |cos(w t - 2 phi)|: w t = 2 phi (mod pi)
  const double td_expected = std::fmod(2.0 * phi / w + 10.0, 1.0);

  auto argmax_in_window = [&](int col) {
    double best = -1.0, at = 0.0;
    for (int k = 0; k < S.size(); ++k) {
      if (S.times[k] < 8.0) continue;
      if (S.values[k](0, col) > best) {
        best = S.values[k](0, col);
        at = S.times[k];
      }
    }
    return std::fmod(at, 1.0);
  };
  auto circ_dist = [](double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
  };
  CHECK(circ_dist(argmax_in_window(0), tc_expected) <= 0.02);
  CHECK(circ_dist(argmax_in_window(1), td_expected) <= 0.02);
}

TEST_CASE("normalized Sobol indices: saturation, guards, additive split") {
  // y = theta via a PCE: all variance explained by the single parameter
  ParameterEnsemble one;
  one.marginals = {Marginal::uniform(0.0, 2.0)};
  one.names = {"t"};
  const ChaosBasis b1 = make_basis(one, 2);
  const IndexSets sets1 = build_index_sets(b1);
  Eigen::VectorXd y_coeffs = Eigen::VectorXd::Zero(b1.size());
  y_coeffs[0] = 1.0;
  y_coeffs[1] = 0.5;
  Eigen::MatrixXd S1(1, 1);
  S1(0, 0) = std::sqrt(sets1.v_first.col(0).dot(y_coeffs.cwiseProduct(y_coeffs)));
  const auto [m1, v1] = pce_moments(b1, y_coeffs);
  const SobolResult r1 = normalized_sobol(S1, Eigen::VectorXd::Constant(1, v1));
  CHECK(r1.defined[0] == 1);
  CHECK(r1.su(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // deterministic output flagged undefined
  const SobolResult r2 = normalized_sobol(Eigen::MatrixXd::Zero(1, 1),
                                          Eigen::VectorXd::Zero(1));
  CHECK(r2.defined[0] == 0);
  CHECK(r2.su(0, 0) == 0.0);

  // additive model y = theta_1 + theta_2 with equal marginal variances
  ParameterEnsemble two;
  two.marginals = {Marginal::uniform(-1.0, 1.0), Marginal::uniform(3.0, 5.0)};
  two.names = {"a", "b"};
  const ChaosBasis b2 = make_basis(two, 2);
  const IndexSets sets2 = build_index_sets(b2);
  const QuadratureGrid g2 = gauss_quadrature(two, 4);
  const Eigen::MatrixXd coeffs = project(
      b2, g2, [](const Eigen::VectorXd& th) { return Eigen::VectorXd::Constant(1, th[0] + th[1]); },
      1);
  Eigen::MatrixXd S(1, 2);
  const Eigen::VectorXd sq = coeffs.row(0).transpose().cwiseProduct(coeffs.row(0).transpose());
  for (int j = 0; j < 2; ++j) S(0, j) = std::sqrt(sets2.v_first.col(j).dot(sq));
  const auto [mm, vv] = pce_moments(b2, coeffs.row(0).transpose());
  const SobolResult r3 = normalized_sobol(S, Eigen::VectorXd::Constant(1, vv));
  CHECK(r3.su(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r3.su(0, 1) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("effective sensitivity thresholding") {
  Eigen::MatrixXd S(1, 1), smin(1, 1);
  S << 0.05;
  smin << 0.0837;
  CHECK(effective_sensitivity(S, smin)(0, 0) == 0.0);
  S << 0.1;
  CHECK(effective_sensitivity(S, smin)(0, 0) == doctest::Approx(0.1 - 0.0837).epsilon(1e-12));
  CHECK(effective_sensitivity(S, Eigen::MatrixXd::Zero(1, 1))(0, 0) == 0.1);
}

TEST_CASE("impact scores: zero, rectangle, full pipeline") {
  const TimeGrid grid(0.0, 2.0, 0.01);
  MatrixSeries dS;
  dS.times = grid.times();
  dS.values.assign(grid.size(), Eigen::MatrixXd::Zero(1, 2));
  CHECK(impact_score(dS, grid).cwiseAbs().maxCoeff() == 0.0);

  for (auto& v : dS.values) v.setConstant(0.3);
  CHECK(impact_score(dS, grid)(0, 0) == doctest::Approx(0.3 * 2.0).epsilon(1e-12));

  const SpringDamperRun run = spring_damper_run();
  const MatrixSeries S =
      sensitivity_trajectory(run.traj.times, run.traj.Y, 1, run.sets, SensKind::FirstOrder);
  MatrixSeries zero_floor;
  zero_floor.times = S.times;
  zero_floor.values.assign(S.size(), Eigen::MatrixXd::Zero(1, 2));
  const Eigen::MatrixXd scores = impact_score(effective_sensitivity(S, zero_floor), run.grid);
  CHECK(scores(0, 0) > 0.0);
  CHECK(scores(0, 1) > 0.0);
  CHECK(std::isfinite(scores.sum()));
}

TEST_CASE("sum rule, dominance and variance closure along a trajectory") {
  const SpringDamperRun run = spring_damper_run();
  const MatrixSeries Sf =
      sensitivity_trajectory(run.traj.times, run.traj.Y, 1, run.sets, SensKind::FirstOrder);
  const MatrixSeries St =
      sensitivity_trajectory(run.traj.times, run.traj.Y, 1, run.sets, SensKind::TotalOrder);
  const Eigen::MatrixXd var = variance_trajectory(run.traj.Y, 1, run.surrogate.basis);

  for (int k = 100; k < Sf.size(); k += 500) {
    const double v = var(0, k);
    if (v <= 1e-12) continue;
    double sum_first = 0.0, sum_total = 0.0;
    for (int j = 0; j < 2; ++j) {
      sum_first += Sf.values[k](0, j) * Sf.values[k](0, j) / v;
      sum_total += St.values[k](0, j) * St.values[k](0, j) / v;
      CHECK(St.values[k](0, j) >= Sf.values[k](0, j) - 1e-9);
    }
    CHECK(sum_first <= 1.0 + 1e-6);
    CHECK(sum_total >= sum_first - 1e-9);

    // closure: first-order parts plus interaction terms reconstruct v exactly
    const int ell = run.surrogate.basis.size();
    double all_terms = 0.0;
    for (int i = 1; i < ell; ++i)
      all_terms += run.surrogate.basis.norms[i] * run.traj.Y(i, k) * run.traj.Y(i, k);
    CHECK(all_terms == doctest::Approx(v).epsilon(1e-12));
    CHECK(sum_first * v <= all_terms + 1e-12);
  }
}

TEST_CASE("double-loop Monte Carlo Sobol oracle agrees at probe times") {
  // smaller-budget version of the acceptance check, for fast feedback
  const TimeGrid grid(0.0, 2.0, 0.01);
  const SpringDamperRun run = [] {
    SpringDamperRun r;
    ParameterEnsemble ensemble;
    ensemble.marginals = {Marginal::uniform(1.8, 2.2), Marginal::uniform(0.9, 1.1)};
    ensemble.names = {"c", "d"};
    const ChaosBasis basis = make_basis(ensemble, 3);
    r.surrogate = build_surrogate(spring_damper_lpv(), basis, gauss_quadrature(ensemble, 8));
    r.sets = build_index_sets(basis);
    r.grid = TimeGrid(0.0, 2.0, 0.01);
    r.traj = simulate_surrogate(
        r.surrogate,
        [](double t) { return Eigen::VectorXd::Constant(1, std::sin(2.0 * M_PI * 0.5 * t)); },
        r.grid);
    return r;
  }();

  const std::vector<int> probes{50, 100, 150, 200};
  const auto mc = oracles::spring_damper_double_loop_sobol(
      [](double t) { return std::sin(2.0 * M_PI * 0.5 * t); }, grid, probes, 2000, 64, 99);

  const MatrixSeries S =
      sensitivity_trajectory(run.traj.times, run.traj.Y, 1, run.sets, SensKind::FirstOrder);
  const Eigen::MatrixXd var = variance_trajectory(run.traj.Y, 1, run.surrogate.basis);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const int k = probes[p];
    const SobolResult su = normalized_sobol(S.values[k], var.col(k));
    REQUIRE(su.defined[0] == 1);
    for (int target = 0; target < 2; ++target) {
      const double se = std::max(mc.se(target, p), 1e-4);
      CHECK(std::abs(su.su(0, target) - mc.su(target, p)) <= 3.0 * se);
    }
  }
}

TEST_SUITE_END();
