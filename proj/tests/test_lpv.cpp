#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "excite/lpv.hpp"
#include "excite/models.hpp"
#include "excite/rng.hpp"
#include "support/oracles.hpp"

using namespace excite;

namespace {

ParameterEnsemble spring_damper_ensemble(double half_width_scale = 1.0) {
  ParameterEnsemble e;
  e.marginals = {Marginal::uniform(2.0 - 0.2 * half_width_scale, 2.0 + 0.2 * half_width_scale),
                 Marginal::uniform(1.0 - 0.1 * half_width_scale, 1.0 + 0.1 * half_width_scale)};
  e.names = {"c", "d"};
  return e;
}

SurrogateSystem spring_damper_surrogate(int degree, int quad_order = 0,
                                        double half_width_scale = 1.0) {
  const ParameterEnsemble ensemble = spring_damper_ensemble(half_width_scale);
  const ChaosBasis basis = make_basis(ensemble, degree);
  const QuadratureGrid grid =
      gauss_quadrature(ensemble, quad_order > 0 ? quad_order : 2 * (degree + 1));
  return build_surrogate(spring_damper_lpv(), basis, grid);
}

std::function<Eigen::VectorXd(double)> sine_input(double amplitude, double freq) {
  return [amplitude, freq](double t) {
    return Eigen::VectorXd::Constant(1, amplitude * std::sin(2.0 * M_PI * freq * t));
  };
}

}  // namespace

TEST_SUITE_BEGIN("lpv");

TEST_CASE("constant A projects to a block structure equivalent to I_l (x) A0") {
  ParameterEnsemble ensemble;
  ensemble.marginals = {Marginal::uniform(-1.0, 1.0), Marginal::gaussian(0.0, 1.0)};
  ensemble.names = {"a", "b"};
  const ChaosBasis basis = make_basis(ensemble, 2);
  const QuadratureGrid grid = gauss_quadrature(ensemble, 4);

  Eigen::MatrixXd A0(2, 2);
  A0 << -1.0, 0.5, 0.25, -2.0;
  LpvSystem sys = make_lpv(2, 1, 1);
  sys.A = [A0](const Eigen::VectorXd&) { return A0; };
  sys.B = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(2, 1); };
  sys.C = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(1, 2); };

  const SurrogateSystem s = build_surrogate(sys, basis, grid);
  const int ell = basis.size();
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(2 * ell, 2 * ell);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      expected.block(i * ell, j * ell, ell, ell) =
          A0(i, j) * Eigen::MatrixXd::Identity(ell, ell);
  CHECK((s.Ap - expected).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("spring-damper surrogate at d=3 has 10 states and 10 outputs") {
  const SurrogateSystem s = spring_damper_surrogate(3);
  CHECK(s.state_dim() == 10);
  CHECK(s.output_dim() == 10);
}

TEST_CASE("zero initial condition projects to zero") {
  const SurrogateSystem s = spring_damper_surrogate(2);
  CHECK(s.X0.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero input, zero state stays at zero") {
  const SurrogateSystem s = spring_damper_surrogate(2);
  const TimeGrid grid(0.0, 2.0, 1e-3);
  const SurrogateTrajectory traj = simulate_surrogate(
      s, [](double) { return Eigen::VectorXd::Zero(1); }, grid);
  CHECK(traj.Y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("surrogate mean channel matches the dense-quadrature reference") {
  const TimeGrid grid(0.0, 6.0, 2e-3);
  const auto ref = oracles::spring_damper_quadrature_moments(
      [](double t) { return std::sin(2.0 * M_PI * 0.5 * t); }, grid);

  double previous_error = 1e9;
  for (int degree : {1, 2, 3}) {
    const SurrogateSystem s = spring_damper_surrogate(degree);
    const SurrogateTrajectory traj = simulate_surrogate(s, sine_input(1.0, 0.5), grid);
    const Eigen::MatrixXd mean = surrogate_mean(s, traj);
    const double err = (mean.row(0).transpose() - ref.mean).cwiseAbs().maxCoeff();
    CHECK(err < previous_error + 1e-12);  // mean consistency improves with degree
    previous_error = err;
  }
  // the d=3 surrogate is well inside 1% relative error
  const SurrogateSystem s3 = spring_damper_surrogate(3);
  const SurrogateTrajectory traj3 = simulate_surrogate(s3, sine_input(1.0, 0.5), grid);
  const double scale = ref.mean.cwiseAbs().maxCoeff();
  CHECK((surrogate_mean(s3, traj3).row(0).transpose() - ref.mean).cwiseAbs().maxCoeff() <=
        0.005 * scale);
  const double vscale = ref.variance.maxCoeff();
  CHECK((surrogate_variance(s3, traj3).row(0).transpose() - ref.variance).cwiseAbs().maxCoeff() <=
        0.02 * vscale);
}

TEST_CASE("surrogate moments at a fixed time agree with a Monte Carlo oracle") {
  const TimeGrid grid(0.0, 2.5, 2e-3);
  const int n = 100000;
  const auto mc = oracles::spring_damper_mc_moments(
      [](double t) { return std::sin(2.0 * M_PI * 0.5 * t); }, grid, n, 424242);
  const SurrogateSystem s = spring_damper_surrogate(3);
  const SurrogateTrajectory traj = simulate_surrogate(s, sine_input(1.0, 0.5), grid);

  const int k = grid.size() - 1;
  const double mean = surrogate_mean(s, traj)(0, k);
  const double var = surrogate_variance(s, traj)(0, k);
  const double se_mean = std::sqrt(mc.variance[k] / n);
  const double se_var = mc.variance[k] * std::sqrt(2.0 / (n - 1.0));
  CHECK(std::abs(mean - mc.mean[k]) <= 3.0 * se_mean);
  CHECK(std::abs(var - mc.variance[k]) <= 3.0 * se_var);
}

TEST_CASE("degenerate (near-collapsed) marginals reduce to the nominal simulation") {
  const SurrogateSystem s = spring_damper_surrogate(2, 0, 1e-7);
  const TimeGrid grid(0.0, 4.0, 1e-3);
  const SurrogateTrajectory traj = simulate_surrogate(s, sine_input(1.0, 0.5), grid);
  const Eigen::RowVectorXd direct = spring_damper_simulate(
      2.0, 1.0, [](double t) { return std::sin(2.0 * M_PI * 0.5 * t); }, grid);
  CHECK((surrogate_mean(s, traj).row(0) - direct).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("reconstruct_output: midpoint, corner evaluation, zero trajectory") {
  const TimeGrid grid(0.0, 4.0, 1e-3);

  // degree-1 basis at the midpoint equals the mean channel
  const SurrogateSystem s1 = spring_damper_surrogate(1);
  const SurrogateTrajectory traj1 = simulate_surrogate(s1, sine_input(1.0, 0.5), grid);
  Eigen::VectorXd mid(2);
  mid << 2.0, 1.0;
  CHECK((reconstruct_output(s1, traj1, mid) - surrogate_mean(s1, traj1)).cwiseAbs().maxCoeff() <=
        1e-12);

  const SurrogateSystem s3 = spring_damper_surrogate(3);
  const SurrogateTrajectory traj3 = simulate_surrogate(s3, sine_input(1.0, 0.5), grid);
  Eigen::VectorXd corner(2);
  corner << 2.2, 1.1;
  const Eigen::MatrixXd rec = reconstruct_output(s3, traj3, corner);
  const Eigen::RowVectorXd direct = spring_damper_simulate(
      2.2, 1.1, [](double t) { return std::sin(2.0 * M_PI * 0.5 * t); }, grid);
  const double amplitude = direct.cwiseAbs().maxCoeff();
  CHECK((rec.row(0) - direct).cwiseAbs().maxCoeff() <= 0.02 * amplitude);

  SurrogateTrajectory zero = traj3;
  zero.Y.setZero();
  CHECK(reconstruct_output(s3, zero, corner).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise floor: spring-damper measurement noise gives a constant S_min") {
  LpvSystem sys = spring_damper_lpv();
  sys.sigma_nu = [](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, 0.007);
  };
  const TimeGrid grid(0.0, 2.0, 1e-3);
  Eigen::VectorXd theta_bar(2);
  theta_bar << 2.0, 1.0;
  const MatrixSeries smin = noise_to_minimal_sensitivity(sys, theta_bar, grid, 2);
  REQUIRE(smin.size() == grid.size());
  for (int k = 0; k < smin.size(); ++k) {
    CHECK(smin.values[k].rows() == 1);
    CHECK(smin.values[k].cols() == 2);
    for (int j = 0; j < 2; ++j)
      CHECK(smin.values[k](0, j) == doctest::Approx(std::sqrt(0.007)).epsilon(1e-12));
  }

  LpvSystem clean = spring_damper_lpv();
  const MatrixSeries zero = noise_to_minimal_sensitivity(clean, theta_bar, grid, 2);
  for (int k = 0; k < zero.size(); ++k) CHECK(zero.values[k].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Lyapunov propagation: scalar stationary variance is sigma_w / (2a)") {
  const double a = 1.6, sw = 0.34;
  LpvSystem sys = make_lpv(1, 1, 1);
  sys.A = [a](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, -a); };
  sys.C = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(1, 1); };
  sys.sigma_w = [sw](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, sw); };
  const TimeGrid grid(0.0, 10.0 / a, 1e-3);
  const Eigen::MatrixXd sigma2 = noise_output_variance(sys, Eigen::VectorXd::Zero(1), grid);
  CHECK(sigma2(0, grid.size() - 1) == doctest::Approx(sw / (2.0 * a)).epsilon(1e-6));
}

TEST_CASE("noise covariance must be symmetric PSD") {
  LpvSystem sys = spring_damper_lpv();
  sys.sigma_nu = [](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, -0.1);
  };
  Eigen::VectorXd theta_bar(2);
  theta_bar << 2.0, 1.0;
  CHECK_THROWS_AS(noise_output_variance(sys, theta_bar, TimeGrid(0.0, 1.0, 1e-2)), DataError);
}

TEST_CASE("Galerkin exactness: polynomial coefficients stabilize at the exactness order") {
  ParameterEnsemble ensemble;
  ensemble.marginals = {Marginal::uniform(-1.0, 1.0), Marginal::uniform(0.5, 1.5)};
  ensemble.names = {"a", "b"};
  const int degree = 2, p = 2;  // matrix entries polynomial of degree <= 2
  const ChaosBasis basis = make_basis(ensemble, degree);

  LpvSystem sys = make_lpv(1, 1, 1);
  sys.A = [](const Eigen::VectorXd& th) {
    return Eigen::MatrixXd::Constant(1, 1, -1.0 - 0.3 * th[0] * th[1] - 0.2 * th[1] * th[1]);
  };
  sys.B = [](const Eigen::VectorXd& th) {
    return Eigen::MatrixXd::Constant(1, 1, 1.0 + 0.5 * th[0]);
  };
  sys.C = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(1, 1); };

  const int exact_order = (p + 2 * degree + 1 + 1) / 2;  // ceil((p + 2d + 1)/2)
  const SurrogateSystem s1 = build_surrogate(sys, basis, gauss_quadrature(ensemble, exact_order));
  const SurrogateSystem s2 =
      build_surrogate(sys, basis, gauss_quadrature(ensemble, exact_order + 3));
  CHECK((s1.Ap - s2.Ap).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((s1.Bp - s2.Bp).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((s1.Cp - s2.Cp).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("affine superposition of surrogate responses") {
  const SurrogateSystem s = spring_damper_surrogate(2);
  const TimeGrid grid(0.0, 3.0, 1e-3);
  const auto u1 = sine_input(1.0, 0.5);
  const auto u2 = sine_input(0.4, 1.3);
  const auto sum = [&](double t) -> Eigen::VectorXd { return u1(t) + u2(t); };
  const auto zero = [](double) { return Eigen::VectorXd::Zero(1); };

  const Eigen::MatrixXd y1 = simulate_surrogate(s, u1, grid).Y;
  const Eigen::MatrixXd y2 = simulate_surrogate(s, u2, grid).Y;
  const Eigen::MatrixXd ysum = simulate_surrogate(s, sum, grid).Y;
  const Eigen::MatrixXd y0 = simulate_surrogate(s, zero, grid).Y;
  CHECK((ysum - (y1 + y2 - y0)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("surrogate container file round-trips bit-exactly") {
  const SurrogateSystem s = spring_damper_surrogate(3);
  const auto path = std::filesystem::temp_directory_path() / "excite_surrogate_roundtrip.txt";
  save_surrogate(path, s);
  const SurrogateSystem r = load_surrogate(path);
  CHECK(r.n == s.n);
  CHECK(r.basis.size() == s.basis.size());
  CHECK((r.Ap - s.Ap).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.Bp - s.Bp).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.Cp - s.Cp).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.X0 - s.X0).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("diverging surrogate reports the blow-up time") {
  ParameterEnsemble ensemble;
  ensemble.marginals = {Marginal::uniform(0.9, 1.1)};
  ensemble.names = {"a"};
  const ChaosBasis basis = make_basis(ensemble, 1);
  LpvSystem sys = make_lpv(1, 1, 1);
  sys.A = [](const Eigen::VectorXd& th) {
    return Eigen::MatrixXd::Constant(1, 1, 400.0 * th[0]);  // strongly unstable
  };
  sys.B = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(1, 1); };
  sys.C = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(1, 1); };
  const SurrogateSystem s = build_surrogate(sys, basis, gauss_quadrature(ensemble, 4));
  const TimeGrid grid(0.0, 20.0, 1e-2);
  CHECK_THROWS_AS(
      simulate_surrogate(s, [](double) { return Eigen::VectorXd::Ones(1); }, grid),
      SimulationError);
}

TEST_SUITE_END();
