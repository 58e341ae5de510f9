#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>

#include "excite/grid.hpp"
#include "excite/pce.hpp"

namespace excite {

using MatrixFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Parameter-varying linear system
///   x' = A(theta) x + B(theta) u + E(theta) + w,   x(0) = x0(theta)
///   y  = C(theta) x + D(theta) u + F(theta) + v
/// with Gaussian process/measurement noise w ~ N(omega_mean, sigma_w) and
/// v ~ N(nu_mean, sigma_nu).
struct LpvSystem {
  int n = 0, m = 0, l = 0;
  MatrixFn A, B, C, D;   // n x n, n x l, m x n, m x l
  VectorFn E, F, x0;     // n, m, n
  VectorFn omega_mean;   // n
  VectorFn nu_mean;      // m
  MatrixFn sigma_w;      // n x n
  MatrixFn sigma_nu;     // m x m
};

/// System skeleton with all affine/noise parts zero; set A, B, C, D after.
LpvSystem make_lpv(int n, int m, int l);

/// Deterministic Galerkin surrogate of an LpvSystem. Chaos coefficients are
/// grouped per physical state (state-major), matching Phi_n = I_n (x) phi.
struct SurrogateSystem {
  ChaosBasis basis;
  int n = 0, m = 0, l = 0;
  Eigen::MatrixXd Ap;  // nl x nl
  Eigen::MatrixXd Bp;  // nl x l
  Eigen::VectorXd Ep;  // nl
  Eigen::MatrixXd Cp;  // ml x nl
  Eigen::MatrixXd Dp;  // ml x l
  Eigen::VectorXd Fp;  // ml
  Eigen::VectorXd X0;  // nl

  int state_dim() const { return n * basis.size(); }
  int output_dim() const { return m * basis.size(); }
};

/// Projects all seven system objects onto the basis using the quadrature
/// grid; noise means are folded into Ep and Fp.
SurrogateSystem build_surrogate(const LpvSystem& sys, const ChaosBasis& basis,
                                const QuadratureGrid& grid);

struct SurrogateTrajectory {
  std::vector<double> times;
  Eigen::MatrixXd X;  // nl x (steps+1)
  Eigen::MatrixXd Y;  // ml x (steps+1)
};

/// Fixed-step RK4 integration of the surrogate ODE; throws SimulationError
/// (with the blow-up time) when the state leaves the finite range.
SurrogateTrajectory simulate_surrogate(const SurrogateSystem& s,
                                       const std::function<Eigen::VectorXd(double)>& u,
                                       const TimeGrid& grid);

/// y(t, theta) = Phi_m(theta)^T Y(t); one row per physical output.
Eigen::MatrixXd reconstruct_output(const SurrogateSystem& s, const SurrogateTrajectory& traj,
                                   const Eigen::VectorXd& theta);

/// Noise-induced output variance sigma_y^2(t) (m x steps+1): the Lyapunov ODE
/// V' = A V + V A^T + Sigma_w at theta_bar, then C(theta_bar) diag V + diag Sigma_nu.
Eigen::MatrixXd noise_output_variance(const LpvSystem& sys, const Eigen::VectorXd& theta_bar,
                                      const TimeGrid& grid);

/// S_min(t) = sigma_y(t) 1_q^T as an m x q series.
MatrixSeries noise_to_minimal_sensitivity(const LpvSystem& sys, const Eigen::VectorXd& theta_bar,
                                          const TimeGrid& grid, int q);

/// Mean channel (first chaos coefficient per output), m x (steps+1).
Eigen::MatrixXd surrogate_mean(const SurrogateSystem& s, const SurrogateTrajectory& traj);
/// Parametric output variance v^T Y^2 per output, m x (steps+1).
Eigen::MatrixXd surrogate_variance(const SurrogateSystem& s, const SurrogateTrajectory& traj);

/// Plain-text matrix container with basis metadata; values round-trip exactly.
void save_surrogate(const std::filesystem::path& path, const SurrogateSystem& s);
SurrogateSystem load_surrogate(const std::filesystem::path& path);

}  // namespace excite
