#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "excite/grid.hpp"

namespace excite {

/// One ramp segment p = [u0, uT, tT, tDelta]: an affine rise over
/// [tT - tDelta, tT] saturated between its endpoint values; before the rise
/// it sits at u0, after tT it stays at uT.
struct Ramp {
  double u0 = 0.0;
  double uT = 0.0;
  double tT = 1.0;
  double tDelta = 1.0;

  double value(double t) const;
  double slope() const { return (uT - u0) / tDelta; }
};

/// Closed-form scalar input signal.
struct SignalSpec {
  enum class Kind { Zero, Sinusoid, RampSuperposition, PiecewiseBasis };
  Kind kind = Kind::Zero;

  // Sinusoid u0 * sin(2 pi f t - phase)
  double u0 = 0.0;
  double f = 0.0;
  double phase = 0.0;

  std::vector<Ramp> ramps;

  // PiecewiseBasis: u(t) = coeffs . basis(t)
  std::vector<std::function<double(double)>> basis_fns;
  Eigen::VectorXd coeffs;

  static SignalSpec zero();
  static SignalSpec sinusoid(double amplitude, double frequency, double phase);
  static SignalSpec ramp_superposition(std::vector<Ramp> ramps);

  double evaluate(double t) const;
  std::function<double(double)> fn() const;
  std::function<Eigen::VectorXd(double)> vector_fn() const;
};

double eval_signal(const SignalSpec& spec, double t);

/// Admissible input set: amplitude/rate bounds, boundary conditions and
/// per-parameter boxes over the horizon.
struct AdmissibleSet {
  std::optional<double> u_max;       // |u(t)| < u_max
  std::optional<double> du_max;      // |u'(t)| < du_max
  bool boundary_zero = false;        // u(0) = u(T) = 0
  Eigen::VectorXd lo, hi;            // boxes for the free parameters (may be empty)
  double horizon = 0.0;
};

struct FeasibilityReport {
  double amplitude_violation = 0.0;
  double rate_violation = 0.0;
  double boundary_violation = 0.0;
  double box_violation = 0.0;
  std::string method;  // "analytic" or "grid"

  double total() const {
    return amplitude_violation + rate_violation + boundary_violation + box_violation;
  }
  double squared_sum() const {
    return amplitude_violation * amplitude_violation + rate_violation * rate_violation +
           boundary_violation * boundary_violation + box_violation * box_violation;
  }
  bool feasible(double tol = 1e-9) const { return total() <= tol; }
};

/// Amplitude and rate are checked analytically per segment where closed
/// forms exist (ramps, sinusoids); otherwise on a 10x refined grid.
FeasibilityReport check_admissible(const SignalSpec& spec, const Eigen::VectorXd& p,
                                   const AdmissibleSet& set, const TimeGrid& grid);

/// Quadratic stage-cost weights; Q acts on vec(dS), R on u.
struct CostWeights {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  void validate(int mq, int l) const;
};

/// J = integral of vec(dS)^T Q vec(dS) - u^T R u, trapezoid rule.
double cost_functional(const MatrixSeries& dS, const Eigen::MatrixXd& u,
                       const CostWeights& weights, const TimeGrid& grid);

/// Cantelli (one-sided Chebyshev) certificate for Pr(y > y_max) <= alpha:
/// margin = y_max - mean - sigma sqrt((1-alpha)/alpha); >= 0 means certified.
double chance_constraint_margin(double mean, double variance, double y_max, double alpha);

/// CSV export: t, u_1..u_l (scalar signals here, so t,u_1).
void write_signal_csv(const std::filesystem::path& path, const SignalSpec& spec,
                      const TimeGrid& grid);

}  // namespace excite
