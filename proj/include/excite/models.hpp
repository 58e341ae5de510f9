#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "excite/grid.hpp"
#include "excite/lpv.hpp"
#include "excite/pce.hpp"

namespace excite {

/// Deterministic vehicle constants (middle-class car).
struct VehicleParams {
  double v0 = 13.89;     // initial speed, m/s
  double mass = 2700.0;  // kg
  double lf = 1.548;     // CoG to front axle, m
  double lr = 1.441;     // CoG to rear axle, m
  double mu_f = 1.0;
  double mu_r = 1.0;
  double Cf = 0.953;     // Pacejka shape factor, front
  double Cr = 1.878;     // Pacejka shape factor, rear
  double g = 9.81;       // m/s^2
  double Tf = 0.02857;   // tire force time constant, s
  double Tr = 0.02857;   // s
};

using InputFn = std::function<double(double)>;

/// Black-box simulation contract: y(t) in R^m from (theta, u, grid),
/// deterministic for fixed arguments.
struct BlackBoxModel {
  std::string name;
  int q = 0, m = 0, l = 1;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const InputFn&, const TimeGrid&)> simulate;
};

/// d x' = -c x + u from x(0) = 0, RK4; returns the displacement trace.
Eigen::RowVectorXd spring_damper_simulate(double c, double d, const InputFn& u,
                                          const TimeGrid& grid);

/// Nonlinear single track, theta = [Jz, Bf, Br, omega_s, d_s].
/// States [psi_dot, beta, v, Fyf, Fyr, delta, delta_dot]; output is the yaw
/// rate. Throws SimulationError when the speed drops below 1 m/s.
Eigen::RowVectorXd nonlinear_single_track_simulate(const Eigen::VectorXd& theta,
                                                   const VehicleParams& params, const InputFn& u,
                                                   const TimeGrid& grid);

/// Spring-damper as a 1-state LPV system, theta = (c, d).
LpvSystem spring_damper_lpv();

/// Linearized single track as LPV, theta = [Jz, Kf, Kr, omega_s, d_s, v],
/// states [psi_dot, beta, delta, delta_dot], output psi_dot.
LpvSystem linear_single_track_lpv(const VehicleParams& params);

/// Parameter priors from the worked examples.
ParameterEnsemble spring_damper_priors();    // c, d uniform
ParameterEnsemble nonlinear_vehicle_priors();  // q = 5, Gaussian
ParameterEnsemble linear_vehicle_priors();     // q = 6, Gaussian

/// Direct (sample-wise) integration of an LPV system as a black box.
BlackBoxModel blackbox_from_lpv(const LpvSystem& sys, const std::string& name);

/// Registry for the CLI: spring_damper | single_track_nl | single_track_lin.
BlackBoxModel find_model(const std::string& name, const VehicleParams& params = {});
LpvSystem find_lpv(const std::string& name, const VehicleParams& params = {});

/// Wraps u with a lookup table on the RK4 half grid; off-grid times fall
/// back to the original function.
InputFn cache_on_half_grid(InputFn u, const TimeGrid& grid);

}  // namespace excite
