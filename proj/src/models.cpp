#include "excite/models.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "excite/common.hpp"

namespace excite {

Eigen::RowVectorXd spring_damper_simulate(double c, double d, const InputFn& u,
                                          const TimeGrid& grid) {
  if (!(c > 0.0) || !(d > 0.0))
    throw std::invalid_argument("spring_damper_simulate: c > 0 and d > 0 required");
  const int steps = grid.steps();
  const double h = grid.h;
  const double a = -c / d;
  const double b = 1.0 / d;

  Eigen::RowVectorXd x(steps + 1);
  x[0] = 0.0;
  double xk = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = grid.time(k);
    const double u0 = u(t);
    const double um = u(t + 0.5 * h);
    const double u1 = u(t + h);
    const double k1 = a * xk + b * u0;
    const double k2 = a * (xk + 0.5 * h * k1) + b * um;
    const double k3 = a * (xk + 0.5 * h * k2) + b * um;
    const double k4 = a * (xk + h * k3) + b * u1;
    xk += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    x[k + 1] = xk;
  }
  return x;
}

namespace {

struct VehicleState {
  // [psi_dot, beta, v, Fyf, Fyr, delta, delta_dot]
  double s[7];
};

inline void vehicle_deriv(const double* x, double u, const VehicleParams& p, double Jz, double Bf,
                          double Br, double ws, double ds, double* dx) {
  const double psid = x[0], beta = x[1], v = x[2];
  const double Fyf = x[3], Fyr = x[4], delta = x[5], ddelta = x[6];

  const double cb = std::cos(beta), sb = std::sin(beta);
  const double alpha_f = delta - std::atan((p.lf * psid + v * sb) / (v * cb));
  const double alpha_r = -std::atan((p.lr * psid - v * sb) / (v * cb));
  const double fzf = p.mu_f * p.Cf * p.mass * p.g * p.lr / (p.lf + p.lr);
  const double fzr = p.mu_r * p.Cr * p.mass * p.g * p.lf / (p.lf + p.lr);
  const double Fstat_f = fzf * std::atan(Bf * alpha_f);
  const double Fstat_r = fzr * std::atan(Br * alpha_r);

  const double cd = std::cos(delta);
  dx[0] = (p.lf * Fyf * cd - p.lr * Fyr) / Jz;
  dx[1] = (Fyf * cd + Fyr) / (p.mass * v) - psid;
  dx[2] = (Fyf * std::sin(delta - beta) + Fyr * sb) / p.mass;  // Fx = 0
  dx[3] = (Fstat_f - Fyf) / p.Tf;
  dx[4] = (Fstat_r - Fyr) / p.Tr;
  dx[5] = ddelta;
  dx[6] = ws * ws * (u - delta) - 2.0 * ds * ws * ddelta;
}

}  // namespace

Eigen::RowVectorXd nonlinear_single_track_simulate(const Eigen::VectorXd& theta,
                                                   const VehicleParams& p, const InputFn& u,
                                                   const TimeGrid& grid) {
  if (theta.size() != 5)
    throw std::invalid_argument("nonlinear_single_track_simulate: theta must be length 5");
  const double Jz = theta[0], Bf = theta[1], Br = theta[2], ws = theta[3], ds = theta[4];

  const int steps = grid.steps();
  const double h = grid.h;
  double x[7] = {0.0, 0.0, p.v0, 0.0, 0.0, 0.0, 0.0};
  double k1[7], k2[7], k3[7], k4[7], tmp[7];

  Eigen::RowVectorXd psid(steps + 1);
  psid[0] = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = grid.time(k);
    if (x[2] < 1.0)
      throw SimulationError("vehicle speed dropped below 1 m/s", t);
    const double u0 = u(t), um = u(t + 0.5 * h), u1 = u(t + h);
    vehicle_deriv(x, u0, p, Jz, Bf, Br, ws, ds, k1);
    for (int i = 0; i < 7; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    vehicle_deriv(tmp, um, p, Jz, Bf, Br, ws, ds, k2);
    for (int i = 0; i < 7; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    vehicle_deriv(tmp, um, p, Jz, Bf, Br, ws, ds, k3);
    for (int i = 0; i < 7; ++i) tmp[i] = x[i] + h * k3[i];
    vehicle_deriv(tmp, u1, p, Jz, Bf, Br, ws, ds, k4);
    bool finite = true;
    for (int i = 0; i < 7; ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      finite = finite && std::isfinite(x[i]);
    }
    if (!finite) throw SimulationError("vehicle state diverged", grid.time(k + 1));
    psid[k + 1] = x[0];
  }
  return psid;
}

LpvSystem spring_damper_lpv() {
  LpvSystem sys = make_lpv(1, 1, 1);
  sys.A = [](const Eigen::VectorXd& th) {
    Eigen::MatrixXd A(1, 1);
    A(0, 0) = -th[0] / th[1];
    return A;
  };
  sys.B = [](const Eigen::VectorXd& th) {
    Eigen::MatrixXd B(1, 1);
    B(0, 0) = 1.0 / th[1];
    return B;
  };
  sys.C = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(1, 1); };
  return sys;
}

LpvSystem linear_single_track_lpv(const VehicleParams& p) {
  LpvSystem sys = make_lpv(4, 1, 1);
  const double mass = p.mass, lf = p.lf, lr = p.lr, g = p.g;
  sys.A = [mass, lf, lr, g](const Eigen::VectorXd& th) {
    const double Jz = th[0], Kf = th[1], Kr = th[2], ws = th[3], ds = th[4], v = th[5];
    const double cf = Kf * mass * g * lr / (lf + lr);
    const double cr = Kr * mass * g * lf / (lf + lr);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
    A(0, 0) = (-cf * lf * lf - cr * lr * lr) / Jz;
    A(0, 1) = (cr * lr - cf * lf) / Jz;
    A(0, 2) = cf * lf / Jz;
    A(1, 0) = (-cf * lf + cr * lr) / (mass * v * v) - 1.0;
    A(1, 1) = -(cf + cr) / (mass * v);
    A(1, 2) = cf / (mass * v);
    A(2, 3) = 1.0;
    A(3, 2) = -ws * ws;
    A(3, 3) = -2.0 * ds * ws;
    return A;
  };
  sys.B = [](const Eigen::VectorXd& th) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(4, 1);
    B(3, 0) = th[3] * th[3];
    return B;
  };
  sys.C = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd C(1, 4);
    C << 1.0, 0.0, 0.0, 0.0;
    return C;
  };
  return sys;
}

ParameterEnsemble spring_damper_priors() {
  ParameterEnsemble e;
  e.marginals = {Marginal::uniform(1.8, 2.2), Marginal::uniform(0.9, 1.1)};
  e.names = {"c", "d"};
  return e;
}

ParameterEnsemble nonlinear_vehicle_priors() {
  ParameterEnsemble e;
  e.marginals = {Marginal::gaussian(6000.0, 1000.0), Marginal::gaussian(10.0, 1.0),
                 Marginal::gaussian(10.0, 1.0), Marginal::gaussian(17.0, 4.0),
                 Marginal::gaussian(0.75, 0.05)};
  e.names = {"J_z", "B_f", "B_r", "omega_s", "d_s"};
  return e;
}

ParameterEnsemble linear_vehicle_priors() {
  ParameterEnsemble e;
  e.marginals = {Marginal::gaussian(6000.0, 1000.0), Marginal::gaussian(9.53, 1.20),
                 Marginal::gaussian(18.8, 2.00),     Marginal::gaussian(17.0, 4.0),
                 Marginal::gaussian(0.75, 0.05),     Marginal::gaussian(11.27, 0.87)};
  e.names = {"J_z", "K_f", "K_r", "omega_s", "d_s", "v"};
  return e;
}

BlackBoxModel blackbox_from_lpv(const LpvSystem& sys, const std::string& name) {
  auto shared = std::make_shared<LpvSystem>(sys);
  BlackBoxModel model;
  model.name = name;
  model.q = -1;  // parameter count is the caller's ensemble choice
  model.m = sys.m;
  model.l = sys.l;
  model.simulate = [shared](const Eigen::VectorXd& theta, const InputFn& u,
                            const TimeGrid& grid) {
    const LpvSystem& s = *shared;
    const Eigen::MatrixXd A = s.A(theta);
    const Eigen::MatrixXd B = s.B(theta);
    const Eigen::MatrixXd C = s.C(theta);
    const Eigen::MatrixXd D = s.D(theta);
    const Eigen::VectorXd E = s.E(theta);
    const Eigen::VectorXd F = s.F(theta);
    const int steps = grid.steps();
    const double h = grid.h;
    Eigen::VectorXd x = s.x0(theta);
    Eigen::MatrixXd y(s.m, steps + 1);
    auto output = [&](int k, const Eigen::VectorXd& xs) {
      y.col(k) = C * xs + D * Eigen::VectorXd::Constant(s.l, u(grid.time(k))) + F;
    };
    output(0, x);
    Eigen::VectorXd k1(s.n), k2(s.n), k3(s.n), k4(s.n);
    for (int k = 0; k < steps; ++k) {
      const double t = grid.time(k);
      const double u0 = u(t), um = u(t + 0.5 * h), u1 = u(t + h);
      auto f = [&](const Eigen::VectorXd& xs, double uv) -> Eigen::VectorXd {
        return A * xs + B * Eigen::VectorXd::Constant(s.l, uv) + E;
      };
      k1 = f(x, u0);
      k2 = f(x + 0.5 * h * k1, um);
      k3 = f(x + 0.5 * h * k2, um);
      k4 = f(x + h * k3, u1);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) throw SimulationError("LPV state diverged", grid.time(k + 1));
      output(k + 1, x);
    }
    return y;
  };
  return model;
}

BlackBoxModel find_model(const std::string& name, const VehicleParams& params) {
  if (name == "spring_damper") {
    BlackBoxModel model;
    model.name = name;
    model.q = 2;
    model.m = 1;
    model.simulate = [](const Eigen::VectorXd& theta, const InputFn& u, const TimeGrid& grid) {
      return Eigen::MatrixXd(spring_damper_simulate(theta[0], theta[1], u, grid));
    };
    return model;
  }
  if (name == "single_track_nl") {
    BlackBoxModel model;
    model.name = name;
    model.q = 5;
    model.m = 1;
    model.simulate = [params](const Eigen::VectorXd& theta, const InputFn& u,
                              const TimeGrid& grid) {
      return Eigen::MatrixXd(nonlinear_single_track_simulate(theta, params, u, grid));
    };
    return model;
  }
  if (name == "single_track_lin") {
    BlackBoxModel model = blackbox_from_lpv(linear_single_track_lpv(params), name);
    model.q = 6;
    return model;
  }
  throw ConfigError("unknown model: " + name);
}

LpvSystem find_lpv(const std::string& name, const VehicleParams& params) {
  if (name == "spring_damper") return spring_damper_lpv();
  if (name == "single_track_lin") return linear_single_track_lpv(params);
  throw ConfigError("model has no LPV form: " + name);
}

InputFn cache_on_half_grid(InputFn u, const TimeGrid& grid) {
  const int steps = grid.steps();
  auto table = std::make_shared<std::vector<double>>(2 * steps + 1);
  for (int k = 0; k <= 2 * steps; ++k) (*table)[k] = u(grid.t0 + 0.5 * k * grid.h);
  const double t0 = grid.t0;
  const double half = 0.5 * grid.h;
  return [table, u, t0, half](double t) {
    const double idx = (t - t0) / half;
    const long k = std::lround(idx);
    if (k >= 0 && k < static_cast<long>(table->size()) && std::abs(idx - k) < 1e-9)
      return (*table)[k];
    return u(t);
  };
}

}  // namespace excite
