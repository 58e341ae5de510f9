#include "excite/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "excite/common.hpp"
#include "excite/util.hpp"

namespace excite {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double saturate(double x, double a, double b) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  return std::max(lo, std::min(x, hi));
}
}  // namespace

double Ramp::value(double t) const {
  return saturate(u0 + (t - (tT - tDelta)) / tDelta * (uT - u0), u0, uT);
}

SignalSpec SignalSpec::zero() { return SignalSpec{}; }

SignalSpec SignalSpec::sinusoid(double amplitude, double frequency, double phase) {
  if (amplitude < 0.0 || frequency < 0.0)
    throw std::invalid_argument("sinusoid: amplitude and frequency must be non-negative");
  SignalSpec s;
  s.kind = Kind::Sinusoid;
  s.u0 = amplitude;
  s.f = frequency;
  s.phase = phase;
  return s;
}

SignalSpec SignalSpec::ramp_superposition(std::vector<Ramp> ramps) {
  for (const Ramp& r : ramps)
    if (!(r.tDelta > 0.0) || r.tDelta > r.tT + 1e-12)
      throw std::invalid_argument("ramp: 0 < tDelta <= tT required");
  SignalSpec s;
  s.kind = Kind::RampSuperposition;
  s.ramps = std::move(ramps);
  return s;
}

double SignalSpec::evaluate(double t) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Sinusoid:
      return u0 * std::sin(kTwoPi * f * t - phase);
    case Kind::RampSuperposition: {
      double v = 0.0;
      for (const Ramp& r : ramps) v += r.value(t);
      return v;
    }
    case Kind::PiecewiseBasis: {
      double v = 0.0;
      for (int i = 0; i < coeffs.size(); ++i) v += coeffs[i] * basis_fns[i](t);
      return v;
    }
  }
  return 0.0;
}

std::function<double(double)> SignalSpec::fn() const {
  SignalSpec copy = *this;
  return [copy](double t) { return copy.evaluate(t); };
}

std::function<Eigen::VectorXd(double)> SignalSpec::vector_fn() const {
  SignalSpec copy = *this;
  return [copy](double t) { return Eigen::VectorXd::Constant(1, copy.evaluate(t)); };
}

double eval_signal(const SignalSpec& spec, double t) { return spec.evaluate(t); }

namespace {

void check_box(const Eigen::VectorXd& p, const AdmissibleSet& set, FeasibilityReport& rep) {
  if (set.lo.size() == 0) return;
  if (p.size() != set.lo.size() || p.size() != set.hi.size())
    throw std::invalid_argument("check_admissible: parameter/box size mismatch");
  double worst = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    worst = std::max(worst, set.lo[i] - p[i]);
    worst = std::max(worst, p[i] - set.hi[i]);
  }
  rep.box_violation = std::max(0.0, worst);
}

void analytic_sinusoid(const SignalSpec& s, const AdmissibleSet& set, FeasibilityReport& rep) {
  if (set.u_max) rep.amplitude_violation = std::max(0.0, s.u0 - *set.u_max);
  if (set.du_max) rep.rate_violation = std::max(0.0, kTwoPi * s.f * s.u0 - *set.du_max);
  rep.method = "analytic";
}

void analytic_ramps(const SignalSpec& s, const AdmissibleSet& set, const TimeGrid& grid,
                    FeasibilityReport& rep) {
  const double T = set.horizon > 0.0 ? set.horizon : grid.tf;
  std::set<double> breaks{0.0, T};
  for (const Ramp& r : s.ramps) {
    if (r.tT - r.tDelta > 0.0 && r.tT - r.tDelta < T) breaks.insert(r.tT - r.tDelta);
    if (r.tT > 0.0 && r.tT < T) breaks.insert(r.tT);
  }
  if (set.u_max) {
    double peak = 0.0;
    for (double t : breaks) peak = std::max(peak, std::abs(s.evaluate(t)));
    rep.amplitude_violation = std::max(0.0, peak - *set.u_max);
  }
  if (set.du_max) {
    // piecewise-affine: rate on each open interval is the sum of active slopes
    double peak_rate = 0.0;
    std::vector<double> pts(breaks.begin(), breaks.end());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const double mid = 0.5 * (pts[i] + pts[i + 1]);
      double rate = 0.0;
      for (const Ramp& r : s.ramps)
        if (mid > r.tT - r.tDelta && mid < r.tT) rate += r.slope();
      peak_rate = std::max(peak_rate, std::abs(rate));
    }
    rep.rate_violation = std::max(0.0, peak_rate - *set.du_max);
  }
  rep.method = "analytic";
}

void grid_check(const SignalSpec& s, const AdmissibleSet& set, const TimeGrid& grid,
                FeasibilityReport& rep) {
  const double T = set.horizon > 0.0 ? set.horizon : grid.tf;
  const double hf = grid.h / 10.0;
  const long n = std::lround(T / hf);
  double peak = 0.0, peak_rate = 0.0;
  double prev = s.evaluate(0.0);
  peak = std::abs(prev);
  for (long k = 1; k <= n; ++k) {
    const double v = s.evaluate(k * hf);
    peak = std::max(peak, std::abs(v));
    peak_rate = std::max(peak_rate, std::abs(v - prev) / hf);
    prev = v;
  }
  if (set.u_max) rep.amplitude_violation = std::max(0.0, peak - *set.u_max);
  if (set.du_max) rep.rate_violation = std::max(0.0, peak_rate - *set.du_max);
  rep.method = "grid";
}

}  // namespace

FeasibilityReport check_admissible(const SignalSpec& spec, const Eigen::VectorXd& p,
                                   const AdmissibleSet& set, const TimeGrid& grid) {
  FeasibilityReport rep;
  rep.method = "analytic";
  check_box(p, set, rep);

  switch (spec.kind) {
    case SignalSpec::Kind::Zero:
      break;
    case SignalSpec::Kind::Sinusoid:
      analytic_sinusoid(spec, set, rep);
      break;
    case SignalSpec::Kind::RampSuperposition:
      analytic_ramps(spec, set, grid, rep);
      break;
    case SignalSpec::Kind::PiecewiseBasis:
      grid_check(spec, set, grid, rep);
      break;
  }

  if (set.boundary_zero) {
    const double T = set.horizon > 0.0 ? set.horizon : grid.tf;
    rep.boundary_violation = std::max(std::abs(spec.evaluate(0.0)), std::abs(spec.evaluate(T)));
  }
  return rep;
}

void CostWeights::validate(int mq, int l) const {
  if (Q.rows() != mq || Q.cols() != mq)
    throw std::invalid_argument("cost weights: Q must be (m*q) x (m*q)");
  if (R.rows() != l || R.cols() != l) throw std::invalid_argument("cost weights: R must be l x l");
  auto check_psd = [](const Eigen::MatrixXd& M, const char* name) {
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw std::invalid_argument(std::string("cost weights: ") + name + " not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * scale)
      throw std::invalid_argument(std::string("cost weights: ") + name + " not PSD");
  };
  check_psd(Q, "Q");
  check_psd(R, "R");
}

double cost_functional(const MatrixSeries& dS, const Eigen::MatrixXd& u,
                       const CostWeights& weights, const TimeGrid& grid) {
  if (dS.size() != grid.size() || u.cols() != grid.size())
    throw std::invalid_argument("cost_functional: series/grid length mismatch");
  const int mq = dS.rows() * dS.cols();
  weights.validate(mq, static_cast<int>(u.rows()));

  double acc = 0.0;
  for (int k = 0; k < dS.size(); ++k) {
    const Eigen::Map<const Eigen::VectorXd> vec(dS.values[k].data(), mq);
    const double stage = vec.dot(weights.Q * vec) - u.col(k).dot(weights.R * u.col(k));
    const double w = (k == 0 || k == dS.size() - 1) ? 0.5 : 1.0;
    acc += w * stage;
  }
  return acc * grid.h;
}

double chance_constraint_margin(double mean, double variance, double y_max, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("chance_constraint_margin: alpha must be in (0, 1)");
  if (variance < 0.0) {
    if (variance < -1e-12) throw std::invalid_argument("chance_constraint_margin: variance < 0");
    variance = 0.0;
  }
  return y_max - mean - std::sqrt(variance) * std::sqrt((1.0 - alpha) / alpha);
}

void write_signal_csv(const std::filesystem::path& path, const SignalSpec& spec,
                      const TimeGrid& grid) {
  std::ostringstream out;
  out << "t,u_1\n";
  for (int k = 0; k < grid.size(); ++k) {
    const double t = grid.time(k);
    out << format_csv(t) << ',' << format_csv(spec.evaluate(t)) << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace excite
