#include "excite/identify.hpp"

#include <cmath>
#include <sstream>

#include "excite/common.hpp"
#include "excite/rng.hpp"
#include "excite/util.hpp"

namespace excite {

Measurement synthesize_measurements(const BlackBoxModel& model, const Eigen::VectorXd& theta_star,
                                    const SignalSpec& input, const TimeGrid& grid,
                                    double noise_std, std::uint64_t seed,
                                    const std::string& id) {
  if (noise_std < 0.0) throw std::invalid_argument("synthesize_measurements: noise_std >= 0");
  Measurement meas;
  meas.times = grid.times();
  meas.grid = grid;
  meas.input = input;
  meas.noise_std = noise_std;
  meas.seed = seed;
  meas.id = id;
  meas.y = model.simulate(theta_star, cache_on_half_grid(input.fn(), grid), grid);
  if (noise_std > 0.0) {
    Rng rng(seed);
    for (long k = 0; k < meas.y.cols(); ++k)
      for (long i = 0; i < meas.y.rows(); ++i) meas.y(i, k) += rng.normal(0.0, noise_std);
  }
  return meas;
}

namespace {

Eigen::VectorXd residuals(const BlackBoxModel& model, const std::vector<Measurement>& datasets,
                          const Eigen::VectorXd& theta) {
  long total = 0;
  for (const auto& d : datasets) total += d.y.size();
  Eigen::VectorXd r(total);
  long at = 0;
  for (const auto& d : datasets) {
    const Eigen::MatrixXd sim =
        model.simulate(theta, cache_on_half_grid(d.input.fn(), d.grid), d.grid);
    const Eigen::MatrixXd diff = d.y - sim;
    r.segment(at, diff.size()) = Eigen::Map<const Eigen::VectorXd>(diff.data(), diff.size());
    at += diff.size();
  }
  return r;
}

Eigen::MatrixXd residual_jacobian(const BlackBoxModel& model,
                                  const std::vector<Measurement>& datasets,
                                  const Eigen::VectorXd& theta, const Eigen::VectorXd& lo,
                                  const Eigen::VectorXd& hi) {
  const int q = static_cast<int>(theta.size());
  long total = 0;
  for (const auto& d : datasets) total += d.y.size();
  Eigen::MatrixXd J(total, q);
  for (int j = 0; j < q; ++j) {
    const double step = std::max(1e-6 * std::abs(theta[j]), 1e-8);
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] = std::min(theta[j] + step, hi[j]);
    tm[j] = std::max(theta[j] - step, lo[j]);
    const double spread = tp[j] - tm[j];
    J.col(j) = (residuals(model, datasets, tp) - residuals(model, datasets, tm)) / spread;
  }
  return J;
}

}  // namespace

EstimateReport least_squares_fit(const BlackBoxModel& model,
                                 const std::vector<Measurement>& datasets,
                                 const Eigen::VectorXd& theta0, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
  if (datasets.empty()) throw std::invalid_argument("least_squares_fit: no datasets");
  const int q = static_cast<int>(theta0.size());
  if (((theta0 - lo).minCoeff() < 0.0) || ((hi - theta0).minCoeff() < 0.0))
    throw std::invalid_argument("least_squares_fit: theta0 outside the box");

  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd r = residuals(model, datasets, theta);
  double rss = r.squaredNorm();
  double lambda = 1e-3;
  int iters = 0;
  bool converged = false;

  while (iters < 100 && !converged) {
    ++iters;
    const Eigen::MatrixXd J = residual_jacobian(model, datasets, theta, lo, hi);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;  // gradient of RSS/2 w.r.t. theta is -g

    bool stepped = false;
    for (int inner = 0; inner < 12; ++inner) {
      Eigen::MatrixXd M = JtJ;
      M.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd delta = M.ldlt().solve(g);
      Eigen::VectorXd cand = (theta + delta).cwiseMax(lo).cwiseMin(hi);
      const Eigen::VectorXd rc = residuals(model, datasets, cand);
      const double rss_c = rc.squaredNorm();
      if (std::isfinite(rss_c) && rss_c < rss) {
        const double gain = rss - rss_c;
        theta = cand;
        r = rc;
        rss = rss_c;
        lambda = std::max(1e-12, lambda / 10.0);
        stepped = true;
        converged = gain < 1e-14 * (1.0 + rss) ||
                    delta.lpNorm<Eigen::Infinity>() < 1e-10 * (1.0 + theta.lpNorm<Eigen::Infinity>());
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) break;
  }

  EstimateReport report;
  report.theta_hat = theta;
  report.residual_norm = std::sqrt(rss);
  report.iterations = iters;
  double duration = 0.0;
  std::ostringstream ids;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    duration += datasets[i].grid.duration();
    if (i) ids << '+';
    ids << datasets[i].id;
  }
  report.total_duration = duration;
  report.dataset_id = ids.str();

  long total = 0;
  for (const auto& d : datasets) total += d.y.size();
  const Eigen::MatrixXd J = residual_jacobian(model, datasets, theta, lo, hi);
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(JtJ);
  const double eig_max = es.eigenvalues().maxCoeff();
  if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, eig_max)) {
    report.identifiable = false;
    report.null_direction = es.eigenvectors().col(0);
    report.sigma = Eigen::VectorXd::Constant(q, std::numeric_limits<double>::quiet_NaN());
    return report;
  }
  const long dof = total - q;
  const double sigma2_res = dof > 0 ? rss / static_cast<double>(dof) : 0.0;
  const Eigen::MatrixXd cov = sigma2_res * JtJ.inverse();
  report.sigma = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return report;
}

Eigen::VectorXd linearized_sigma(const BlackBoxModel& model,
                                 const std::vector<Measurement>& datasets,
                                 const Eigen::VectorXd& theta, double noise_var) {
  const int q = static_cast<int>(theta.size());
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(q, -1e30);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(q, 1e30);
  const Eigen::MatrixXd J = residual_jacobian(model, datasets, theta, lo, hi);
  const Eigen::MatrixXd cov = noise_var * (J.transpose() * J).inverse();
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

void write_estimates_csv(const std::filesystem::path& path,
                         const std::vector<EstimateReport>& reports,
                         const std::vector<std::string>& parameter_names) {
  std::ostringstream out;
  out << "dataset,total_time";
  for (const auto& name : parameter_names) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (const auto& rep : reports) {
    out << rep.dataset_id << ',' << format_csv(rep.total_duration);
    for (int j = 0; j < rep.theta_hat.size(); ++j)
      out << ',' << format_csv(rep.theta_hat[j]) << ',' << format_csv(rep.sigma[j]);
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace excite
