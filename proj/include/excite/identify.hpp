#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "excite/excitation.hpp"
#include "excite/grid.hpp"
#include "excite/models.hpp"

namespace excite {

/// Synthetic measurement set tied to the input that generated it.
struct Measurement {
  std::vector<double> times;
  Eigen::MatrixXd y;  // m x T
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  SignalSpec input;
  TimeGrid grid;
  std::string id;
};

/// simulate(theta*, u) plus i.i.d. Gaussian noise, seeded.
Measurement synthesize_measurements(const BlackBoxModel& model, const Eigen::VectorXd& theta_star,
                                    const SignalSpec& input, const TimeGrid& grid,
                                    double noise_std, std::uint64_t seed,
                                    const std::string& id = "");

struct EstimateReport {
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd sigma;  // linearized per-parameter standard deviations
  double residual_norm = 0.0;
  double total_duration = 0.0;
  std::string dataset_id;
  bool identifiable = true;
  Eigen::VectorXd null_direction;  // set when J^T J is singular
  int iterations = 0;
};

/// Levenberg-damped Gauss-Newton least squares over all datasets; sigma from
/// the linearized covariance sigma_res^2 (J^T J)^{-1} with
/// sigma_res^2 = RSS / (#points - #params).
EstimateReport least_squares_fit(const BlackBoxModel& model,
                                 const std::vector<Measurement>& datasets,
                                 const Eigen::VectorXd& theta0, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi);

/// Linearized standard deviations at a fixed theta and fixed noise variance;
/// used to compare information content across dataset unions.
Eigen::VectorXd linearized_sigma(const BlackBoxModel& model,
                                 const std::vector<Measurement>& datasets,
                                 const Eigen::VectorXd& theta, double noise_var);

/// CSV mirroring the report table: dataset, total time, mean/std per parameter.
void write_estimates_csv(const std::filesystem::path& path,
                         const std::vector<EstimateReport>& reports,
                         const std::vector<std::string>& parameter_names);

}  // namespace excite
