#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "excite/grid.hpp"
#include "excite/models.hpp"
#include "excite/pce.hpp"

namespace excite {

/// Parameter/output sample pairs for one snapshot in time.
struct SampleSet {
  Eigen::MatrixXd theta;  // N x q
  Eigen::MatrixXd y;      // N x m
  std::uint64_t seed = 0;
};

/// i.i.d. draws per marginal; row-major fill order, bit-reproducible per seed.
Eigen::MatrixXd sample_parameters(const ParameterEnsemble& ensemble, int n_samples,
                                  std::uint64_t seed);

/// Population-normalized (N^{-1}) sample mean and covariance.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> empirical_moments(const Eigen::MatrixXd& values);

enum class BinStrategy { Equiprobable, Equiwidth };

struct BinPartition {
  int bins = 0;
  std::vector<int> assignment;  // bin id per sample
  Eigen::VectorXd weights;      // p_j = N_j / N
  int merged = 0;               // empty equiwidth bins merged into neighbors
};

/// Partition of one parameter axis; assignment depends on values only, never
/// on sample order.
BinPartition partition_bins(const Eigen::VectorXd& column, int bins, BinStrategy strategy);

/// Default bin count max(2, floor(sqrt(N))) capped at 100.
int default_bin_count(int n_samples);

/// Bures distance parts: squared mean (advective) and covariance (diffusive)
/// terms, W_B^2 = M^2 + V^2.
struct BuresParts {
  double w2b = 0.0;
  double m2 = 0.0;
  double v2 = 0.0;
};

BuresParts bures_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1,
                          const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sigma2);

/// Bin-wise sample-average estimates for one parameter axis.
///   xi_B   = sum_j p_j (M^2 + V^2)          (squared output units)
///   iota_B = xi_B / (2 tr Sigma_y)
///   iota_S = sum_j p_j M^2 / tr Sigma_y     (first-order Sobol estimate)
struct OtIndices {
  double xi_b = 0.0;
  double iota_b = 0.0;
  double iota_s = 0.0;
};

OtIndices ot_sensitivity(const SampleSet& samples, int parameter, int bins, BinStrategy strategy);

/// Indices along a simulated trajectory; the model runs exactly n_samples
/// times. Time steps with vanishing total variance are flagged undefined.
struct TransportTrajectory {
  std::vector<double> times;
  Eigen::MatrixXd xi_b;    // q x T
  Eigen::MatrixXd iota_b;  // q x T
  Eigen::MatrixXd iota_s;  // q x T
  std::vector<char> defined;
  MatrixSeries s_unnormalized;  // m x q per step, output units
  Eigen::MatrixXd theta;        // the sample set used
};

TransportTrajectory nonintrusive_sensitivity_trajectory(const BlackBoxModel& model,
                                                        const InputFn& u,
                                                        const ParameterEnsemble& ensemble,
                                                        int n_samples, int bins,
                                                        BinStrategy strategy,
                                                        const TimeGrid& grid, std::uint64_t seed);

/// CSV export: t, parameter, xi_B, iota_B, iota_S, S_unnormalized.
void write_transport_csv(const std::filesystem::path& path, const TransportTrajectory& traj,
                         const std::vector<std::string>& parameter_names);

}  // namespace excite
