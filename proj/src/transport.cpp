#include "excite/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "excite/common.hpp"
#include "excite/rng.hpp"
#include "excite/util.hpp"

namespace excite {

namespace {
constexpr double kVarianceEps = 1e-12;
}

Eigen::MatrixXd sample_parameters(const ParameterEnsemble& ensemble, int n_samples,
                                  std::uint64_t seed) {
  ensemble.validate();
  if (n_samples < 2) throw std::invalid_argument("sample_parameters: need at least 2 samples");
  Rng rng(seed);
  Eigen::MatrixXd theta(n_samples, ensemble.dim());
  for (int i = 0; i < n_samples; ++i) {
    for (int j = 0; j < ensemble.dim(); ++j) {
      const Marginal& m = ensemble.marginals[j];
      theta(i, j) = m.kind == Marginal::Kind::Uniform ? rng.uniform(m.a, m.b)
                                                      : rng.normal(m.a, m.b);
    }
  }
  return theta;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> empirical_moments(const Eigen::MatrixXd& values) {
  const long n = values.rows();
  if (n < 1) throw std::invalid_argument("empirical_moments: need at least one row");
  const Eigen::VectorXd mu = values.colwise().mean();
  const Eigen::MatrixXd centered = values.rowwise() - mu.transpose();
  const Eigen::MatrixXd sigma = centered.transpose() * centered / static_cast<double>(n);
  return {mu, sigma};
}

int default_bin_count(int n_samples) {
  const int m = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_samples))));
  return std::min(100, std::max(2, m));
}

BinPartition partition_bins(const Eigen::VectorXd& column, int bins, BinStrategy strategy) {
  const int n = static_cast<int>(column.size());
  if (bins < 2) throw std::invalid_argument("partition_bins: need at least 2 bins");
  if (bins > n) throw std::invalid_argument("partition_bins: more bins than samples");

  BinPartition part;
  part.assignment.assign(n, 0);

  if (strategy == BinStrategy::Equiprobable) {
    // Rank-based split; ties are ordered by value only, so the assignment is
    // invariant under permutations of the input.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return column[a] < column[b]; });
    std::vector<long> counts(bins, n / bins);
    for (int j = 0; j < n % bins; ++j) ++counts[j];
    int bin = 0;
    long used = 0;
    for (int r = 0; r < n; ++r) {
      while (used >= counts[bin]) {
        ++bin;
        used = 0;
      }
      part.assignment[order[r]] = bin;
      ++used;
    }
    part.bins = bins;
  } else {
    const double lo = column.minCoeff(), hi = column.maxCoeff();
    const double width = hi - lo;
    if (!(width > 0.0)) throw DataError("partition_bins: degenerate sample range");
    std::vector<int> raw(n);
    std::vector<long> counts(bins, 0);
    for (int i = 0; i < n; ++i) {
      int b = static_cast<int>((column[i] - lo) / width * bins);
      b = std::min(b, bins - 1);
      raw[i] = b;
      ++counts[b];
    }
    // merge empty bins into their left (or right, at the boundary) neighbor
    std::vector<int> remap(bins);
    int next_id = 0;
    for (int b = 0; b < bins; ++b) {
      if (counts[b] > 0) {
        remap[b] = next_id++;
      } else {
        remap[b] = -1;
        ++part.merged;
      }
    }
    if (next_id < 2) throw DataError("partition_bins: all samples fall into one bin");
    for (int b = 0; b < bins; ++b) {
      if (remap[b] >= 0) continue;
      int left = b - 1;
      while (left >= 0 && remap[left] < 0) --left;
      if (left >= 0) {
        remap[b] = remap[left];
      } else {
        int right = b + 1;
        while (remap[right] < 0) ++right;
        remap[b] = remap[right];
      }
    }
    for (int i = 0; i < n; ++i) part.assignment[i] = remap[raw[i]];
    part.bins = next_id;
  }

  std::vector<long> sizes(part.bins, 0);
  for (int i = 0; i < n; ++i) ++sizes[part.assignment[i]];
  part.weights.resize(part.bins);
  for (int b = 0; b < part.bins; ++b) {
    if (sizes[b] == 0) throw DataError("partition_bins: empty bin");
    part.weights[b] = static_cast<double>(sizes[b]) / n;
  }
  return part;
}

namespace {

void check_covariance(const Eigen::MatrixXd& S, const char* name) {
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if (S.rows() != S.cols()) throw DataError(std::string(name) + ": covariance not square");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw DataError(std::string(name) + ": covariance not symmetric");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S, const char* name) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-8 * scale)
    throw DataError(std::string(name) + ": covariance is indefinite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

BuresParts bures_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1,
                          const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sigma2) {
  if (mu1.size() != mu2.size() || sigma1.rows() != mu1.size() || sigma2.rows() != mu2.size())
    throw std::invalid_argument("bures_distance: dimension mismatch");
  check_covariance(sigma1, "bures_distance (first)");
  check_covariance(sigma2, "bures_distance (second)");

  BuresParts parts;
  parts.m2 = (mu1 - mu2).squaredNorm();
  if (mu1.size() == 1) {
    if (sigma1(0, 0) < -1e-12 || sigma2(0, 0) < -1e-12)
      throw DataError("bures_distance: negative scalar variance");
    const double s1 = std::sqrt(std::max(0.0, sigma1(0, 0)));
    const double s2 = std::sqrt(std::max(0.0, sigma2(0, 0)));
    parts.v2 = (s1 - s2) * (s1 - s2);
  } else {
    const Eigen::MatrixXd root2 = psd_sqrt(sigma2, "bures_distance (second)");
    Eigen::MatrixXd inner = root2 * sigma1 * root2;
    inner = 0.5 * (inner + inner.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
    const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    parts.v2 = std::max(0.0, sigma1.trace() + sigma2.trace() - 2.0 * cross);
  }
  parts.w2b = parts.m2 + parts.v2;
  return parts;
}

OtIndices ot_sensitivity(const SampleSet& samples, int parameter, int bins,
                         BinStrategy strategy) {
  const long n = samples.theta.rows();
  if (samples.y.rows() != n) throw std::invalid_argument("ot_sensitivity: row count mismatch");
  if (parameter < 0 || parameter >= samples.theta.cols())
    throw std::invalid_argument("ot_sensitivity: parameter index out of range");
  if (bins <= 0) bins = default_bin_count(static_cast<int>(n));

  const auto [mu, sigma] = empirical_moments(samples.y);
  const double total = sigma.trace();
  if (total <= kVarianceEps)
    throw DataError("ot_sensitivity: output variance is zero, indices undefined");

  const BinPartition part = partition_bins(samples.theta.col(parameter), bins, strategy);

  OtIndices idx;
  double advective = 0.0;
  for (int b = 0; b < part.bins; ++b) {
    std::vector<long> members;
    for (long i = 0; i < n; ++i)
      if (part.assignment[i] == b) members.push_back(i);
    Eigen::MatrixXd yb(members.size(), samples.y.cols());
    for (std::size_t r = 0; r < members.size(); ++r) yb.row(r) = samples.y.row(members[r]);
    const auto [mub, sigmab] = empirical_moments(yb);
    const BuresParts parts = bures_distance(mu, sigma, mub, sigmab);
    idx.xi_b += part.weights[b] * parts.w2b;
    advective += part.weights[b] * parts.m2;
  }
  idx.iota_b = idx.xi_b / (2.0 * total);
  idx.iota_s = advective / total;
  return idx;
}

TransportTrajectory nonintrusive_sensitivity_trajectory(
    const BlackBoxModel& model, const InputFn& u, const ParameterEnsemble& ensemble,
    int n_samples, int bins, BinStrategy strategy, const TimeGrid& grid, std::uint64_t seed) {
  ensemble.validate();
  const int q = ensemble.dim();
  const int m = model.m;
  const int T = grid.size();
  if (bins <= 0) bins = default_bin_count(n_samples);

  TransportTrajectory traj;
  traj.times = grid.times();
  traj.theta = sample_parameters(ensemble, n_samples, seed);

  // One simulation per sample, never re-run per time step.
  const InputFn cached = cache_on_half_grid(u, grid);
  std::vector<Eigen::MatrixXd> sims(n_samples);
  parallel_for(n_samples, [&](int i) {
    try {
      sims[i] = model.simulate(traj.theta.row(i), cached, grid);
    } catch (const SimulationError& err) {
      throw SimulationError(std::string(err.what()) + " (sample " + std::to_string(i) + ")",
                            err.time, i);
    }
    if (sims[i].rows() != m || sims[i].cols() != T)
      throw SimulationError("model returned wrong output shape (sample " + std::to_string(i) + ")",
                            grid.t0, i);
  });

  std::vector<BinPartition> parts(q);
  for (int j = 0; j < q; ++j) parts[j] = partition_bins(traj.theta.col(j), bins, strategy);

  traj.xi_b.resize(q, T);
  traj.iota_b.resize(q, T);
  traj.iota_s.resize(q, T);
  traj.defined.assign(T, 0);
  traj.s_unnormalized.times = traj.times;
  traj.s_unnormalized.values.assign(T, Eigen::MatrixXd::Zero(m, q));

  std::vector<std::vector<long>> bin_sizes(q);
  for (int j = 0; j < q; ++j) {
    bin_sizes[j].assign(parts[j].bins, 0);
    for (int i = 0; i < n_samples; ++i) ++bin_sizes[j][parts[j].assignment[i]];
  }

  Eigen::MatrixXd yk(n_samples, m);
  for (int k = 0; k < T; ++k) {
    for (int i = 0; i < n_samples; ++i) yk.row(i) = sims[i].col(k).transpose();
    const auto [mu, sigma] = empirical_moments(yk);
    const double total = sigma.trace();
    if (total <= kVarianceEps) {
      traj.xi_b.col(k).setZero();
      traj.iota_b.col(k).setZero();
      traj.iota_s.col(k).setZero();
      continue;
    }
    traj.defined[k] = 1;

    for (int j = 0; j < q; ++j) {
      const BinPartition& part = parts[j];
      double xi = 0.0, advective = 0.0;
      Eigen::VectorXd adv_per_output = Eigen::VectorXd::Zero(m);

      if (m == 1) {
        const double mu0 = mu[0];
        const double sd0 = std::sqrt(std::max(0.0, sigma(0, 0)));
        std::vector<double> sum_y(part.bins, 0.0), sum_y2(part.bins, 0.0);
        const double* col = yk.col(0).data();
        for (int i = 0; i < n_samples; ++i) {
          const int b = part.assignment[i];
          sum_y[b] += col[i];
          sum_y2[b] += col[i] * col[i];
        }
        for (int b = 0; b < part.bins; ++b) {
          const double nb = static_cast<double>(bin_sizes[j][b]);
          const double mub = sum_y[b] / nb;
          const double varb = std::max(0.0, sum_y2[b] / nb - mub * mub);
          const double m2 = (mu0 - mub) * (mu0 - mub);
          const double sdb = std::sqrt(varb);
          const double v2 = (sd0 - sdb) * (sd0 - sdb);
          xi += part.weights[b] * (m2 + v2);
          advective += part.weights[b] * m2;
        }
        adv_per_output[0] = advective;
      } else {
        std::vector<Eigen::VectorXd> sum_y(part.bins, Eigen::VectorXd::Zero(m));
        std::vector<Eigen::MatrixXd> sum_yy(part.bins, Eigen::MatrixXd::Zero(m, m));
        for (int i = 0; i < n_samples; ++i) {
          const int b = part.assignment[i];
          sum_y[b] += yk.row(i).transpose();
          sum_yy[b].noalias() += yk.row(i).transpose() * yk.row(i);
        }
        for (int b = 0; b < part.bins; ++b) {
          const double nb = static_cast<double>(bin_sizes[j][b]);
          const Eigen::VectorXd mub = sum_y[b] / nb;
          Eigen::MatrixXd sigmab = sum_yy[b] / nb - mub * mub.transpose();
          sigmab = 0.5 * (sigmab + sigmab.transpose().eval());
          const BuresParts bp = bures_distance(mu, sigma, mub, sigmab);
          xi += part.weights[b] * bp.w2b;
          advective += part.weights[b] * bp.m2;
          adv_per_output += part.weights[b] * (mu - mub).array().square().matrix();
        }
      }

      traj.xi_b(j, k) = xi;
      traj.iota_b(j, k) = xi / (2.0 * total);
      traj.iota_s(j, k) = advective / total;
      traj.s_unnormalized.values[k].col(j) = adv_per_output.cwiseSqrt();
    }
  }

  if (std::none_of(traj.defined.begin(), traj.defined.end(), [](char d) { return d != 0; }))
    throw DataError("nonintrusive_sensitivity_trajectory: output variance is zero everywhere");
  return traj;
}

void write_transport_csv(const std::filesystem::path& path, const TransportTrajectory& traj,
                         const std::vector<std::string>& parameter_names) {
  std::ostringstream out;
  out << "t,parameter,xi_B,iota_B,iota_S,S_unnormalized\n";
  const int q = static_cast<int>(traj.xi_b.rows());
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    for (int j = 0; j < q; ++j) {
      // first output's unnormalized measure; models here are single-output
      const double s = traj.s_unnormalized.values[k](0, j);
      out << format_csv(traj.times[k]) << ',' << parameter_names[j] << ',';
      if (traj.defined[k])
        out << format_csv(traj.xi_b(j, k)) << ',' << format_csv(traj.iota_b(j, k)) << ','
            << format_csv(traj.iota_s(j, k)) << ',' << format_csv(s);
      else
        out << "nan,nan,nan," << format_csv(s);
      out << '\n';
    }
  }
  write_text_atomic(path, out.str());
}

}  // namespace excite
