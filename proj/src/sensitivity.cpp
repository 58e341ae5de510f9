#include "excite/sensitivity.hpp"

#include <cmath>
#include <sstream>

#include "excite/common.hpp"
#include "excite/util.hpp"

namespace excite {

IndexSets build_index_sets(const ChaosBasis& basis) {
  const int q = basis.ensemble.dim();
  const int ell = basis.size();
  IndexSets sets;
  sets.ell = ell;
  sets.q = q;
  sets.first_order.resize(q);
  sets.total_order.resize(q);
  sets.v_first = Eigen::MatrixXd::Zero(ell, q);
  sets.v_total = Eigen::MatrixXd::Zero(ell, q);

  for (int i = 1; i < ell; ++i) {  // the constant term belongs to no set
    const MultiIndex& mi = basis.indices[i];
    int active = 0;
    for (int j = 0; j < q; ++j)
      if (mi[j] > 0) ++active;
    for (int j = 0; j < q; ++j) {
      if (mi[j] == 0) continue;
      sets.total_order[j].push_back(i);
      sets.v_total(i, j) = basis.norms[i];
      if (active == 1) {
        sets.first_order[j].push_back(i);
        sets.v_first(i, j) = basis.norms[i];
      }
    }
  }
  return sets;
}

MatrixSeries sensitivity_trajectory(const std::vector<double>& times, const Eigen::MatrixXd& Y,
                                    int m, const IndexSets& sets, SensKind kind) {
  const int ell = sets.ell;
  if (Y.rows() != static_cast<long>(m) * ell)
    throw std::invalid_argument("sensitivity_trajectory: Y rows incompatible with basis");
  if (static_cast<long>(times.size()) != Y.cols())
    throw std::invalid_argument("sensitivity_trajectory: time axis mismatch");
  const Eigen::MatrixXd& sel = kind == SensKind::FirstOrder ? sets.v_first : sets.v_total;

  MatrixSeries S;
  S.times = times;
  S.values.resize(times.size(), Eigen::MatrixXd(m, sets.q));
  for (long k = 0; k < Y.cols(); ++k) {
    Eigen::MatrixXd& Sk = S.values[k];
    for (int i = 0; i < m; ++i) {
      const auto y2 = Y.col(k).segment(i * ell, ell).array().square().matrix();
      Sk.row(i) = (sel.transpose() * y2).cwiseMax(0.0).cwiseSqrt().transpose();
    }
  }
  return S;
}

Eigen::MatrixXd variance_trajectory(const Eigen::MatrixXd& Y, int m, const ChaosBasis& basis) {
  const int ell = basis.size();
  if (Y.rows() != static_cast<long>(m) * ell)
    throw std::invalid_argument("variance_trajectory: Y rows incompatible with basis");
  Eigen::VectorXd v = basis.norms;
  v[0] = 0.0;
  Eigen::MatrixXd var(m, Y.cols());
  for (int i = 0; i < m; ++i)
    var.row(i) = v.transpose() * Y.middleRows(i * ell, ell).array().square().matrix();
  return var;
}

SobolResult normalized_sobol(const Eigen::MatrixXd& S, const Eigen::VectorXd& total_variance,
                             double eps) {
  if (S.rows() != total_variance.size())
    throw std::invalid_argument("normalized_sobol: shape mismatch");
  SobolResult r;
  r.su = Eigen::MatrixXd::Zero(S.rows(), S.cols());
  r.defined.assign(S.rows(), 0);
  for (int i = 0; i < S.rows(); ++i) {
    if (total_variance[i] > eps) {
      r.defined[i] = 1;
      r.su.row(i) = S.row(i).array().square() / total_variance[i];
    }
  }
  return r;
}

Eigen::MatrixXd effective_sensitivity(const Eigen::MatrixXd& S, const Eigen::MatrixXd& S_min) {
  if (S.rows() != S_min.rows() || S.cols() != S_min.cols())
    throw std::invalid_argument("effective_sensitivity: shape mismatch");
  return (S - S_min).cwiseMax(0.0);
}

MatrixSeries effective_sensitivity(const MatrixSeries& S, const MatrixSeries& S_min) {
  if (S.size() != S_min.size())
    throw std::invalid_argument("effective_sensitivity: series length mismatch");
  MatrixSeries dS;
  dS.times = S.times;
  dS.values.reserve(S.size());
  for (int k = 0; k < S.size(); ++k)
    dS.values.push_back(effective_sensitivity(S.values[k], S_min.values[k]));
  return dS;
}

Eigen::MatrixXd impact_score(const MatrixSeries& dS, const TimeGrid& grid) {
  if (dS.size() != grid.size())
    throw std::invalid_argument("impact_score: series does not match grid");
  Eigen::MatrixXd score = Eigen::MatrixXd::Zero(dS.rows(), dS.cols());
  for (int k = 0; k < dS.size(); ++k) {
    const double w = (k == 0 || k == dS.size() - 1) ? 0.5 : 1.0;
    score += w * dS.values[k].cwiseAbs();
  }
  return score * grid.h;
}

void write_sensitivity_csv(const std::filesystem::path& path, const MatrixSeries& S,
                           const MatrixSeries& S_min, const MatrixSeries& dS,
                           const std::vector<SobolResult>& su,
                           const std::vector<std::string>& parameter_names) {
  std::ostringstream out;
  out << "t,output,parameter,S,S_min,dS,SU\n";
  for (int k = 0; k < S.size(); ++k) {
    for (int i = 0; i < S.rows(); ++i) {
      for (int j = 0; j < S.cols(); ++j) {
        out << format_csv(S.times[k]) << ',' << (i + 1) << ',' << parameter_names[j] << ','
            << format_csv(S.values[k](i, j)) << ',' << format_csv(S_min.values[k](i, j)) << ','
            << format_csv(dS.values[k](i, j)) << ',';
        if (su[k].defined[i])
          out << format_csv(su[k].su(i, j));
        else
          out << "nan";
        out << '\n';
      }
    }
  }
  write_text_atomic(path, out.str());
}

}  // namespace excite
