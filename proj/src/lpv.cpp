#include "excite/lpv.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "excite/common.hpp"
#include "excite/util.hpp"

namespace excite {

LpvSystem make_lpv(int n, int m, int l) {
  if (n < 1 || m < 1 || l < 1) throw std::invalid_argument("make_lpv: dimensions must be >= 1");
  LpvSystem sys;
  sys.n = n;
  sys.m = m;
  sys.l = l;
  sys.A = [n](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(n, n); };
  sys.B = [n, l](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(n, l); };
  sys.C = [m, n](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(m, n); };
  sys.D = [m, l](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(m, l); };
  sys.E = [n](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(n); };
  sys.F = [m](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(m); };
  sys.x0 = [n](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(n); };
  sys.omega_mean = [n](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(n); };
  sys.nu_mean = [m](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(m); };
  sys.sigma_w = [n](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(n, n); };
  sys.sigma_nu = [m](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(m, m); };
  return sys;
}

namespace {

void check_shape(const Eigen::MatrixXd& M, int rows, int cols, const char* name) {
  if (M.rows() != rows || M.cols() != cols)
    throw std::invalid_argument(std::string("build_surrogate: ") + name + " has wrong shape");
}

// Accumulates sum_k Phi diag(w_k * vals_k) Phi^T into per-block targets via
// chunked GEMMs; `vals` holds one scalar entry per (block, node).
struct BlockAccumulator {
  Eigen::MatrixXd* target;  // (rows*ell) x (cols*ell)
  int rows, cols, ell;

  void add_chunk(const Eigen::MatrixXd& phi,           // ell x c
                 const Eigen::VectorXd& w,             // c
                 const Eigen::MatrixXd& vals) const {  // (rows*cols) x c
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const auto row = vals.row(i + j * rows);
        if (row.cwiseAbs().maxCoeff() == 0.0) continue;
        const Eigen::MatrixXd scaled = phi * (w.array() * row.transpose().array()).matrix().asDiagonal();
        target->block(i * ell, j * ell, ell, ell).noalias() += scaled * phi.transpose();
      }
    }
  }
};

}  // namespace

SurrogateSystem build_surrogate(const LpvSystem& sys, const ChaosBasis& basis,
                                const QuadratureGrid& grid) {
  if (basis.ensemble.dim() != grid.nodes.cols())
    throw std::invalid_argument("build_surrogate: basis/grid dimension mismatch");
  const int n = sys.n, m = sys.m, l = sys.l;
  const int ell = basis.size();
  const long total = grid.size();

  SurrogateSystem s;
  s.basis = basis;
  s.n = n;
  s.m = m;
  s.l = l;
  s.Ap = Eigen::MatrixXd::Zero(n * ell, n * ell);
  s.Bp = Eigen::MatrixXd::Zero(n * ell, l);
  s.Ep = Eigen::VectorXd::Zero(n * ell);
  s.Cp = Eigen::MatrixXd::Zero(m * ell, n * ell);
  s.Dp = Eigen::MatrixXd::Zero(m * ell, l);
  s.Fp = Eigen::VectorXd::Zero(m * ell);
  s.X0 = Eigen::VectorXd::Zero(n * ell);

  const BlockAccumulator acc_a{&s.Ap, n, n, ell};
  const BlockAccumulator acc_c{&s.Cp, m, n, ell};

  constexpr long kChunk = 512;
  Eigen::MatrixXd phi(ell, kChunk);
  Eigen::MatrixXd a_vals(n * n, kChunk), c_vals(m * n, kChunk);
  Eigen::MatrixXd b_vals(n * l, kChunk), d_vals(m * l, kChunk);
  Eigen::MatrixXd e_vals(n, kChunk), f_vals(m, kChunk), x0_vals(n, kChunk);

  for (long start = 0; start < total; start += kChunk) {
    const long c = std::min(kChunk, total - start);
    for (long kk = 0; kk < c; ++kk) {
      const long k = start + kk;
      const Eigen::VectorXd theta = grid.nodes.row(k);
      phi.col(kk) = eval_basis(basis, theta);

      const Eigen::MatrixXd Ak = sys.A(theta);
      const Eigen::MatrixXd Bk = sys.B(theta);
      const Eigen::MatrixXd Ck = sys.C(theta);
      const Eigen::MatrixXd Dk = sys.D(theta);
      check_shape(Ak, n, n, "A");
      check_shape(Bk, n, l, "B");
      check_shape(Ck, m, n, "C");
      check_shape(Dk, m, l, "D");
      const Eigen::VectorXd Ek = sys.E(theta) + sys.omega_mean(theta);
      const Eigen::VectorXd Fk = sys.F(theta) + sys.nu_mean(theta);
      const Eigen::VectorXd x0k = sys.x0(theta);
      if (!Ak.allFinite() || !Bk.allFinite() || !Ck.allFinite() || !Dk.allFinite() ||
          !Ek.allFinite() || !Fk.allFinite() || !x0k.allFinite())
        throw SimulationError("build_surrogate: non-finite matrix evaluation at node " +
                                  std::to_string(k),
                              0.0, k);

      a_vals.col(kk) = Eigen::Map<const Eigen::VectorXd>(Ak.data(), n * n);
      c_vals.col(kk) = Eigen::Map<const Eigen::VectorXd>(Ck.data(), m * n);
      b_vals.col(kk) = Eigen::Map<const Eigen::VectorXd>(Bk.data(), n * l);
      d_vals.col(kk) = Eigen::Map<const Eigen::VectorXd>(Dk.data(), m * l);
      e_vals.col(kk) = Ek;
      f_vals.col(kk) = Fk;
      x0_vals.col(kk) = x0k;
    }

    const auto phi_c = phi.leftCols(c);
    const Eigen::VectorXd w = grid.weights.segment(start, c);
    acc_a.add_chunk(phi_c, w, a_vals.leftCols(c));
    acc_c.add_chunk(phi_c, w, c_vals.leftCols(c));

    for (int i = 0; i < n; ++i) {
      for (int col = 0; col < l; ++col)
        s.Bp.block(i * ell, col, ell, 1).noalias() +=
            phi_c * (w.array() * b_vals.row(i + col * n).transpose().array().segment(0, c)).matrix();
      s.Ep.segment(i * ell, ell).noalias() +=
          phi_c * (w.array() * e_vals.row(i).transpose().array().segment(0, c)).matrix();
      s.X0.segment(i * ell, ell).noalias() +=
          phi_c * (w.array() * x0_vals.row(i).transpose().array().segment(0, c)).matrix();
    }
    for (int i = 0; i < m; ++i) {
      for (int col = 0; col < l; ++col)
        s.Dp.block(i * ell, col, ell, 1).noalias() +=
            phi_c * (w.array() * d_vals.row(i + col * m).transpose().array().segment(0, c)).matrix();
      s.Fp.segment(i * ell, ell).noalias() +=
          phi_c * (w.array() * f_vals.row(i).transpose().array().segment(0, c)).matrix();
    }
  }

  // G^{-1}: every coefficient row scales with the norm of its basis function.
  Eigen::VectorXd inv_state(n * ell), inv_out(m * ell);
  for (int i = 0; i < n * ell; ++i) inv_state[i] = 1.0 / basis.norms[i % ell];
  for (int i = 0; i < m * ell; ++i) inv_out[i] = 1.0 / basis.norms[i % ell];
  s.Ap = inv_state.asDiagonal() * s.Ap;
  s.Bp = inv_state.asDiagonal() * s.Bp;
  s.Ep = inv_state.asDiagonal() * s.Ep;
  s.X0 = inv_state.asDiagonal() * s.X0;
  s.Cp = inv_out.asDiagonal() * s.Cp;
  s.Dp = inv_out.asDiagonal() * s.Dp;
  s.Fp = inv_out.asDiagonal() * s.Fp;
  return s;
}

SurrogateTrajectory simulate_surrogate(const SurrogateSystem& s,
                                       const std::function<Eigen::VectorXd(double)>& u,
                                       const TimeGrid& grid) {
  const int steps = grid.steps();
  const int nx = s.state_dim();

  // Inputs are needed on the half grid only; evaluate once.
  Eigen::MatrixXd u_tab(s.l, 2 * steps + 1);
  for (int k = 0; k <= 2 * steps; ++k) {
    const Eigen::VectorXd uk = u(grid.t0 + 0.5 * k * grid.h);
    if (uk.size() != s.l) throw std::invalid_argument("simulate_surrogate: input size mismatch");
    u_tab.col(k) = uk;
  }

  SurrogateTrajectory traj;
  traj.times = grid.times();
  traj.X.resize(nx, steps + 1);
  traj.Y.resize(s.output_dim(), steps + 1);

  Eigen::VectorXd x = s.X0;
  Eigen::VectorXd k1(nx), k2(nx), k3(nx), k4(nx), tmp(nx);
  const double h = grid.h;

  auto deriv = [&](const Eigen::VectorXd& xs, int half_idx, Eigen::VectorXd& out) {
    out.noalias() = s.Ap * xs;
    out.noalias() += s.Bp * u_tab.col(half_idx);
    out += s.Ep;
  };

  traj.X.col(0) = x;
  for (int k = 0; k < steps; ++k) {
    deriv(x, 2 * k, k1);
    tmp = x + 0.5 * h * k1;
    deriv(tmp, 2 * k + 1, k2);
    tmp = x + 0.5 * h * k2;
    deriv(tmp, 2 * k + 1, k3);
    tmp = x + h * k3;
    deriv(tmp, 2 * k + 2, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite())
      throw SimulationError("surrogate state diverged", grid.time(k + 1));
    traj.X.col(k + 1) = x;
  }
  for (int k = 0; k <= steps; ++k) {
    traj.Y.col(k).noalias() = s.Cp * traj.X.col(k);
    traj.Y.col(k).noalias() += s.Dp * u_tab.col(2 * k);
    traj.Y.col(k) += s.Fp;
  }
  return traj;
}

Eigen::MatrixXd reconstruct_output(const SurrogateSystem& s, const SurrogateTrajectory& traj,
                                   const Eigen::VectorXd& theta) {
  const Eigen::VectorXd phi = eval_basis(s.basis, theta);
  const int ell = s.basis.size();
  Eigen::MatrixXd y(s.m, traj.Y.cols());
  for (int i = 0; i < s.m; ++i)
    y.row(i) = phi.transpose() * traj.Y.middleRows(i * ell, ell);
  return y;
}

namespace {

void require_psd(const Eigen::MatrixXd& S, const char* name) {
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw DataError(std::string(name) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw DataError(std::string(name) + " is not positive semidefinite");
}

}  // namespace

Eigen::MatrixXd noise_output_variance(const LpvSystem& sys, const Eigen::VectorXd& theta_bar,
                                      const TimeGrid& grid) {
  const Eigen::MatrixXd A = sys.A(theta_bar);
  const Eigen::MatrixXd C = sys.C(theta_bar);
  const Eigen::MatrixXd Sw = sys.sigma_w(theta_bar);
  const Eigen::MatrixXd Snu = sys.sigma_nu(theta_bar);
  require_psd(Sw, "sigma_w");
  require_psd(Snu, "sigma_nu");

  const int steps = grid.steps();
  Eigen::MatrixXd sigma2(sys.m, steps + 1);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(sys.n, sys.n);
  const Eigen::VectorXd dnu = Snu.diagonal();

  auto record = [&](int k) { sigma2.col(k) = C * V.diagonal() + dnu; };
  auto deriv = [&](const Eigen::MatrixXd& Vk) -> Eigen::MatrixXd {
    return A * Vk + Vk * A.transpose() + Sw;
  };

  record(0);
  const double h = grid.h;
  for (int k = 0; k < steps; ++k) {
    const Eigen::MatrixXd k1 = deriv(V);
    const Eigen::MatrixXd k2 = deriv(V + 0.5 * h * k1);
    const Eigen::MatrixXd k3 = deriv(V + 0.5 * h * k2);
    const Eigen::MatrixXd k4 = deriv(V + h * k3);
    V += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    V = 0.5 * (V + V.transpose().eval());
    record(k + 1);
  }
  return sigma2;
}

MatrixSeries noise_to_minimal_sensitivity(const LpvSystem& sys, const Eigen::VectorXd& theta_bar,
                                          const TimeGrid& grid, int q) {
  const Eigen::MatrixXd sigma2 = noise_output_variance(sys, theta_bar, grid);
  MatrixSeries smin;
  smin.times = grid.times();
  smin.values.reserve(sigma2.cols());
  for (int k = 0; k < sigma2.cols(); ++k) {
    const Eigen::VectorXd sy = sigma2.col(k).cwiseMax(0.0).cwiseSqrt();
    smin.values.push_back(sy * Eigen::RowVectorXd::Ones(q));
  }
  return smin;
}

Eigen::MatrixXd surrogate_mean(const SurrogateSystem& s, const SurrogateTrajectory& traj) {
  const int ell = s.basis.size();
  Eigen::MatrixXd mean(s.m, traj.Y.cols());
  for (int i = 0; i < s.m; ++i) mean.row(i) = traj.Y.row(i * ell);
  return mean;
}

Eigen::MatrixXd surrogate_variance(const SurrogateSystem& s, const SurrogateTrajectory& traj) {
  const int ell = s.basis.size();
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(s.m, traj.Y.cols());
  for (int i = 0; i < s.m; ++i)
    for (int k = 1; k < ell; ++k)
      var.row(i) += s.basis.norms[k] * traj.Y.row(i * ell + k).array().square().matrix();
  return var;
}

namespace {

void write_matrix(std::ostream& out, const char* name, const Eigen::MatrixXd& M) {
  out << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(M(i, j));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& expected) {
  std::string name;
  long rows = 0, cols = 0;
  if (!(in >> name >> rows >> cols) || name != expected)
    throw DataError("surrogate file: expected matrix " + expected);
  Eigen::MatrixXd M(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      if (!(in >> M(i, j))) throw DataError("surrogate file: truncated matrix " + expected);
  return M;
}

}  // namespace

void save_surrogate(const std::filesystem::path& path, const SurrogateSystem& s) {
  std::ostringstream out;
  out << "excite-surrogate 1\n";
  out << "dims " << s.n << ' ' << s.m << ' ' << s.l << ' ' << s.basis.degree << ' '
      << s.basis.size() << '\n';
  for (int j = 0; j < s.basis.ensemble.dim(); ++j) {
    const Marginal& mg = s.basis.ensemble.marginals[j];
    out << "marginal " << s.basis.ensemble.names[j] << ' '
        << (mg.kind == Marginal::Kind::Uniform ? "uniform" : "gaussian") << ' '
        << format_double(mg.a) << ' ' << format_double(mg.b) << '\n';
  }
  write_matrix(out, "Ap", s.Ap);
  write_matrix(out, "Bp", s.Bp);
  write_matrix(out, "Ep", s.Ep);
  write_matrix(out, "Cp", s.Cp);
  write_matrix(out, "Dp", s.Dp);
  write_matrix(out, "Fp", s.Fp);
  write_matrix(out, "X0", s.X0);
  write_text_atomic(path, out.str());
}

SurrogateSystem load_surrogate(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open surrogate file: " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "excite-surrogate" || version != 1)
    throw DataError("not an excite surrogate file: " + path.string());

  std::string tok;
  int n, m, l, degree;
  long ell;
  if (!(in >> tok >> n >> m >> l >> degree >> ell) || tok != "dims")
    throw DataError("surrogate file: bad dims header");

  ParameterEnsemble ensemble;
  // q recovered from the basis size is implicit; read marginal lines until "Ap"
  while (true) {
    std::streampos pos = in.tellg();
    if (!(in >> tok)) throw DataError("surrogate file: truncated header");
    if (tok != "marginal") {
      in.seekg(pos);
      break;
    }
    std::string name, kind;
    double a, b;
    if (!(in >> name >> kind >> a >> b)) throw DataError("surrogate file: bad marginal line");
    ensemble.names.push_back(name);
    ensemble.marginals.push_back(kind == "uniform" ? Marginal::uniform(a, b)
                                                   : Marginal::gaussian(a, b));
  }

  SurrogateSystem s;
  s.basis = make_basis(ensemble, degree);
  if (s.basis.size() != ell) throw DataError("surrogate file: basis size mismatch");
  s.n = n;
  s.m = m;
  s.l = l;
  s.Ap = read_matrix(in, "Ap");
  s.Bp = read_matrix(in, "Bp");
  s.Ep = read_matrix(in, "Ep");
  s.Cp = read_matrix(in, "Cp");
  s.Dp = read_matrix(in, "Dp");
  s.Fp = read_matrix(in, "Fp");
  s.X0 = read_matrix(in, "X0");
  if (s.Ap.rows() != n * ell || s.Cp.rows() != m * ell)
    throw DataError("surrogate file: matrix dimensions inconsistent with header");
  return s;
}

}  // namespace excite
