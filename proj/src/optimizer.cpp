#include "excite/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#include "excite/common.hpp"
#include "excite/rng.hpp"
#include "excite/util.hpp"

namespace excite {

void DeConfig::validate(int dim) const {
  if (n_pop < 4) throw std::invalid_argument("DeConfig: n_pop must be >= 4");
  if (iterations < 0) throw std::invalid_argument("DeConfig: iterations must be >= 0");
  if (!(weight_f > 0.0 && weight_f <= 2.0))
    throw std::invalid_argument("DeConfig: F must lie in (0, 2]");
  if (!(crossover >= 0.0 && crossover <= 1.0))
    throw std::invalid_argument("DeConfig: CR must lie in [0, 1]");
  if (dim < 1) throw std::invalid_argument("DeConfig: empty parameter vector");
  for (const auto& mem : initial_members)
    if (mem.size() != dim)
      throw std::invalid_argument("DeConfig: initial member has wrong dimension");
}

namespace {

Eigen::VectorXd clip(const Eigen::VectorXd& p, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  return p.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

OptimizationResult differential_evolution(
    const std::function<double(const Eigen::VectorXd&)>& objective, const Eigen::VectorXd& lo,
    const Eigen::VectorXd& hi, const DeConfig& config) {
  const int dim = static_cast<int>(lo.size());
  config.validate(dim);
  if (hi.size() != dim || (hi - lo).minCoeff() < 0.0)
    throw std::invalid_argument("differential_evolution: invalid boxes");

  const int np = std::max(4, config.n_pop * dim);

  std::vector<Eigen::VectorXd> pop(np);
  std::vector<double> fitness(np);
  std::vector<Rng> streams;
  streams.reserve(np);
  for (int i = 0; i < np; ++i) streams.emplace_back(Rng::split(config.seed, i));

  Rng init_rng(Rng::split(config.seed, 0x494e4954ull));
  for (int i = 0; i < np; ++i) {
    if (i < static_cast<int>(config.initial_members.size())) {
      pop[i] = clip(config.initial_members[i], lo, hi);
      continue;
    }
    pop[i].resize(dim);
    for (int d = 0; d < dim; ++d) pop[i][d] = init_rng.uniform(lo[d], hi[d]);
  }

  OptimizationResult result;
  parallel_for(np, [&](int i) { fitness[i] = objective(pop[i]); });
  result.objective_evals += np;

  int best = 0;
  for (int i = 1; i < np; ++i)
    if (fitness[i] > fitness[best]) best = i;
  result.best_p = pop[best];
  result.best_j = fitness[best];

  std::vector<Eigen::VectorXd> trial(np);
  std::vector<double> trial_fitness(np);

  int stall = 0;
  for (int gen = 1; gen <= config.iterations; ++gen) {
    for (int i = 0; i < np; ++i) {
      Rng& rng = streams[i];
      int a, b, c;
      do a = rng.uniform_int(np); while (a == i);
      do b = rng.uniform_int(np); while (b == i || b == a);
      do c = rng.uniform_int(np); while (c == i || c == a || c == b);
      Eigen::VectorXd v = pop[a] + config.weight_f * (pop[b] - pop[c]);
      const int forced = rng.uniform_int(dim);
      Eigen::VectorXd t = pop[i];
      for (int d = 0; d < dim; ++d)
        if (d == forced || rng.uniform01() < config.crossover) t[d] = v[d];
      trial[i] = clip(t, lo, hi);
    }

    parallel_for(np, [&](int i) { trial_fitness[i] = objective(trial[i]); });
    result.objective_evals += np;

    const double prev_best = result.best_j;
    for (int i = 0; i < np; ++i) {
      if (trial_fitness[i] >= fitness[i]) {
        pop[i] = trial[i];
        fitness[i] = trial_fitness[i];
        if (fitness[i] > result.best_j) {
          result.best_j = fitness[i];
          result.best_p = pop[i];
        }
      }
    }

    GenerationLog log;
    log.iter = gen;
    log.best_j = result.best_j;
    log.evals = np;
    result.trace.push_back(log);

    if (config.stagnation_window > 0) {
      stall = (result.best_j - prev_best > config.stagnation_tol) ? 0 : stall + 1;
      if (stall >= config.stagnation_window) break;
    }
  }
  return result;
}

Eigen::VectorXd refine_local(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& p0, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi, double tol, int max_iters) {
  const int dim = static_cast<int>(p0.size());
  Eigen::VectorXd p = clip(p0, lo, hi);
  double fp = objective(p);
  if (!std::isfinite(fp)) return p0;  // nothing sensible to do here

  Eigen::VectorXd best_p = p;
  double best_f = fp;

  auto gradient = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(dim);
    for (int d = 0; d < dim; ++d) {
      const double step = std::max(1e-6 * std::abs(x[d]), 1e-9);
      Eigen::VectorXd xp = x, xm = x;
      xp[d] = std::min(x[d] + step, hi[d]);
      xm[d] = std::max(x[d] - step, lo[d]);
      const double spread = xp[d] - xm[d];
      if (spread <= 0.0) {
        g[d] = 0.0;
        continue;
      }
      const double f1 = objective(xp);
      const double f2 = objective(xm);
      g[d] = (std::isfinite(f1) && std::isfinite(f2)) ? (f1 - f2) / spread : 0.0;
    }
    return g;
  };

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd g = gradient(p);
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());

  for (int iter = 0; iter < max_iters; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() <= tol) break;
    Eigen::VectorXd dir = H * g;
    if (dir.dot(g) <= 0.0) dir = g;  // keep an ascent direction

    double alpha = 1.0;
    const double dirinf = dir.lpNorm<Eigen::Infinity>();
    if (dirinf > 0.1 * scale) alpha = 0.1 * scale / dirinf;

    Eigen::VectorXd p_next = p;
    double f_next = fp;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd cand = clip(p + alpha * dir, lo, hi);
      const double fc = objective(cand);
      if (std::isfinite(fc) && fc > fp + 1e-4 * alpha * dir.dot(g)) {
        p_next = cand;
        f_next = fc;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;

    const Eigen::VectorXd s = p_next - p;
    if (s.lpNorm<Eigen::Infinity>() <= tol * scale) {
      p = p_next;
      fp = f_next;
      if (fp > best_f) {
        best_f = fp;
        best_p = p;
      }
      break;
    }
    const Eigen::VectorXd g_next = gradient(p_next);
    const Eigen::VectorXd yk = g_next - g;  // descent on -f would flip both signs
    const double sy = s.dot(yk);
    if (sy < -1e-12) {
      // BFGS update for a maximization problem: H approximates (-Hess)^{-1}
      const Eigen::VectorXd Hy = H * yk;
      H += (s * s.transpose()) * (yk.dot(Hy) - sy) / (sy * sy) -
           (Hy * s.transpose() + s * Hy.transpose()) / sy;
    } else {
      H = Eigen::MatrixXd::Identity(dim, dim);
    }
    p = p_next;
    fp = f_next;
    g = g_next;
    if (fp > best_f) {
      best_f = fp;
      best_p = p;
    }
  }
  return best_f >= fp ? best_p : p;
}

int SignalTemplate::dim() const {
  switch (kind) {
    case SignalSpec::Kind::Sinusoid:
      return 3;
    case SignalSpec::Kind::RampSuperposition:
      return 4 * n_ramps;
    default:
      throw std::invalid_argument("SignalTemplate: unsupported template kind");
  }
}

SignalSpec SignalTemplate::instantiate(const Eigen::VectorXd& p) const {
  if (p.size() != dim()) throw std::invalid_argument("SignalTemplate: wrong parameter count");
  if (kind == SignalSpec::Kind::Sinusoid)
    return SignalSpec::sinusoid(std::max(0.0, p[0]), std::max(0.0, p[1]), p[2]);

  std::vector<Ramp> ramps(n_ramps);
  for (int r = 0; r < n_ramps; ++r) {
    Ramp& ramp = ramps[r];
    ramp.u0 = p[4 * r + 0];
    ramp.uT = p[4 * r + 1];
    ramp.tT = std::max(1e-6, p[4 * r + 2]);
    ramp.tDelta = std::min(std::max(1e-6, p[4 * r + 3]), ramp.tT);
  }
  return SignalSpec::ramp_superposition(std::move(ramps));
}

struct ExcitationObjective::Impl {
  ExcitationProblem problem;
  int m = 0, q = 0;

  // intrusive
  SurrogateSystem surrogate;
  IndexSets sets;
  MatrixSeries s_min;
  Eigen::MatrixXd noise_var;  // m x T

  // transport
  Eigen::MatrixXd theta;  // CRN sample set, drawn once
  int bins = 0;

  mutable std::atomic<long> surrogate_sims{0};
  mutable std::atomic<long> model_sims{0};
};

ExcitationObjective::ExcitationObjective(const ExcitationProblem& problem)
    : impl_(std::make_shared<Impl>()) {
  impl_->problem = problem;
  impl_->q = problem.ensemble.dim();
  const TimeGrid& grid = problem.grid;
  const int T = grid.size();

  if (problem.engine == EngineKind::Intrusive) {
    impl_->m = problem.lpv.m;
    const int order = problem.intrusive.quad_order > 0 ? problem.intrusive.quad_order
                                                       : 2 * (problem.intrusive.degree + 1);
    const ChaosBasis basis = make_basis(problem.ensemble, problem.intrusive.degree);
    const QuadratureGrid qgrid = gauss_quadrature(problem.ensemble, order);
    impl_->surrogate = build_surrogate(problem.lpv, basis, qgrid);
    impl_->sets = build_index_sets(basis);
    impl_->noise_var = noise_output_variance(problem.lpv, problem.ensemble.mean(), grid);
    impl_->s_min = noise_to_minimal_sensitivity(problem.lpv, problem.ensemble.mean(), grid,
                                                impl_->q);
  } else {
    impl_->m = problem.blackbox.m;
    impl_->theta =
        sample_parameters(problem.ensemble, problem.transport.n_samples, problem.transport.seed);
    impl_->bins = problem.transport.bins > 0 ? problem.transport.bins
                                             : default_bin_count(problem.transport.n_samples);
    impl_->noise_var = Eigen::MatrixXd::Zero(impl_->m, T);
    impl_->s_min.times = grid.times();
    impl_->s_min.values.assign(T, Eigen::MatrixXd::Zero(impl_->m, impl_->q));
  }

  if (impl_->problem.s_min_override) {
    const double v = *impl_->problem.s_min_override;
    for (auto& mat : impl_->s_min.values) mat.setConstant(v);
  }
}

EngineOutput ExcitationObjective::engine_output(const SignalSpec& spec) const {
  const Impl& im = *impl_;
  const ExcitationProblem& pb = im.problem;
  EngineOutput out;
  out.S_min = im.s_min;

  if (pb.engine == EngineKind::Intrusive) {
    const SurrogateTrajectory traj = simulate_surrogate(im.surrogate, spec.vector_fn(), pb.grid);
    im.surrogate_sims.fetch_add(1);
    out.S = sensitivity_trajectory(traj.times, traj.Y, im.m, im.sets, pb.sens_kind);
    out.mean = surrogate_mean(im.surrogate, traj);
    out.variance = surrogate_variance(im.surrogate, traj) + im.noise_var;
  } else {
    const InputFn cached = cache_on_half_grid(spec.fn(), pb.grid);
    const int n = pb.transport.n_samples;
    const int T = pb.grid.size();
    std::vector<Eigen::MatrixXd> sims(n);
    parallel_for(n, [&](int i) {
      sims[i] = pb.blackbox.simulate(im.theta.row(i), cached, pb.grid);
    });
    im.model_sims.fetch_add(n);

    // bin partitions depend on theta only; compute once per call (cheap)
    std::vector<BinPartition> parts(im.q);
    std::vector<std::vector<long>> sizes(im.q);
    for (int j = 0; j < im.q; ++j) {
      parts[j] = partition_bins(im.theta.col(j), im.bins, pb.transport.strategy);
      sizes[j].assign(parts[j].bins, 0);
      for (int i = 0; i < n; ++i) ++sizes[j][parts[j].assignment[i]];
    }

    out.S.times = pb.grid.times();
    out.S.values.assign(T, Eigen::MatrixXd::Zero(im.m, im.q));
    out.mean.resize(im.m, T);
    out.variance.resize(im.m, T);
    Eigen::MatrixXd yk(n, im.m);
    for (int k = 0; k < T; ++k) {
      for (int i = 0; i < n; ++i) yk.row(i) = sims[i].col(k).transpose();
      const auto [mu, sigma] = empirical_moments(yk);
      out.mean.col(k) = mu;
      out.variance.col(k) = sigma.diagonal();
      for (int j = 0; j < im.q; ++j) {
        const BinPartition& part = parts[j];
        for (int i_out = 0; i_out < im.m; ++i_out) {
          // advective (mean-shift) part per output, in output units
          std::vector<double> sum_y(part.bins, 0.0);
          const double* col = yk.col(i_out).data();
          for (int i = 0; i < n; ++i) sum_y[part.assignment[i]] += col[i];
          double adv = 0.0;
          for (int b = 0; b < part.bins; ++b) {
            const double mub = sum_y[b] / static_cast<double>(sizes[j][b]);
            adv += part.weights[b] * (mu[i_out] - mub) * (mu[i_out] - mub);
          }
          out.S.values[k](i_out, j) = std::sqrt(adv);
        }
      }
    }
  }

  out.dS = effective_sensitivity(out.S, out.S_min);
  return out;
}

ExcitationObjective::Parts ExcitationObjective::evaluate(const Eigen::VectorXd& p,
                                                         double rho) const {
  const Impl& im = *impl_;
  const ExcitationProblem& pb = im.problem;
  Parts parts;

  SignalSpec spec;
  try {
    spec = pb.signal.instantiate(p);
  } catch (const std::exception& e) {
    parts.engine_ok = false;
    parts.diagnostic = e.what();
    parts.penalized = -std::numeric_limits<double>::infinity();
    return parts;
  }
  parts.feasibility = check_admissible(spec, p, pb.admissible, pb.grid);

  EngineOutput out;
  try {
    out = engine_output(spec);
  } catch (const std::exception& e) {
    parts.engine_ok = false;
    parts.diagnostic = e.what();
    parts.penalized = -std::numeric_limits<double>::infinity();
    return parts;
  }

  Eigen::MatrixXd u(1, pb.grid.size());
  for (int k = 0; k < pb.grid.size(); ++k) u(0, k) = spec.evaluate(pb.grid.time(k));
  parts.j = cost_functional(out.dS, u, pb.weights, pb.grid);

  double chance_pen = 0.0;
  for (const ChanceConstraint& cc : pb.chances) {
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < pb.grid.size(); ++k) {
      const double margin = chance_constraint_margin(
          out.mean(cc.output, k), std::max(0.0, out.variance(cc.output, k)), cc.y_max, cc.alpha);
      worst = std::min(worst, margin);
    }
    if (worst < 0.0) chance_pen += worst * worst;
  }
  parts.chance_penalty = chance_pen;
  parts.penalized = parts.j - rho * (parts.feasibility.squared_sum() + chance_pen);
  return parts;
}

double ExcitationObjective::operator()(const Eigen::VectorXd& p) const {
  return evaluate(p, penalty).penalized;
}

long ExcitationObjective::surrogate_sims() const { return impl_->surrogate_sims.load(); }
long ExcitationObjective::model_sims() const { return impl_->model_sims.load(); }
const Eigen::MatrixXd& ExcitationObjective::theta_samples() const { return impl_->theta; }
const SurrogateSystem& ExcitationObjective::surrogate() const { return impl_->surrogate; }
const ExcitationProblem& ExcitationObjective::problem() const { return impl_->problem; }

OptimizationResult solve(const ExcitationProblem& problem, const DeConfig& config) {
  ExcitationObjective objective(problem);
  objective.penalty = config.penalty;

  auto fn = [&objective](const Eigen::VectorXd& p) { return objective(p); };
  OptimizationResult result =
      differential_evolution(fn, problem.signal.lo, problem.signal.hi, config);

  // engine-simulation counters per generation, for the audit trail
  for (auto& log : result.trace)
    log.engine_sims = problem.engine == EngineKind::Intrusive ? objective.surrogate_sims()
                                                              : objective.model_sims();

  if (config.refine && result.best_p.size() > 0 && std::isfinite(result.best_j)) {
    const Eigen::VectorXd refined =
        refine_local(fn, result.best_p, problem.signal.lo, problem.signal.hi, config.refine_tol);
    const double jr = objective(refined);
    if (jr >= result.best_j) {
      result.best_j = jr;
      result.best_p = refined;
    }
  }

  const auto parts = objective.evaluate(result.best_p, config.penalty);
  result.feasibility = parts.feasibility;
  result.surrogate_sims = objective.surrogate_sims();
  result.model_sims = objective.model_sims();

  GenerationLog final_log;
  final_log.iter = result.trace.empty() ? 0 : result.trace.back().iter;
  final_log.best_j = result.best_j;
  final_log.best_feasible = result.feasibility.feasible(1e-6);
  for (auto& log : result.trace) log.best_feasible = final_log.best_feasible;
  return result;
}

void write_trace_csv(const std::filesystem::path& path, const OptimizationResult& result) {
  std::ostringstream out;
  out << "iter,best_J,feasible,evals\n";
  for (const auto& log : result.trace)
    out << log.iter << ',' << format_csv(log.best_j) << ',' << (log.best_feasible ? 1 : 0) << ','
        << log.evals << '\n';
  write_text_atomic(path, out.str());
}

void write_optimum_csv(const std::filesystem::path& path, const OptimizationResult& result) {
  std::ostringstream out;
  for (int i = 0; i < result.best_p.size(); ++i) out << "p_" << (i + 1) << ',';
  out << "J\n";
  for (int i = 0; i < result.best_p.size(); ++i) out << format_csv(result.best_p[i]) << ',';
  out << format_csv(result.best_j) << '\n';
  write_text_atomic(path, out.str());
}

}  // namespace excite
