#include <doctest.h>

#include <cmath>

#include "excite/models.hpp"
#include "excite/optimizer.hpp"

using namespace excite;

namespace {

ExcitationProblem spring_damper_problem(EngineKind engine, double tf = 4.0, double h = 5e-3) {
  ExcitationProblem problem;
  problem.engine = engine;
  problem.lpv = spring_damper_lpv();
  problem.blackbox = find_model("spring_damper");
  ParameterEnsemble ensemble;
  ensemble.marginals = {Marginal::uniform(1.8, 2.2), Marginal::uniform(0.9, 1.1)};
  ensemble.names = {"c", "d"};
  problem.ensemble = ensemble;
  problem.grid = TimeGrid(0.0, tf, h);
  problem.intrusive.degree = 2;
  problem.transport.n_samples = 64;
  problem.transport.seed = 5;

  problem.signal.kind = SignalSpec::Kind::Sinusoid;
  problem.signal.lo = Eigen::Vector3d(0.0, 0.0, 0.0);
  problem.signal.hi = Eigen::Vector3d(1.0, 5.0, 2.0 * M_PI);
  problem.admissible.lo = problem.signal.lo;
  problem.admissible.hi = problem.signal.hi;
  problem.admissible.horizon = tf;

  problem.weights.Q = Eigen::MatrixXd::Identity(2, 2);
  problem.weights.R = Eigen::MatrixXd::Zero(1, 1);
  return problem;
}

}  // namespace

TEST_SUITE_BEGIN("optimizer");

TEST_CASE("differential evolution solves the sphere benchmark") {
  Eigen::VectorXd target(3);
  target << 1.3, -2.4, 0.7;
  const auto objective = [&target](const Eigen::VectorXd& p) {
    return -(p - target).squaredNorm();
  };
  DeConfig cfg;
  cfg.n_pop = 20;
  cfg.iterations = 200;
  cfg.seed = 4;
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(3, -5.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(3, 5.0);
  const OptimizationResult result = differential_evolution(objective, lo, hi, cfg);
  CHECK((result.best_p - target).norm() <= 1e-2);
  CHECK(result.objective_evals == 60 * 201);  // init + 200 generations at n_pop * dim
}

TEST_CASE("a population of identical members is stationary") {
  const auto objective = [](const Eigen::VectorXd& p) { return -p.squaredNorm(); };
  DeConfig cfg;
  cfg.n_pop = 4;
  cfg.iterations = 15;
  cfg.seed = 11;
  Eigen::VectorXd member(2);
  member << 0.4, -0.2;
  cfg.initial_members.assign(8, member);  // full population (n_pop * dim)
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -1.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(2, 1.0);
  const OptimizationResult result = differential_evolution(objective, lo, hi, cfg);
  CHECK((result.best_p - member).cwiseAbs().maxCoeff() == 0.0);
  for (const auto& log : result.trace) CHECK(log.best_j == doctest::Approx(-member.squaredNorm()));
}

TEST_CASE("seeded runs are bit-identical and traces never decrease") {
  const auto objective = [](const Eigen::VectorXd& p) {
    return -(p.array() - 0.3).matrix().squaredNorm() + std::sin(5.0 * p[0]) * 0.01;
  };
  DeConfig cfg;
  cfg.n_pop = 6;
  cfg.iterations = 40;
  cfg.seed = 123;
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -2.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(2, 2.0);
  const OptimizationResult a = differential_evolution(objective, lo, hi, cfg);
  const OptimizationResult b = differential_evolution(objective, lo, hi, cfg);
  CHECK(a.best_j == b.best_j);
  CHECK((a.best_p - b.best_p).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.trace.size() == b.trace.size());
  double last = -1e300;
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].best_j == b.trace[i].best_j);
    CHECK(a.trace[i].best_j >= last);
    last = a.trace[i].best_j;
  }
}

TEST_CASE("every evaluated candidate respects the box bounds") {
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(3, -0.5);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(3, 0.75);
  bool inside = true;
  const auto objective = [&](const Eigen::VectorXd& p) {
    for (int i = 0; i < 3; ++i)
      if (p[i] < lo[i] - 1e-15 || p[i] > hi[i] + 1e-15) inside = false;
    return p.sum();
  };
  DeConfig cfg;
  cfg.n_pop = 5;
  cfg.iterations = 30;
  cfg.seed = 3;
  const OptimizationResult result = differential_evolution(objective, lo, hi, cfg);
  CHECK(inside);
  CHECK((result.best_p - hi).cwiseAbs().maxCoeff() <= 1e-9);  // maximum of a linear function
}

TEST_CASE("local refinement: stationary start, parabola, kinked objective") {
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(1, -4.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(1, 4.0);

  const auto parabola = [](const Eigen::VectorXd& p) {
    return -(p[0] - 1.25) * (p[0] - 1.25);
  };
  Eigen::VectorXd at_opt(1);
  at_opt << 1.25;
  const Eigen::VectorXd stay = refine_local(parabola, at_opt, lo, hi, 1e-9);
  CHECK(std::abs(stay[0] - 1.25) <= 1e-7);

  Eigen::VectorXd offset(1);
  offset << -2.0;
  const Eigen::VectorXd found = refine_local(parabola, offset, lo, hi, 1e-9);
  CHECK(std::abs(found[0] - 1.25) <= 1e-6);

  const auto kinked = [](const Eigen::VectorXd& p) {
    return -(p[0] - 0.5) * (p[0] - 0.5) - 3.0 * std::max(0.0, p[0] - 0.6);
  };
  Eigen::VectorXd start(1);
  start << 0.1;
  const Eigen::VectorXd improved = refine_local(kinked, start, lo, hi, 1e-9);
  CHECK(kinked(improved) >= kinked(start));
}

TEST_CASE("objective: zero signal below a large threshold scores zero") {
  ExcitationProblem problem = spring_damper_problem(EngineKind::Intrusive);
  problem.s_min_override = 10.0;  // far above any achievable sensitivity
  const ExcitationObjective objective(problem);
  Eigen::VectorXd zero_p(3);
  zero_p << 0.0, 0.0, 0.0;
  CHECK(objective(zero_p) == doctest::Approx(0.0));
}

TEST_CASE("penalty arithmetic: a rate violation subtracts exactly rho v^2") {
  ExcitationProblem problem = spring_damper_problem(EngineKind::Intrusive);
  problem.admissible.du_max = 0.5;
  ExcitationObjective objective(problem);
  objective.penalty = 1000.0;

  Eigen::VectorXd p(3);
  p << 1.0, 2.0, 0.0;  // rate 2 pi f u0 = 4 pi, violation v = 4 pi - 0.5
  const auto parts = objective.evaluate(p, 1000.0);
  const double v = 2.0 * M_PI * 2.0 * 1.0 - 0.5;
  CHECK(parts.feasibility.rate_violation == doctest::Approx(v).epsilon(1e-12));
  CHECK(parts.penalized == doctest::Approx(parts.j - 1000.0 * v * v).epsilon(1e-12));
}

TEST_CASE("common random numbers: the transport sample set never changes") {
  ExcitationProblem problem = spring_damper_problem(EngineKind::Transport);
  const ExcitationObjective objective(problem);
  const Eigen::MatrixXd before = objective.theta_samples();
  Eigen::VectorXd p(3);
  p << 0.7, 0.4, 1.0;
  const double j1 = objective(p);
  const double j2 = objective(p);
  CHECK(j1 == j2);  // same samples, same signal, same value
  CHECK((objective.theta_samples() - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve on a small budget returns a feasible, audited result") {
  ExcitationProblem problem = spring_damper_problem(EngineKind::Intrusive, 4.0, 1e-2);
  DeConfig cfg;
  cfg.n_pop = 4;
  cfg.iterations = 5;
  cfg.seed = 9;
  cfg.refine = false;
  const OptimizationResult result = solve(problem, cfg);
  CHECK(result.best_p.size() == 3);
  CHECK(std::isfinite(result.best_j));
  CHECK(result.feasibility.feasible(1e-6));
  CHECK(result.surrogate_sims >= result.objective_evals);  // one sim per DE eval plus the audit
  CHECK(result.trace.size() == 5);
  // engine-simulation counter grows by one per objective evaluation
  CHECK(result.trace[0].engine_sims >= 2 * 12);
}

TEST_SUITE_END();
