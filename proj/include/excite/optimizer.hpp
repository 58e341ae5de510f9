#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "excite/excitation.hpp"
#include "excite/grid.hpp"
#include "excite/lpv.hpp"
#include "excite/models.hpp"
#include "excite/sensitivity.hpp"
#include "excite/transport.hpp"

namespace excite {

/// Differential evolution settings (rand/1/bin). Following the usual
/// convention, the working population holds n_pop * dim(p) members, so one
/// generation costs n_pop * dim(p) objective evaluations.
struct DeConfig {
  int n_pop = 20;
  int iterations = 50;
  double weight_f = 0.8;     // F in (0, 2]
  double crossover = 0.9;    // CR in [0, 1]
  std::uint64_t seed = 0;
  double penalty = 1e3;      // rho_pen for constraint violations
  bool refine = true;        // gradient-based polish after DE
  double refine_tol = 1e-7;
  int stagnation_window = 0;  // 0 disables the stagnation stop
  double stagnation_tol = 1e-10;
  std::vector<Eigen::VectorXd> initial_members;  // injected into the start population

  void validate(int dim) const;
};

struct GenerationLog {
  int iter = 0;
  double best_j = 0.0;
  bool best_feasible = true;
  long evals = 0;        // objective evaluations this generation
  long engine_sims = 0;  // engine simulations so far (cumulative)
};

struct OptimizationResult {
  Eigen::VectorXd best_p;
  double best_j = 0.0;
  std::vector<GenerationLog> trace;
  FeasibilityReport feasibility;
  long objective_evals = 0;
  long surrogate_sims = 0;
  long model_sims = 0;
};

/// DE/rand/1/bin maximizer over box constraints; per-member RNG streams are
/// split from the seed, so results do not depend on evaluation order.
OptimizationResult differential_evolution(
    const std::function<double(const Eigen::VectorXd&)>& objective, const Eigen::VectorXd& lo,
    const Eigen::VectorXd& hi, const DeConfig& config);

/// Projected quasi-Newton ascent with central finite differences
/// (relative step 1e-6, floor 1e-9); never returns a worse point than p0.
Eigen::VectorXd refine_local(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& p0, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi, double tol, int max_iters = 60);

enum class EngineKind { Intrusive, Transport };

struct IntrusiveOptions {
  int degree = 3;
  int quad_order = 0;  // 0 -> 2 (degree + 1)
};

struct TransportOptions {
  int n_samples = 1000;
  int bins = 0;  // 0 -> default_bin_count
  BinStrategy strategy = BinStrategy::Equiprobable;
  std::uint64_t seed = 1;
};

struct ChanceConstraint {
  int output = 0;  // 0-based
  double y_max = 0.0;
  double alpha = 0.1;
};

/// Maps the optimization vector p onto a concrete signal.
struct SignalTemplate {
  SignalSpec::Kind kind = SignalSpec::Kind::Sinusoid;
  int n_ramps = 1;
  Eigen::VectorXd lo, hi;

  int dim() const;
  /// Ramp rise times are clamped into (0, tT] so every p in the box yields a
  /// valid signal.
  SignalSpec instantiate(const Eigen::VectorXd& p) const;
};

struct ExcitationProblem {
  EngineKind engine = EngineKind::Intrusive;
  LpvSystem lpv;           // intrusive engine (also provides the noise floor)
  BlackBoxModel blackbox;  // transport engine
  ParameterEnsemble ensemble;
  SignalTemplate signal;
  AdmissibleSet admissible;
  CostWeights weights;
  std::vector<ChanceConstraint> chances;
  TimeGrid grid;
  IntrusiveOptions intrusive;
  TransportOptions transport;
  SensKind sens_kind = SensKind::FirstOrder;
  std::optional<double> s_min_override;  // constant threshold instead of the engine default
};

/// What the engine reports for one candidate input.
struct EngineOutput {
  MatrixSeries S;
  MatrixSeries S_min;
  MatrixSeries dS;
  Eigen::MatrixXd mean;      // m x T
  Eigen::MatrixXd variance;  // m x T, total (parametric + noise floor)
};

/// Penalized objective bound to a problem; engine setup happens once, in the
/// constructor (surrogate build, or the common random number draw).
class ExcitationObjective {
 public:
  explicit ExcitationObjective(const ExcitationProblem& problem);

  double operator()(const Eigen::VectorXd& p) const;

  struct Parts {
    double j = 0.0;
    double penalized = 0.0;
    FeasibilityReport feasibility;
    double chance_penalty = 0.0;
    bool engine_ok = true;
    std::string diagnostic;
  };
  Parts evaluate(const Eigen::VectorXd& p, double penalty) const;

  EngineOutput engine_output(const SignalSpec& spec) const;

  long surrogate_sims() const;
  long model_sims() const;
  const Eigen::MatrixXd& theta_samples() const;  // transport engine CRN audit
  const SurrogateSystem& surrogate() const;      // intrusive engine
  const ExcitationProblem& problem() const;

  double penalty = 1e3;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Engine setup, DE, then local refinement; counters cover every engine
/// simulation triggered through the objective.
OptimizationResult solve(const ExcitationProblem& problem, const DeConfig& config);

/// Progress log ("iter,best_J,feasible,evals") and result files.
void write_trace_csv(const std::filesystem::path& path, const OptimizationResult& result);
void write_optimum_csv(const std::filesystem::path& path, const OptimizationResult& result);

}  // namespace excite
