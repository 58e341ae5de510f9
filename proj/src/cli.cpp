#include "excite/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "excite/common.hpp"
#include "excite/identify.hpp"
#include "excite/models.hpp"
#include "excite/optimizer.hpp"
#include "excite/sensitivity.hpp"
#include "excite/transport.hpp"
#include "excite/util.hpp"

namespace excite::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in section '" + section + "'");
  }
}

const json& require(const json& j, const char* key, const std::string& section) {
  if (!j.contains(key))
    throw ConfigError("missing key '" + std::string(key) + "' in section '" + section + "'");
  return j.at(key);
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ConfigError(what + " must be an array of rows");
  const long rows = static_cast<long>(j.size());
  const long cols = static_cast<long>(j.front().size());
  Eigen::MatrixXd M(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (static_cast<long>(j[i].size()) != cols) throw ConfigError(what + " rows differ in length");
    for (long k = 0; k < cols; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

Eigen::VectorXd parse_vector(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

ParameterEnsemble parse_ensemble(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("'ensemble' must be a non-empty array");
  ParameterEnsemble e;
  for (const auto& entry : j) {
    check_keys(entry, "ensemble[]", {"name", "dist", "lower", "upper", "mean", "std"});
    const std::string name = require(entry, "name", "ensemble[]").get<std::string>();
    const std::string dist = require(entry, "dist", "ensemble[]").get<std::string>();
    if (dist == "uniform") {
      e.marginals.push_back(Marginal::uniform(require(entry, "lower", "ensemble[]").get<double>(),
                                              require(entry, "upper", "ensemble[]").get<double>()));
    } else if (dist == "gaussian") {
      e.marginals.push_back(Marginal::gaussian(require(entry, "mean", "ensemble[]").get<double>(),
                                               require(entry, "std", "ensemble[]").get<double>()));
    } else {
      throw ConfigError("unknown distribution '" + dist + "' for parameter '" + name + "'");
    }
    e.names.push_back(name);
  }
  e.validate();
  return e;
}

VehicleParams parse_vehicle(const json& cfg) {
  VehicleParams p;
  if (!cfg.contains("vehicle")) return p;
  const json& j = cfg.at("vehicle");
  check_keys(j, "vehicle",
             {"v0", "mass", "lf", "lr", "mu_f", "mu_r", "Cf", "Cr", "g", "Tf", "Tr"});
  p.v0 = j.value("v0", p.v0);
  p.mass = j.value("mass", p.mass);
  p.lf = j.value("lf", p.lf);
  p.lr = j.value("lr", p.lr);
  p.mu_f = j.value("mu_f", p.mu_f);
  p.mu_r = j.value("mu_r", p.mu_r);
  p.Cf = j.value("Cf", p.Cf);
  p.Cr = j.value("Cr", p.Cr);
  p.g = j.value("g", p.g);
  p.Tf = j.value("Tf", p.Tf);
  p.Tr = j.value("Tr", p.Tr);
  return p;
}

TimeGrid parse_grid(const json& j) {
  check_keys(j, "grid", {"t0", "tf", "h"});
  return TimeGrid(j.value("t0", 0.0), require(j, "tf", "grid").get<double>(),
                  require(j, "h", "grid").get<double>());
}

SignalSpec parse_signal(const json& j) {
  check_keys(j, "signal", {"kind", "u0", "f", "phase", "ramps", "id"});
  const std::string kind = require(j, "kind", "signal").get<std::string>();
  if (kind == "zero") return SignalSpec::zero();
  if (kind == "sinusoid")
    return SignalSpec::sinusoid(require(j, "u0", "signal").get<double>(),
                                require(j, "f", "signal").get<double>(), j.value("phase", 0.0));
  if (kind == "ramps") {
    const json& ramps = require(j, "ramps", "signal");
    std::vector<Ramp> list;
    for (const auto& r : ramps) {
      if (!r.is_array() || r.size() != 4)
        throw ConfigError("each ramp must be [u0, uT, tT, tDelta]");
      list.push_back(Ramp{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                          r[3].get<double>()});
    }
    return SignalSpec::ramp_superposition(std::move(list));
  }
  throw ConfigError("unknown signal kind '" + kind + "'");
}

SignalTemplate parse_template(const json& j) {
  check_keys(j, "template", {"kind", "n_ramps", "lo", "hi"});
  SignalTemplate t;
  const std::string kind = require(j, "kind", "template").get<std::string>();
  if (kind == "sinusoid") {
    t.kind = SignalSpec::Kind::Sinusoid;
  } else if (kind == "ramps") {
    t.kind = SignalSpec::Kind::RampSuperposition;
    t.n_ramps = require(j, "n_ramps", "template").get<int>();
    if (t.n_ramps < 1) throw ConfigError("template: n_ramps must be >= 1");
  } else {
    throw ConfigError("unknown template kind '" + kind + "'");
  }
  t.lo = parse_vector(require(j, "lo", "template"), "template.lo");
  t.hi = parse_vector(require(j, "hi", "template"), "template.hi");
  if (t.lo.size() != t.dim() || t.hi.size() != t.dim())
    throw ConfigError("template boxes must have length " + std::to_string(t.dim()));
  if ((t.hi - t.lo).minCoeff() < 0.0) throw ConfigError("template: lo must not exceed hi");
  return t;
}

struct EngineConfig {
  EngineKind kind = EngineKind::Intrusive;
  IntrusiveOptions intrusive;
  TransportOptions transport;
};

EngineConfig parse_engine(const json& j) {
  check_keys(j, "engine", {"kind", "degree", "quad_order", "samples", "bins", "strategy", "seed"});
  EngineConfig e;
  const std::string kind = require(j, "kind", "engine").get<std::string>();
  if (kind == "intrusive") {
    e.kind = EngineKind::Intrusive;
    e.intrusive.degree = j.value("degree", 3);
    e.intrusive.quad_order = j.value("quad_order", 0);
    if (e.intrusive.degree < 0) throw ConfigError("engine: degree must be >= 0");
    if (e.intrusive.quad_order < 0) throw ConfigError("engine: quad_order must be >= 0");
  } else if (kind == "transport") {
    e.kind = EngineKind::Transport;
    e.transport.n_samples = j.value("samples", 1000);
    if (e.transport.n_samples < 2) throw ConfigError("engine: samples must be >= 2");
    e.transport.bins = j.value("bins", 0);
    if (e.transport.bins < 0) throw ConfigError("engine: bins must be >= 0");
    const std::string strategy = j.value("strategy", std::string("equiprobable"));
    if (strategy == "equiprobable")
      e.transport.strategy = BinStrategy::Equiprobable;
    else if (strategy == "equiwidth")
      e.transport.strategy = BinStrategy::Equiwidth;
    else
      throw ConfigError("engine: unknown binning strategy '" + strategy + "'");
    e.transport.seed = j.value("seed", 1ull);
  } else {
    throw ConfigError("unknown engine kind '" + kind + "'");
  }
  return e;
}

AdmissibleSet parse_admissible(const json& j, const SignalTemplate& tmpl, const TimeGrid& grid) {
  check_keys(j, "admissible", {"u_max", "du_max", "boundary_zero", "horizon"});
  AdmissibleSet set;
  if (j.contains("u_max")) set.u_max = j.at("u_max").get<double>();
  if (j.contains("du_max")) set.du_max = j.at("du_max").get<double>();
  set.boundary_zero = j.value("boundary_zero", false);
  set.horizon = j.value("horizon", grid.tf);
  set.lo = tmpl.lo;
  set.hi = tmpl.hi;
  if ((set.u_max && *set.u_max < 0.0) || (set.du_max && *set.du_max < 0.0))
    throw ConfigError("admissible bounds must be non-negative");
  return set;
}

DeConfig parse_de(const json& j, int dim) {
  check_keys(j, "de",
             {"n_pop", "iterations", "F", "CR", "seed", "penalty", "refine", "refine_tol",
              "stagnation_window", "stagnation_tol"});
  DeConfig de;
  de.n_pop = j.value("n_pop", 20);
  de.iterations = j.value("iterations", 50);
  de.weight_f = j.value("F", 0.8);
  de.crossover = j.value("CR", 0.9);
  de.seed = j.value("seed", 0ull);
  de.penalty = j.value("penalty", 1e3);
  de.refine = j.value("refine", true);
  de.refine_tol = j.value("refine_tol", 1e-7);
  de.stagnation_window = j.value("stagnation_window", 0);
  de.stagnation_tol = j.value("stagnation_tol", 1e-10);
  de.validate(dim);
  return de;
}

LpvSystem lpv_with_noise(const std::string& model, const VehicleParams& vehicle,
                         const json& cfg) {
  LpvSystem sys = find_lpv(model, vehicle);
  if (!cfg.contains("noise")) return sys;
  const json& j = cfg.at("noise");
  check_keys(j, "noise", {"sigma_w", "sigma_nu", "omega_mean", "nu_mean"});
  if (j.contains("sigma_w")) {
    const Eigen::MatrixXd Sw = parse_matrix(j.at("sigma_w"), "noise.sigma_w");
    if (Sw.rows() != sys.n || Sw.cols() != sys.n)
      throw ConfigError("noise.sigma_w must be n x n");
    sys.sigma_w = [Sw](const Eigen::VectorXd&) { return Sw; };
  }
  if (j.contains("sigma_nu")) {
    const Eigen::MatrixXd Snu = parse_matrix(j.at("sigma_nu"), "noise.sigma_nu");
    if (Snu.rows() != sys.m || Snu.cols() != sys.m)
      throw ConfigError("noise.sigma_nu must be m x m");
    sys.sigma_nu = [Snu](const Eigen::VectorXd&) { return Snu; };
  }
  if (j.contains("omega_mean")) {
    const Eigen::VectorXd w = parse_vector(j.at("omega_mean"), "noise.omega_mean");
    if (w.size() != sys.n) throw ConfigError("noise.omega_mean must have length n");
    sys.omega_mean = [w](const Eigen::VectorXd&) { return w; };
  }
  if (j.contains("nu_mean")) {
    const Eigen::VectorXd v = parse_vector(j.at("nu_mean"), "noise.nu_mean");
    if (v.size() != sys.m) throw ConfigError("noise.nu_mean must have length m");
    sys.nu_mean = [v](const Eigen::VectorXd&) { return v; };
  }
  return sys;
}

SensKind parse_sens_kind(const json& cfg) {
  if (!cfg.contains("sensitivity")) return SensKind::FirstOrder;
  const json& j = cfg.at("sensitivity");
  check_keys(j, "sensitivity", {"kind", "s_min"});
  const std::string kind = j.value("kind", std::string("first_order"));
  if (kind == "first_order") return SensKind::FirstOrder;
  if (kind == "total_order") return SensKind::TotalOrder;
  throw ConfigError("sensitivity.kind must be first_order or total_order");
}

std::optional<double> parse_s_min_override(const json& cfg) {
  if (cfg.contains("sensitivity") && cfg.at("sensitivity").contains("s_min"))
    return cfg.at("sensitivity").at("s_min").get<double>();
  return std::nullopt;
}

std::vector<ChanceConstraint> parse_constraints(const json& cfg) {
  std::vector<ChanceConstraint> list;
  if (!cfg.contains("constraints")) return list;
  for (const auto& j : cfg.at("constraints")) {
    check_keys(j, "constraints[]", {"output", "y_max", "alpha"});
    ChanceConstraint cc;
    cc.output = j.value("output", 1) - 1;  // config is 1-based
    cc.y_max = require(j, "y_max", "constraints[]").get<double>();
    cc.alpha = require(j, "alpha", "constraints[]").get<double>();
    if (!(cc.alpha > 0.0 && cc.alpha < 1.0))
      throw ConfigError("constraints: alpha must lie in (0, 1)");
    if (cc.output < 0) throw ConfigError("constraints: output index must be >= 1");
    list.push_back(cc);
  }
  return list;
}

struct CommandContext {
  json cfg;
  std::string command;
  fs::path out_dir;
  std::optional<std::uint64_t> seed_override;
  std::string raw_config;
};

void write_sidecar(const CommandContext& ctx) {
  json meta;
  meta["command"] = ctx.command;
  meta["version"] = kVersion;
  meta["timestamp"] = iso8601_now();
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a(ctx.raw_config)));
  meta["config_hash"] = hash;
  if (ctx.seed_override)
    meta["seed"] = *ctx.seed_override;
  else
    meta["seed"] = nullptr;
  meta["threads"] = max_threads();
  write_text_atomic(ctx.out_dir / "run_meta.json", meta.dump(2) + "\n");
}

struct SensitivitySetup {
  std::string model_name;
  VehicleParams vehicle;
  ParameterEnsemble ensemble;
  EngineConfig engine;
  TimeGrid grid;
  SensKind kind = SensKind::FirstOrder;
  std::optional<double> s_min_override;
};

SensitivitySetup parse_common(const json& cfg) {
  SensitivitySetup s;
  s.model_name = require(cfg, "model", "config").get<std::string>();
  s.vehicle = parse_vehicle(cfg);
  s.ensemble = parse_ensemble(require(cfg, "ensemble", "config"));
  s.engine = parse_engine(require(cfg, "engine", "config"));
  s.grid = parse_grid(require(cfg, "grid", "config"));
  s.kind = parse_sens_kind(cfg);
  s.s_min_override = parse_s_min_override(cfg);
  return s;
}

ExcitationProblem build_problem(const SensitivitySetup& s, const json& cfg) {
  ExcitationProblem problem;
  problem.engine = s.engine.kind;
  problem.ensemble = s.ensemble;
  problem.grid = s.grid;
  problem.intrusive = s.engine.intrusive;
  problem.transport = s.engine.transport;
  problem.sens_kind = s.kind;
  problem.s_min_override = s.s_min_override;
  if (s.engine.kind == EngineKind::Intrusive) {
    problem.lpv = lpv_with_noise(s.model_name, s.vehicle, cfg);
    if (problem.lpv.n < 1) throw ConfigError("model has no LPV form");
  } else {
    problem.blackbox = find_model(s.model_name, s.vehicle);
  }
  return problem;
}

void write_impact_csv(const fs::path& path, const Eigen::MatrixXd& impact,
                      const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "output,parameter,score\n";
  for (int i = 0; i < impact.rows(); ++i)
    for (int j = 0; j < impact.cols(); ++j)
      out << (i + 1) << ',' << names[j] << ',' << format_csv(impact(i, j)) << '\n';
  write_text_atomic(path, out.str());
}

int cmd_sensitivity(const CommandContext& ctx) {
  const SensitivitySetup setup = parse_common(ctx.cfg);
  const SignalSpec signal = parse_signal(require(ctx.cfg, "signal", "config"));

  fs::create_directories(ctx.out_dir);
  if (setup.engine.kind == EngineKind::Transport) {
    TransportOptions opts = setup.engine.transport;
    if (ctx.seed_override) opts.seed = *ctx.seed_override;
    const BlackBoxModel model = find_model(setup.model_name, setup.vehicle);
    const TransportTrajectory traj = nonintrusive_sensitivity_trajectory(
        model, signal.fn(), setup.ensemble, opts.n_samples, opts.bins, opts.strategy, setup.grid,
        opts.seed);
    write_transport_csv(ctx.out_dir / "sensitivity.csv", traj, setup.ensemble.names);

    MatrixSeries smin;
    smin.times = traj.times;
    const double floor_value = setup.s_min_override.value_or(0.0);
    smin.values.assign(traj.s_unnormalized.size(),
                       Eigen::MatrixXd::Constant(model.m, setup.ensemble.dim(), floor_value));
    const MatrixSeries dS = effective_sensitivity(traj.s_unnormalized, smin);
    write_impact_csv(ctx.out_dir / "impact.csv", impact_score(dS, setup.grid),
                     setup.ensemble.names);
  } else {
    ExcitationProblem problem = build_problem(setup, ctx.cfg);
    const ExcitationObjective objective(problem);
    const EngineOutput out = objective.engine_output(signal);

    const SurrogateTrajectory traj =
        simulate_surrogate(objective.surrogate(), signal.vector_fn(), setup.grid);
    const Eigen::MatrixXd var =
        variance_trajectory(traj.Y, problem.lpv.m, objective.surrogate().basis);
    std::vector<SobolResult> su(out.S.size());
    for (int k = 0; k < out.S.size(); ++k)
      su[k] = normalized_sobol(out.S.values[k], var.col(k));
    write_sensitivity_csv(ctx.out_dir / "sensitivity.csv", out.S, out.S_min, out.dS, su,
                          setup.ensemble.names);
    write_impact_csv(ctx.out_dir / "impact.csv", impact_score(out.dS, setup.grid),
                     setup.ensemble.names);
  }
  write_sidecar(ctx);
  return 0;
}

int cmd_optimize(const CommandContext& ctx) {
  const SensitivitySetup setup = parse_common(ctx.cfg);
  const SignalTemplate tmpl = parse_template(require(ctx.cfg, "template", "config"));
  ExcitationProblem problem = build_problem(setup, ctx.cfg);
  problem.signal = tmpl;
  problem.admissible =
      parse_admissible(ctx.cfg.value("admissible", json::object()), tmpl, setup.grid);
  const json& weights = require(ctx.cfg, "weights", "config");
  check_keys(weights, "weights", {"Q", "R"});
  problem.weights.Q = parse_matrix(require(weights, "Q", "weights"), "weights.Q");
  problem.weights.R = parse_matrix(require(weights, "R", "weights"), "weights.R");
  problem.chances = parse_constraints(ctx.cfg);

  DeConfig de = parse_de(ctx.cfg.value("de", json::object()), tmpl.dim());
  if (ctx.seed_override) {
    de.seed = *ctx.seed_override;
    problem.transport.seed = *ctx.seed_override;
  }

  const OptimizationResult result = solve(problem, de);

  fs::create_directories(ctx.out_dir);
  write_optimum_csv(ctx.out_dir / "optimum.csv", result);
  write_trace_csv(ctx.out_dir / "trace.csv", result);
  write_signal_csv(ctx.out_dir / "signal.csv", tmpl.instantiate(result.best_p), setup.grid);
  write_sidecar(ctx);
  return 0;
}

int cmd_identify(const CommandContext& ctx) {
  const json& cfg = ctx.cfg;
  const std::string model_name = require(cfg, "model", "config").get<std::string>();
  const VehicleParams vehicle = parse_vehicle(cfg);
  const TimeGrid grid = parse_grid(require(cfg, "grid", "config"));
  const json& id_cfg = require(cfg, "identify", "config");
  check_keys(id_cfg, "identify",
             {"theta_star", "theta0", "lo", "hi", "noise_std", "datasets", "combine", "names"});

  const Eigen::VectorXd theta_star =
      parse_vector(require(id_cfg, "theta_star", "identify"), "identify.theta_star");
  const Eigen::VectorXd theta0 =
      parse_vector(require(id_cfg, "theta0", "identify"), "identify.theta0");
  const Eigen::VectorXd lo = parse_vector(require(id_cfg, "lo", "identify"), "identify.lo");
  const Eigen::VectorXd hi = parse_vector(require(id_cfg, "hi", "identify"), "identify.hi");
  const double noise_std = id_cfg.value("noise_std", 0.0);
  if (noise_std < 0.0) throw ConfigError("identify.noise_std must be >= 0");

  std::vector<std::string> names;
  if (id_cfg.contains("names"))
    for (const auto& n : id_cfg.at("names")) names.push_back(n.get<std::string>());
  else
    for (int j = 0; j < theta_star.size(); ++j) names.push_back("theta_" + std::to_string(j + 1));

  struct DatasetSpec {
    std::string id;
    SignalSpec signal;
    std::uint64_t seed;
    double noise_std;
  };
  std::vector<DatasetSpec> specs;
  for (const auto& d : require(id_cfg, "datasets", "identify")) {
    check_keys(d, "identify.datasets[]", {"id", "signal", "seed", "noise_std"});
    DatasetSpec spec;
    spec.id = d.value("id", std::string("dataset") + std::to_string(specs.size() + 1));
    spec.signal = parse_signal(require(d, "signal", "identify.datasets[]"));
    spec.seed = d.value("seed", 1000ull + specs.size());
    spec.noise_std = d.value("noise_std", noise_std);
    specs.push_back(std::move(spec));
  }
  if (specs.empty()) throw ConfigError("identify: at least one dataset required");
  const bool combine = id_cfg.value("combine", specs.size() > 1);

  const BlackBoxModel model = find_model(model_name, vehicle);

  std::vector<Measurement> all;
  std::vector<EstimateReport> reports;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& spec = specs[i];
    const std::uint64_t seed =
        ctx.seed_override ? *ctx.seed_override + i : spec.seed;
    Measurement meas =
        synthesize_measurements(model, theta_star, spec.signal, grid, spec.noise_std, seed, spec.id);
    reports.push_back(least_squares_fit(model, {meas}, theta0, lo, hi));
    all.push_back(std::move(meas));
  }
  if (combine && all.size() > 1) reports.push_back(least_squares_fit(model, all, theta0, lo, hi));

  fs::create_directories(ctx.out_dir);
  write_estimates_csv(ctx.out_dir / "estimates.csv", reports, names);
  write_sidecar(ctx);
  return 0;
}

int cmd_rank(const CommandContext& ctx) {
  const SensitivitySetup setup = parse_common(ctx.cfg);
  const json& rank_cfg = require(ctx.cfg, "rank", "config");
  check_keys(rank_cfg, "rank", {"signals", "sort_by"});

  struct Entry {
    std::string id;
    SignalSpec signal;
    Eigen::VectorXd scores;
    bool feasible = true;
  };
  std::vector<Entry> entries;
  for (const auto& s : require(rank_cfg, "signals", "rank")) {
    Entry e;
    e.id = s.value("id", std::string("signal") + std::to_string(entries.size() + 1));
    e.signal = parse_signal(s);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ConfigError("rank: at least one signal required");

  const std::string sort_by = rank_cfg.value("sort_by", setup.ensemble.names.front());
  int sort_col = -1;
  for (int j = 0; j < setup.ensemble.dim(); ++j)
    if (setup.ensemble.names[j] == sort_by) sort_col = j;
  if (sort_col < 0) throw ConfigError("rank.sort_by does not name an ensemble parameter");

  ExcitationProblem problem = build_problem(setup, ctx.cfg);
  const ExcitationObjective objective(problem);
  AdmissibleSet adm;
  if (ctx.cfg.contains("admissible")) {
    SignalTemplate empty_tmpl;
    empty_tmpl.lo.resize(0);
    empty_tmpl.hi.resize(0);
    adm = parse_admissible(ctx.cfg.at("admissible"), empty_tmpl, setup.grid);
  }

  for (auto& e : entries) {
    const EngineOutput out = objective.engine_output(e.signal);
    const Eigen::MatrixXd impact = impact_score(out.dS, setup.grid);
    e.scores = impact.colwise().sum();  // aggregate outputs
    e.feasible =
        check_admissible(e.signal, Eigen::VectorXd(), adm, setup.grid).feasible(1e-9);
  }
  std::stable_sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    return a.scores[sort_col] > b.scores[sort_col];
  });

  fs::create_directories(ctx.out_dir);
  std::ostringstream out;
  out << "signal";
  for (const auto& name : setup.ensemble.names) out << ',' << name;
  out << ",feasible\n";
  for (const auto& e : entries) {
    out << e.id;
    for (int j = 0; j < e.scores.size(); ++j) out << ',' << format_csv(e.scores[j]);
    out << ',' << (e.feasible ? 1 : 0) << '\n';
  }
  write_text_atomic(ctx.out_dir / "ranking.csv", out.str());
  write_sidecar(ctx);
  return 0;
}

const char* kUsage =
    "usage: excite <sensitivity|optimize|identify|rank> --config <path> [--out <dir>]\n"
    "              [--seed <int>] [--threads <int>]\n";

}  // namespace

int run(int argc, const char* const* argv) {
  std::string command, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;

  // parse phase: any failure here is a configuration error (exit 2)
  CommandContext ctx;
  try {
    if (argc < 2) throw ConfigError("missing command");
    command = argv[1];
    if (command == "--help" || command == "-h" || command == "help") {
      std::cout << kUsage;
      return 0;
    }
    if (command != "sensitivity" && command != "optimize" && command != "identify" &&
        command != "rank")
      throw ConfigError("unknown command '" + command + "'");

    for (int i = 2; i < argc; ++i) {
      const std::string arg = argv[i];
      auto next = [&]() -> std::string {
        if (i + 1 >= argc) throw ConfigError("flag " + arg + " needs a value");
        return argv[++i];
      };
      if (arg == "--config")
        config_path = next();
      else if (arg == "--out")
        out_dir = next();
      else if (arg == "--seed")
        seed = std::stoull(next());
      else if (arg == "--threads")
        threads = std::stoi(next());
      else
        throw ConfigError("unknown flag '" + arg + "'");
    }
    if (config_path.empty()) throw ConfigError("--config is required");

    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    ctx.raw_config = buffer.str();
    ctx.cfg = json::parse(ctx.raw_config);

    static const std::initializer_list<const char*> kTopKeys = {
        "model",    "vehicle", "ensemble",    "engine", "grid",     "noise",
        "signal",   "template", "admissible", "weights", "constraints", "de",
        "identify", "rank",    "sensitivity", "out",    "threads"};
    check_keys(ctx.cfg, "config", kTopKeys);

    ctx.command = command;
    ctx.seed_override = seed;
    if (!out_dir.empty())
      ctx.out_dir = out_dir;
    else if (ctx.cfg.contains("out"))
      ctx.out_dir = ctx.cfg.at("out").get<std::string>();
    else
      ctx.out_dir = "excite_out";
    if (threads == 0 && ctx.cfg.contains("threads")) threads = ctx.cfg.at("threads").get<int>();

    // dry-run the section parsers so malformed configs fail before any output
    if (command == "sensitivity") {
      const auto setup = parse_common(ctx.cfg);
      parse_signal(require(ctx.cfg, "signal", "config"));
      (void)setup;
    } else if (command == "optimize") {
      const auto setup = parse_common(ctx.cfg);
      const SignalTemplate tmpl = parse_template(require(ctx.cfg, "template", "config"));
      parse_admissible(ctx.cfg.value("admissible", json::object()), tmpl, setup.grid);
      const json& weights = require(ctx.cfg, "weights", "config");
      parse_matrix(require(weights, "Q", "weights"), "weights.Q");
      parse_matrix(require(weights, "R", "weights"), "weights.R");
      parse_constraints(ctx.cfg);
      parse_de(ctx.cfg.value("de", json::object()), tmpl.dim());
    } else if (command == "identify") {
      require(ctx.cfg, "model", "config");
      parse_grid(require(ctx.cfg, "grid", "config"));
      require(ctx.cfg, "identify", "config");
    } else if (command == "rank") {
      parse_common(ctx.cfg);
      require(ctx.cfg, "rank", "config");
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n" << kUsage;
    return 2;
  }

  if (threads > 0) set_max_threads(threads);

  try {
    if (command == "sensitivity") return cmd_sensitivity(ctx);
    if (command == "optimize") return cmd_optimize(ctx);
    if (command == "identify") return cmd_identify(ctx);
    return cmd_rank(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace excite::cli
