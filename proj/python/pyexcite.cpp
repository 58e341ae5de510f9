#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "excite/identify.hpp"
#include "excite/models.hpp"
#include "excite/optimizer.hpp"
#include "excite/pce.hpp"
#include "excite/sensitivity.hpp"
#include "excite/transport.hpp"
#include "excite/util.hpp"

namespace py = pybind11;
using namespace excite;

namespace {

ParameterEnsemble make_ensemble(const std::vector<py::dict>& entries) {
  ParameterEnsemble e;
  for (const auto& d : entries) {
    const std::string name = d["name"].cast<std::string>();
    const std::string dist = d["dist"].cast<std::string>();
    if (dist == "uniform")
      e.marginals.push_back(
          Marginal::uniform(d["lower"].cast<double>(), d["upper"].cast<double>()));
    else if (dist == "gaussian")
      e.marginals.push_back(
          Marginal::gaussian(d["mean"].cast<double>(), d["std"].cast<double>()));
    else
      throw std::invalid_argument("dist must be uniform or gaussian");
    e.names.push_back(name);
  }
  e.validate();
  return e;
}

py::array_t<double> series_to_array(const MatrixSeries& s) {
  const int T = s.size(), r = s.rows(), c = s.cols();
  py::array_t<double> out({T, r, c});
  auto buf = out.mutable_unchecked<3>();
  for (int k = 0; k < T; ++k)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) buf(k, i, j) = s.values[k](i, j);
  return out;
}

}  // namespace

PYBIND11_MODULE(pyexcite, m) {
  m.doc() = "Excitation design for parameter identification: polynomial-chaos "
            "surrogates, optimal-transport sensitivities, signal optimization";

  py::class_<ParameterEnsemble>(m, "ParameterEnsemble")
      .def(py::init(&make_ensemble))
      .def_property_readonly("dim", &ParameterEnsemble::dim)
      .def_readonly("names", &ParameterEnsemble::names)
      .def("mean", &ParameterEnsemble::mean);

  py::class_<ChaosBasis>(m, "ChaosBasis")
      .def_property_readonly("size", &ChaosBasis::size)
      .def_readonly("degree", &ChaosBasis::degree)
      .def_readonly("norms", &ChaosBasis::norms)
      .def_readonly("indices", &ChaosBasis::indices);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<double, double, double>(), py::arg("t0"), py::arg("tf"), py::arg("h"))
      .def_readonly("t0", &TimeGrid::t0)
      .def_readonly("tf", &TimeGrid::tf)
      .def_readonly("h", &TimeGrid::h)
      .def("times", &TimeGrid::times);

  m.def("multi_index_count", &multi_index_count, py::arg("q"), py::arg("d"));
  m.def("build_multi_index_set", &build_multi_index_set, py::arg("q"), py::arg("d"));
  m.def("make_basis", &make_basis, py::arg("ensemble"), py::arg("degree"));
  m.def("eval_basis", &eval_basis, py::arg("basis"), py::arg("theta"));
  m.def(
      "gauss_quadrature",
      [](const ParameterEnsemble& e, int order) {
        const QuadratureGrid g = gauss_quadrature(e, order);
        return py::make_tuple(g.nodes, g.weights);
      },
      py::arg("ensemble"), py::arg("order_per_dim"));
  m.def("pce_moments", &pce_moments, py::arg("basis"), py::arg("coeffs"));

  py::class_<SignalSpec>(m, "SignalSpec")
      .def_static("zero", &SignalSpec::zero)
      .def_static("sinusoid", &SignalSpec::sinusoid, py::arg("amplitude"), py::arg("frequency"),
                  py::arg("phase") = 0.0)
      .def_static(
          "ramps",
          [](const std::vector<std::array<double, 4>>& rows) {
            std::vector<Ramp> ramps;
            for (const auto& r : rows) ramps.push_back(Ramp{r[0], r[1], r[2], r[3]});
            return SignalSpec::ramp_superposition(std::move(ramps));
          },
          py::arg("ramps"))
      .def("__call__", &SignalSpec::evaluate, py::arg("t"));

  py::class_<LpvSystem>(m, "LpvSystem")
      .def_readonly("n", &LpvSystem::n)
      .def_readonly("m", &LpvSystem::m)
      .def_readonly("l", &LpvSystem::l);

  py::class_<SurrogateSystem>(m, "SurrogateSystem")
      .def_property_readonly("state_dim", &SurrogateSystem::state_dim)
      .def_property_readonly("output_dim", &SurrogateSystem::output_dim)
      .def_readonly("Ap", &SurrogateSystem::Ap)
      .def_readonly("Bp", &SurrogateSystem::Bp)
      .def_readonly("Cp", &SurrogateSystem::Cp)
      .def_readonly("basis", &SurrogateSystem::basis);

  py::class_<SurrogateTrajectory>(m, "SurrogateTrajectory")
      .def_readonly("times", &SurrogateTrajectory::times)
      .def_readonly("X", &SurrogateTrajectory::X)
      .def_readonly("Y", &SurrogateTrajectory::Y);

  m.def("spring_damper_lpv", &spring_damper_lpv);
  m.def("linear_single_track_lpv", []() { return linear_single_track_lpv(VehicleParams{}); });
  m.def("spring_damper_priors", &spring_damper_priors);
  m.def("linear_vehicle_priors", &linear_vehicle_priors);
  m.def("nonlinear_vehicle_priors", &nonlinear_vehicle_priors);

  m.def("build_surrogate", &build_surrogate, py::arg("system"), py::arg("basis"),
        py::arg("grid"));
  m.def(
      "simulate_surrogate",
      [](const SurrogateSystem& s, const SignalSpec& u, const TimeGrid& grid) {
        return simulate_surrogate(s, u.vector_fn(), grid);
      },
      py::arg("surrogate"), py::arg("signal"), py::arg("grid"));
  m.def("reconstruct_output", &reconstruct_output, py::arg("surrogate"), py::arg("trajectory"),
        py::arg("theta"));
  m.def("surrogate_mean", &surrogate_mean);
  m.def("surrogate_variance", &surrogate_variance);
  m.def(
      "minimal_sensitivity",
      [](const LpvSystem& sys, const Eigen::VectorXd& theta_bar, const TimeGrid& grid, int q) {
        return series_to_array(noise_to_minimal_sensitivity(sys, theta_bar, grid, q));
      },
      py::arg("system"), py::arg("theta_bar"), py::arg("grid"), py::arg("q"));

  py::class_<IndexSets>(m, "IndexSets")
      .def_readonly("first_order", &IndexSets::first_order)
      .def_readonly("total_order", &IndexSets::total_order);
  m.def("build_index_sets", &build_index_sets);
  m.def(
      "sensitivity_trajectory",
      [](const SurrogateTrajectory& traj, int m_out, const IndexSets& sets, bool total) {
        return series_to_array(sensitivity_trajectory(
            traj.times, traj.Y, m_out, sets, total ? SensKind::TotalOrder : SensKind::FirstOrder));
      },
      py::arg("trajectory"), py::arg("m"), py::arg("sets"), py::arg("total_order") = false);
  m.def(
      "normalized_sobol",
      [](const Eigen::MatrixXd& S, const Eigen::VectorXd& var) {
        const SobolResult r = normalized_sobol(S, var);
        return py::make_tuple(r.su, std::vector<bool>(r.defined.begin(), r.defined.end()));
      },
      py::arg("S"), py::arg("total_variance"));

  m.def("sample_parameters", &sample_parameters, py::arg("ensemble"), py::arg("n_samples"),
        py::arg("seed"));
  m.def("empirical_moments", &empirical_moments, py::arg("values"));
  m.def(
      "bures_distance",
      [](const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& mu2,
         const Eigen::MatrixXd& s2) {
        const BuresParts p = bures_distance(mu1, s1, mu2, s2);
        return py::make_tuple(p.w2b, p.m2, p.v2);
      },
      py::arg("mu1"), py::arg("sigma1"), py::arg("mu2"), py::arg("sigma2"));
  m.def(
      "ot_sensitivity",
      [](const Eigen::MatrixXd& theta, const Eigen::MatrixXd& y, int parameter, int bins,
         const std::string& strategy) {
        SampleSet set;
        set.theta = theta;
        set.y = y;
        const OtIndices idx = ot_sensitivity(
            set, parameter, bins,
            strategy == "equiwidth" ? BinStrategy::Equiwidth : BinStrategy::Equiprobable);
        return py::make_tuple(idx.xi_b, idx.iota_b, idx.iota_s);
      },
      py::arg("theta"), py::arg("y"), py::arg("parameter") = 0, py::arg("bins") = 0,
      py::arg("strategy") = "equiprobable");

  m.def(
      "simulate",
      [](const std::string& model, const Eigen::VectorXd& theta, const SignalSpec& u,
         const TimeGrid& grid) { return find_model(model).simulate(theta, u.fn(), grid); },
      py::arg("model"), py::arg("theta"), py::arg("signal"), py::arg("grid"),
      "Run a registry model (spring_damper, single_track_nl, single_track_lin)");

  m.def(
      "differential_evolution",
      [](const std::function<double(const Eigen::VectorXd&)>& objective,
         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int n_pop, int iterations,
         std::uint64_t seed) {
        DeConfig cfg;
        cfg.n_pop = n_pop;
        cfg.iterations = iterations;
        cfg.seed = seed;
        cfg.refine = false;
        const OptimizationResult r = differential_evolution(objective, lo, hi, cfg);
        return py::make_tuple(r.best_p, r.best_j);
      },
      py::arg("objective"), py::arg("lo"), py::arg("hi"), py::arg("n_pop") = 8,
      py::arg("iterations") = 50, py::arg("seed") = 0,
      "Maximize a callable over box constraints; returns (best_p, best_J)");

  m.def("set_max_threads", &set_max_threads);
  m.attr("__version__") = kVersion;
}
