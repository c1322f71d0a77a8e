#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "srmq/cli.hpp"
#include "srmq/errors.hpp"
#include "srmq/lqt_oracle.hpp"
#include "srmq/qlearn.hpp"
#include "srmq/scheduler.hpp"
#include "srmq/sim.hpp"

namespace py = pybind11;
using namespace srmq;

namespace {

py::dict report_dict(const RunReport& r) {
  py::dict d;
  d["exit_code"] = r.exit_code;
  d["text"] = r.text;
  d["json"] = py::module_::import("json").attr("loads")(r.json);
  std::vector<std::string> artifacts;
  for (const auto& a : r.artifacts) artifacts.push_back(a.string());
  d["artifacts"] = artifacts;
  return d;
}

// Simulation trace as column arrays, convenient for numpy and pandas.
py::dict trace_dict(const SimTrace& trace, const Metrics* metrics) {
  const std::size_t n = trace.records.size();
  Eigen::VectorXd t(n), theta(n), r(n), x(n), u(n), k1(n), k2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = trace.records[i];
    t(i) = rec.t;
    theta(i) = rec.theta;
    r(i) = rec.r;
    x(i) = rec.x;
    u(i) = rec.u;
    k1(i) = rec.K1;
    k2(i) = rec.K2;
  }
  py::dict d;
  d["t"] = t;
  d["theta"] = theta;
  d["r"] = r;
  d["x"] = x;
  d["u"] = u;
  d["K1"] = k1;
  d["K2"] = k2;
  d["aborted"] = trace.aborted;
  d["diagnostic"] = trace.diagnostic;
  d["online_updates"] = trace.online_updates;
  if (metrics) {
    py::dict m;
    m["rmse"] = metrics->rmse;
    m["rmse_rel"] = metrics->rmse_rel;
    m["ripple"] = metrics->ripple;
    m["mean_settling_steps"] = metrics->mean_settling_steps;
    m["final_mean_dk"] = metrics->final_mean_dk;
    m["evaluated_windows"] = metrics->evaluated_windows;
    d["metrics"] = m;
  } else {
    d["metrics"] = py::none();
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_srmq, m) {
  m.doc() = "Scheduled Q-learning current control for a switched reluctance motor phase";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<RankDeficientError>(m, "RankDeficientError", PyExc_RuntimeError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);
  py::register_exception<SafetyAbort>(m, "SafetyAbort", PyExc_RuntimeError);

  m.def("discretize", [](double resistance, double sample_period, double inductance) {
        const PhaseCoefficients pc = discretize(resistance, sample_period, inductance);
        return py::make_tuple(pc.A, pc.B);
      },
      py::arg("resistance"), py::arg("sample_period"), py::arg("inductance"),
      "Returns (A, B) of x' = A x + B u.");

  m.def("riccati_gain",
        [](double A, double B, double Q, double R_u, double gamma, double C, double F) {
          const AugmentedModel model = build_augmented(A, B, C, F, Q, R_u, gamma);
          const AreSolution are = are_fixed_point(model);
          py::dict d;
          d["K"] = Eigen::RowVector2d(optimal_gain(are.kernel, model).K);
          d["P"] = Eigen::Matrix2d(are.kernel.P);
          d["iterations"] = are.iterations;
          d["residual"] = are.residual;
          return d;
        },
        py::arg("A"), py::arg("B"), py::arg("Q") = 100.0, py::arg("R_u") = 0.001,
        py::arg("gamma") = 0.9, py::arg("C") = 1.0, py::arg("F") = 1.0);

  m.def("policy_iteration",
        [](double A, double B, const Eigen::RowVector2d& K0, double Q, double R_u, double gamma) {
          const AugmentedModel model = build_augmented(A, B, 1.0, 1.0, Q, R_u, gamma);
          const PolicyIterationResult pi = policy_iteration_model_based(model, PolicyGain(K0));
          return py::make_tuple(Eigen::RowVector2d(pi.gain.K), pi.iterations);
        },
        py::arg("A"), py::arg("B"), py::arg("K0"), py::arg("Q") = 100.0,
        py::arg("R_u") = 0.001, py::arg("gamma") = 0.9,
        "Model-based policy iteration; returns (K, iterations).");

  m.def("q_learning",
        [](double A, double B, const Eigen::RowVector2d& K0, double Q, double R_u, double gamma,
           double dither, int tuples, double gain_tol, double reference_level, std::uint64_t seed) {
          FrozenPhaseEnvironment env(A, B, 1.0, 1e9, reference_level, 0.0);
          TrainConfig cfg;
          cfg.cost = make_tracking_cost(1.0, Q, R_u, gamma);
          cfg.dither_amplitude = dither;
          cfg.tuples_per_iteration = tuples;
          cfg.gain_tol = gain_tol;
          cfg.safety_current = 1e9;
          cfg.seed = seed;
          const TrainResult res = q_policy_iteration(env, PolicyGain(K0), cfg);
          py::dict d;
          d["K"] = Eigen::RowVector2d(res.gain.K);
          d["G"] = Eigen::Matrix3d(res.kernel.G);
          d["iterations"] = res.iterations;
          std::vector<Eigen::RowVector2d> history;
          for (const auto& g : res.gains) history.push_back(g.K);
          d["history"] = history;
          return d;
        },
        py::arg("A"), py::arg("B"), py::arg("K0"), py::arg("Q") = 100.0,
        py::arg("R_u") = 0.001, py::arg("gamma") = 0.9, py::arg("dither") = 15.0,
        py::arg("tuples") = 6, py::arg("gain_tol") = 1e-4, py::arg("reference_level") = 4.0,
        py::arg("seed") = 1,
        "Model-free Q-function policy iteration on a black-box linear phase.");

  m.def("batch_ls_solve",
        [](const std::vector<Eigen::Vector3d>& m_k, const std::vector<Eigen::Vector3d>& m_next,
           const std::vector<double>& costs, double gamma) {
          if (m_k.size() != m_next.size() || m_k.size() != costs.size()) {
            throw ValidationError("batch_ls_solve: m_k, m_next and costs differ in length");
          }
          std::vector<DataTuple> tuples;
          for (std::size_t i = 0; i < m_k.size(); ++i) tuples.push_back({m_k[i], m_next[i], costs[i]});
          const LsSolution sol = batch_ls_solve(build_ls_rows(tuples, gamma));
          return py::make_tuple(Eigen::Matrix3d(sol.kernel.G), sol.residual);
        },
        py::arg("m_k"), py::arg("m_next"), py::arg("costs"), py::arg("gamma") = 0.9,
        "Least-squares Q-kernel from tuples (M_k, M_k+1, cost); returns (G, residual).");

  py::class_<QCoreTable>(m, "QCoreTable")
      .def_static("load", [](const std::string& path) { return load_table(path).table; })
      .def_property_readonly("shape", [](const QCoreTable& t) {
        return py::make_tuple(t.grid().rows(), t.grid().cols());
      })
      .def_property_readonly("theta_nodes", [](const QCoreTable& t) { return t.grid().theta_nodes; })
      .def_property_readonly("current_nodes", [](const QCoreTable& t) { return t.grid().current_nodes; })
      .def("core", [](const QCoreTable& t, std::size_t r, std::size_t c) {
        return Eigen::Matrix3d(t.core(r, c).G);
      })
      .def("gain", [](const QCoreTable& t, std::size_t r, std::size_t c) {
        return Eigen::RowVector2d(t.gain(r, c).K);
      })
      .def("scheduled_q", [](const QCoreTable& t, double theta, double current) {
        return Eigen::Matrix3d(t.scheduled_q(theta, current).G);
      })
      .def("scheduled_gain", [](const QCoreTable& t, double theta, double current) {
        return Eigen::RowVector2d(t.scheduled_gain(theta, current).gain.K);
      });

  m.def("default_config", [] { return dump_config(Config{}); },
        "Complete default configuration as INI text.");

  m.def("train", [](const std::string& config, const std::string& table_out) {
        return report_dict(guarded([&] { return cmd_train(parse_config(config), table_out); }));
      },
      py::arg("config"), py::arg("table_out"));
  m.def("run",
        [](const std::string& config, const std::string& table, const std::string& out_dir,
           const std::string& format) {
          return report_dict(guarded([&] {
            return cmd_run(parse_config(config), table, out_dir, parse_trace_format(format));
          }));
        },
        py::arg("config"), py::arg("table"), py::arg("out_dir"), py::arg("format") = "csv");
  m.def("compare",
        [](const std::string& config, const std::string& table, const std::string& out_dir,
           const std::string& format) {
          return report_dict(guarded([&] {
            return cmd_compare(parse_config(config), table, out_dir, parse_trace_format(format));
          }));
        },
        py::arg("config"), py::arg("table"), py::arg("out_dir"), py::arg("format") = "csv");
  m.def("oracle", [](const std::string& config) {
        return report_dict(guarded([&] { return cmd_oracle(parse_config(config)); }));
      },
      py::arg("config") = "");

  m.def("simulate",
        [](const std::string& config, std::optional<QCoreTable> table) {
          const Config c = parse_config(config);
          const Scenario s = build_scenario(c, build_surface(c));
          const SimTrace trace = table ? run_closed_loop(s, *table) : run_closed_loop(s);
          std::optional<Metrics> metrics;
          try {
            metrics = compute_metrics(trace, s);
          } catch (const ValidationError&) {
            if (!trace.aborted) throw;
          }
          return trace_dict(trace, metrics ? &*metrics : nullptr);
        },
        py::arg("config") = "", py::arg("table") = py::none(),
        "Closed loop without files. `table` is updated only on a copy.");
}
