#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <string>

#include "pgsr/analysis.hpp"
#include "pgsr/error.hpp"
#include "pgsr/experiments.hpp"
#include "pgsr/filters.hpp"
#include "pgsr/graph.hpp"
#include "pgsr/metrics.hpp"
#include "pgsr/sampling.hpp"
#include "pgsr/signal.hpp"

namespace py = pybind11;
using namespace pgsr;

namespace {

FilterConfig make_config(double mu, int k_history, const std::string& gain_rule,
                         const std::string& history_gain, const Matrix& noise_cov,
                         double gain_cap, double step_cap, int inner_iters, const Vector& fixed_gains) {
  FilterConfig c;
  c.mu = mu;
  c.k_history = k_history;
  c.gain_rule = parse_gain_rule(gain_rule);
  c.history_gain = parse_history_gain(history_gain);
  c.noise_cov = noise_cov;
  c.gain_cap = gain_cap;
  c.step_cap = step_cap;
  c.inner_iters = inner_iters;
  c.fixed_gains = fixed_gains;
  c.validate();
  return c;
}

py::dict curves(const ScenarioResult& r) {
  py::dict out;
  for (const auto& a : r.algorithms) {
    py::dict d;
    d["nmsd"] = a.curve.values;
    d["stderr"] = a.curve.stderr_values;
    d["diverged_trials"] = a.diverged_trials;
    out[py::str(a.label)] = d;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_pgsr, m) {
  m.doc() = "Proportionate-type adaptive graph signal recovery";

  static py::exception<Error> exc(m, "PgsrError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(exc.ptr())(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(exc.ptr(), inst.ptr());
    }
  });

  m.def("random_uniform_graph",
        [](int n, std::uint64_t seed) { return random_uniform_graph(n, seed).weights(); },
        py::arg("n_nodes"), py::arg("seed"), "Symmetric U(0,1) adjacency with zero diagonal.");
  m.def("laplacian", [](const Matrix& w) { return laplacian(build_graph(w)).matrix; }, py::arg("weights"));
  m.def("gft_basis",
        [](const Matrix& w) {
          const GftBasis b = gft_basis(laplacian(build_graph(w)));
          return py::make_tuple(b.eigenvalues, b.eigenvectors);
        },
        py::arg("weights"), "Returns (eigenvalues, U) with the library's ordering and sign rule.");

  py::class_<GftBasis>(m, "GftBasis")
      .def(py::init([](const Matrix& w) { return gft_basis(laplacian(build_graph(w))); }), py::arg("weights"))
      .def_readonly("eigenvalues", &GftBasis::eigenvalues)
      .def_readonly("eigenvectors", &GftBasis::eigenvectors)
      .def("gft", [](const GftBasis& b, const Vector& x) { return gft(b, x); })
      .def("igft", [](const GftBasis& b, const Vector& s) { return igft(b, s); });

  m.def("synth_bandlimited",
        [](const GftBasis& b, int bandwidth, std::uint64_t seed, double sigma) {
          const GroundTruth t = synth_bandlimited(b, bandwidth, seed, sigma);
          return py::make_tuple(t.s_true, t.x_true);
        },
        py::arg("basis"), py::arg("bandwidth"), py::arg("seed"), py::arg("sigma") = 1.0);

  m.def("make_operator",
        [](const GftBasis& b, int m_rows, int s_count, std::uint64_t seed) {
          const SamplingOperator op = make_operator(b, m_rows, s_count, seed);
          py::dict d;
          d["sensing"] = op.sensing();
          d["selection"] = op.selection();
          d["composite"] = op.composite();
          return d;
        },
        py::arg("basis"), py::arg("m"), py::arg("s_count"), py::arg("seed"));

  py::class_<Filter>(m, "Filter")
      .def(py::init([](const std::string& kind, int n_coeffs, double mu, int k_history,
                       const std::string& gain_rule, const std::string& history_gain,
                       const Matrix& noise_cov, double gain_cap, double step_cap, int inner_iters,
                       const Vector& fixed_gains) {
             return Filter(parse_algorithm(kind), make_config(mu, k_history, gain_rule, history_gain, noise_cov,
                                                              gain_cap, step_cap, inner_iters, fixed_gains),
                           n_coeffs);
           }),
           py::arg("kind"), py::arg("n_coeffs"), py::arg("mu"), py::arg("k_history") = 1,
           py::arg("gain_rule") = "identity", py::arg("history_gain") = "zero",
           py::arg("noise_cov") = Matrix(), py::arg("gain_cap") = 1e3, py::arg("step_cap") = 1.0,
           py::arg("inner_iters") = 2, py::arg("fixed_gains") = Vector())
      .def("update", &Filter::update, py::arg("a"), py::arg("y"))
      .def_property_readonly("estimate", [](const Filter& f) { return f.state().s_est; })
      .def_property_readonly("g", [](const Filter& f) { return f.state().g_diag; })
      .def_property_readonly("h", [](const Filter& f) { return f.state().h_diag; })
      .def_property_readonly("n", [](const Filter& f) { return f.state().n; });

  m.def("nmsd", &nmsd, py::arg("s_true"), py::arg("s_est"));
  m.def("build_b1", &build_b1, py::arg("g"), py::arg("h"), py::arg("a"), py::arg("history") = std::vector<Matrix>{});
  m.def("stability_bound",
        [](const Matrix& b1, double mu) {
          const StabilityReport r = stability_bound(b1, mu);
          py::dict d;
          d["lambda_max"] = r.lambda_max;
          d["mu_bound"] = r.mu_bound;
          d["mean_spectral_radius"] = r.mean_spectral_radius;
          d["mean_stable"] = r.mean_stable;
          return d;
        },
        py::arg("b1"), py::arg("mu"));
  m.def("steady_state_msd",
        [](const Vector& g, const Vector& h, const Matrix& a, const std::vector<Matrix>& hist,
           const Matrix& cov, double mu) { return steady_state_msd(g, h, a, hist, cov, mu).msd; },
        py::arg("g"), py::arg("h"), py::arg("a"), py::arg("history"), py::arg("noise_cov"), py::arg("mu"));

  m.def("config_hash",
        [](const std::filesystem::path& p) { return config_hash(load_scenario(p)); }, py::arg("path"));
  m.def("run_config",
        [](const std::filesystem::path& p, int threads, int trials) {
          RunOptions o;
          o.threads = threads;
          o.trials_override = trials;
          ScenarioResult r;
          {
            py::gil_scoped_release nogil;
            r = run_scenario(load_scenario(p), o);
          }
          return curves(r);
        },
        py::arg("path"), py::arg("threads") = 1, py::arg("trials") = 0,
        "Runs a TOML scenario; returns {label: {nmsd, stderr, diverged_trials}}.");
}
