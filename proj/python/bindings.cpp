#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <ios>
#include <sstream>

#include "recmm/dataset.hpp"
#include "recmm/errors.hpp"
#include "recmm/estimator.hpp"
#include "recmm/link.hpp"
#include "recmm/marginal_mean.hpp"
#include "recmm/mc_harness.hpp"
#include "recmm/serialization.hpp"
#include "recmm/simulation.hpp"
#include "recmm/variance.hpp"
#include "recmm/weights.hpp"

namespace py = pybind11;
using namespace recmm;

namespace {

SimulationConfig scenario(const std::string& preset_or_path, std::optional<std::size_t> n,
                          std::optional<std::uint64_t> seed) {
  SimulationConfig cfg = preset_or_path.find(".toml") != std::string::npos ? load_simulation_config(preset_or_path)
                                                                           : preset_config(preset_or_path);
  if (n) cfg.n = *n;
  if (seed) cfg.seed = *seed;
  return cfg;
}

std::vector<CovariateInterval> to_profile(const std::vector<std::pair<double, std::vector<double>>>& rows) {
  std::vector<CovariateInterval> out;
  for (const auto& [start, values] : rows) out.push_back({start, values});
  return out;
}

// fit plus its variance, so predict can pick up the covariance
struct Fit {
  FitResult result;
  std::optional<VarianceResult> variance;
};

py::dict step_dict(const StepFunction& f) {
  py::dict d;
  d["time"] = f.times;
  d["value"] = f.values;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Marginal-mean transformation models for recurrent and terminal events";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const std::ios_base::failure& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    }
  });

  py::class_<LinkFunction>(m, "Link")
      .def_static("box_cox", &LinkFunction::box_cox, py::arg("rho"))
      .def_static("logarithmic", &LinkFunction::logarithmic, py::arg("r"))
      .def_static("parse", &LinkFunction::parse, py::arg("spec"))
      .def("__call__", &LinkFunction::value, py::arg("x"))
      .def("derivatives",
           [](const LinkFunction& g, double x) {
             const auto v = g.eval(x);
             return py::make_tuple(v.g, v.g1, v.g2);
           })
      .def("inverse", &LinkFunction::inverse)
      .def_property_readonly("is_identity", &LinkFunction::is_identity)
      .def("__eq__", [](const LinkFunction& a, const LinkFunction& b) { return a == b; })
      .def("__repr__", [](const LinkFunction& g) { return "Link('" + g.to_string() + "')"; })
      .def("__str__", &LinkFunction::to_string);

  py::class_<Dataset>(m, "Dataset")
      .def_static("read_csv", &parse_dataset_file, py::arg("path"), py::arg("tau"))
      .def_static(
          "from_csv",
          [](const std::string& text, double tau) {
            std::istringstream in(text);
            return parse_dataset(in, tau);
          },
          py::arg("text"), py::arg("tau"))
      .def("to_csv",
           [](const Dataset& ds) {
             std::ostringstream out;
             write_dataset(out, ds);
             return out.str();
           })
      .def("__len__", &Dataset::size)
      .def_property_readonly("dim", &Dataset::dim)
      .def_property_readonly("tau", &Dataset::tau)
      .def_property_readonly("grid", &Dataset::recurrent_grid)
      .def_property_readonly("warnings", &Dataset::warnings);

  py::class_<Fit>(m, "Fit")
      .def_property_readonly("link", [](const Fit& f) { return f.result.link; })
      .def_property_readonly("beta", [](const Fit& f) { return f.result.beta; })
      .def_property_readonly("jump_times", [](const Fit& f) { return f.result.jump_times; })
      .def_property_readonly("jump_sizes", [](const Fit& f) { return f.result.jump_sizes; })
      .def_property_readonly("loglik", [](const Fit& f) { return f.result.loglik; })
      .def_property_readonly("converged", [](const Fit& f) { return f.result.converged; })
      .def_property_readonly("iterations", [](const Fit& f) { return f.result.iterations; })
      .def_property_readonly("gradient_norm", [](const Fit& f) { return f.result.gradient_norm; })
      .def_property_readonly("warnings", [](const Fit& f) { return f.result.warnings; })
      .def_property_readonly("has_variance", [](const Fit& f) { return f.variance.has_value(); })
      .def_property_readonly("se", [](const Fit& f) -> py::object {
        return f.variance ? py::cast(f.variance->beta_se) : py::none();
      })
      .def_property_readonly("se_fisher", [](const Fit& f) -> py::object {
        return f.variance ? py::cast(f.variance->fisher_only_se) : py::none();
      })
      .def_property_readonly("covariance", [](const Fit& f) -> py::object {
        return f.variance ? py::cast(f.variance->covariance) : py::none();
      })
      .def("cumulative_baseline", [](const Fit& f, double t) { return f.result.cumulative_baseline(t); })
      .def("baseline_se",
           [](const Fit& f, double t, bool fisher_only) {
             if (!f.variance) throw ValidationError("fit has no variance");
             return std::sqrt(std::max(0.0, baseline_variance(*f.variance, t, fisher_only)));
           },
           py::arg("t"), py::arg("fisher_only") = false)
      .def("to_json", [](const Fit& f) { return fit_to_json(f.result, f.variance ? &*f.variance : nullptr).dump(); });

  m.def(
      "fit",
      [](const Dataset& ds, const std::string& link, double tol, int max_iter, bool variance) {
        SolverOptions opts;
        opts.tol = tol;
        opts.max_iter = max_iter;
        const LinkFunction g = LinkFunction::parse(link);
        Fit out;
        {
          py::gil_scoped_release release;
          const auto gc = km_censoring(ds);
          const auto wc = ipc_weights(ds, gc);
          out.result = fit_npmle(ds, wc, g, opts);
          if (variance && out.result.converged) out.variance = sandwich(out.result, ds, wc, gc, g);
        }
        return out;
      },
      py::arg("data"), py::arg("link") = "boxcox:1", py::arg("tol") = 1e-8, py::arg("max_iter") = 500,
      py::arg("variance") = true);

  m.def(
      "ghosh_lin",
      [](const Dataset& ds) { return ghosh_lin_fit(ds, ipc_weights(ds, km_censoring(ds))); }, py::arg("data"));

  m.def(
      "predict",
      [](const Fit& f, const std::vector<std::pair<double, std::vector<double>>>& profile,
         const std::vector<double>& times, bool log_band) {
        PredictionOptions opts;
        opts.log_band = log_band;
        const auto c =
            predict_marginal_mean(f.result, f.variance ? &*f.variance : nullptr, to_profile(profile), times, opts);
        py::dict d;
        d["time"] = c.times;
        d["mean"] = c.mean;
        d["se"] = c.se;
        d["lo"] = c.ci_low;
        d["hi"] = c.ci_high;
        return d;
      },
      py::arg("fit"), py::arg("profile"), py::arg("times"), py::arg("log_band") = false,
      "profile: list of (start, [z1, ...]) pieces, the first starting at 0");

  m.def(
      "nelson_aalen_pseudo", [](const Dataset& ds) { return step_dict(nelson_aalen_pseudo(ds, km_censoring(ds))); },
      py::arg("data"));
  m.def(
      "aalen_johansen", [](const Dataset& ds) { return step_dict(aalen_johansen_marginal_mean(ds)); },
      py::arg("data"));
  m.def(
      "censoring_survival",
      [](const Dataset& ds) {
        const auto gc = km_censoring(ds);
        py::dict d;
        d["time"] = gc.jump_times;
        d["value"] = gc.values;
        return d;
      },
      py::arg("data"));

  m.def("gompertz_cum", &gompertz_cum, py::arg("gamma_k"), py::arg("gamma_l"), py::arg("t"));
  m.def("presets", &preset_names);
  m.def(
      "simulate",
      [](const std::string& scenario_name, std::optional<std::size_t> n, std::optional<std::uint64_t> seed) {
        return simulate_dataset(scenario(scenario_name, n, seed));
      },
      py::arg("scenario"), py::arg("n") = py::none(), py::arg("seed") = py::none(),
      "scenario: a preset name or a .toml config path");

  m.def(
      "mc_study",
      [](const std::string& scenario_name, const std::string& fit_link, std::size_t n, std::size_t reps,
         std::uint64_t seed, unsigned threads) {
        const auto cfg = scenario(scenario_name, std::nullopt, std::nullopt);
        McOptions opts;
        opts.n = n;
        opts.reps = reps;
        opts.seed = seed;
        opts.threads = threads;
        McSummary s;
        {
          py::gil_scoped_release release;
          s = run_mc_study(cfg, LinkFunction::parse(fit_link), opts);
        }
        py::list rows;
        for (const auto& r : s.rows) {
          py::dict d;
          d["param"] = r.name;
          d["truth"] = r.truth;
          d["mean_est"] = r.mean_est;
          d["bias"] = r.bias;
          d["bias_pct"] = r.bias_pct;
          d["sd"] = r.sd ? py::cast(*r.sd) : py::none();
          d["se_fisher"] = r.se_fisher;
          d["se_sandwich"] = r.se_sandwich;
          d["cp_fisher"] = r.cp_fisher;
          d["cp_sandwich"] = r.cp_sandwich;
          d["reps"] = s.reps;
          d["failures"] = s.failures;
          rows.append(d);
        }
        return rows;
      },
      py::arg("scenario"), py::arg("fit_link") = "boxcox:1", py::arg("n") = 200, py::arg("reps") = 100,
      py::arg("seed") = 1, py::arg("threads") = 1);

  m.attr("__version__") = version_string();
}
