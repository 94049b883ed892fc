#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "needle/error.hpp"
#include "needle/expr.hpp"
#include "needle/geometry.hpp"
#include "needle/inequalities.hpp"
#include "needle/needles.hpp"
#include "needle/parallel.hpp"
#include "needle/pipeline.hpp"
#include "needle/transport.hpp"

namespace py = pybind11;
using namespace needle;

namespace {

Point to_point(const std::vector<double>& x) {
  if (x.empty() || x.size() > 3) throw Error(ErrorCode::InvalidParams, "points have 1 to 3 coordinates");
  Point p = Point::Zero();
  for (std::size_t c = 0; c < x.size(); ++c) p[c] = x[c];
  return p;
}

std::vector<double> from_point(const Point& p, int dim) { return std::vector<double>(p.data(), p.data() + dim); }

RunConfig config_from(const std::string& text, const std::string& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return parse_config(j, base_dir);
}

py::dict verdict_dict(const InequalityVerdict& v) {
  py::dict d;
  d["name"] = v.name;
  d["lhs"] = v.lhs;
  d["rhs"] = v.rhs;
  d["pass"] = v.pass;
  d["status"] = v.status;
  d["orientation"] = v.orientation;
  d["values"] = v.values;
  d["tolerances"] = v.tolerances;
  d["needles_checked"] = v.needles.checked;
  d["needles_passed"] = v.needles.passed;
  return d;
}

py::list verdict_list(const std::vector<InequalityVerdict>& vs) {
  py::list out;
  for (const auto& v : vs) out.append(verdict_dict(v));
  return out;
}

std::vector<Atom> make_atoms(const std::vector<std::vector<double>>& pts, const std::vector<double>& mass, int first) {
  if (pts.size() != mass.size()) throw Error(ErrorCode::InvalidParams, "points and masses differ in length");
  std::vector<Atom> out;
  for (std::size_t i = 0; i < pts.size(); ++i) out.push_back({first + static_cast<int>(i), to_point(pts[i]), mass[i]});
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Needle decomposition of convex domains";

  static py::exception<Error> error(m, "NeedleError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error)(py::str(e.what()));
      exc.attr("code") = std::string(error_name(e.code()));
      exc.attr("exit_code") = exit_code(e.code());
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("set_thread_count", &set_thread_count, py::arg("n"));
  m.def("thread_count", &thread_count);

  py::class_<Expr>(m, "Expr")
      .def(py::init(&Expr::parse), py::arg("source"))
      .def("__call__", [](const Expr& e, const std::vector<double>& x) { return e(to_point(x)); })
      .def("gradient",
           [](const Expr& e, const std::vector<double>& x) {
             Point g = Point::Zero();
             const double v = e.eval_grad(to_point(x), &g);
             return py::make_tuple(v, from_point(g, static_cast<int>(x.size())));
           })
      .def_property_readonly("arity", &Expr::arity)
      .def_property_readonly("source", &Expr::source);

  py::class_<WeightedDomain>(m, "Domain")
      .def_property_readonly("dim", [](const WeightedDomain& d) { return d.body.dim(); })
      .def_property_readonly("diameter", [](const WeightedDomain& d) { return diameter(d); })
      .def("contains", [](const WeightedDomain& d, const std::vector<double>& x) { return contains_point(d, to_point(x)); });

  m.def("interval", [](double a, double b) { return make_domain(Polytope::interval(a, b)); });
  m.def("box", [](const std::vector<double>& lo, const std::vector<double>& hi) {
    if (lo.size() != hi.size()) throw Error(ErrorCode::InvalidDomain, "corner dimensions differ");
    return make_domain(Polytope::box(static_cast<int>(lo.size()), to_point(lo), to_point(hi)));
  });
  m.def("polygon", [](const std::vector<std::vector<double>>& vertices) {
    std::vector<Point> pts;
    for (const auto& v : vertices) pts.push_back(to_point(v));
    return make_domain(Polytope::from_vertices(2, pts));
  });
  m.def("regular_polygon", [](int sides, double radius, const std::vector<double>& center) {
    return make_domain(Polytope::regular_polygon(sides, radius, to_point(center)));
  }, py::arg("sides"), py::arg("radius"), py::arg("center") = std::vector<double>{0.0, 0.0});

  m.def(
      "sample",
      [](const WeightedDomain& d, double h, const std::string& strategy, std::uint64_t seed) {
        SamplingStrategy s;
        if (strategy == "grid") s = SamplingStrategy::Grid;
        else if (strategy == "quasirandom") s = SamplingStrategy::Quasirandom;
        else throw Error(ErrorCode::InvalidParams, "unknown sampling strategy " + strategy);
        const DiscreteMeasure mu = sample_measure(d, s, h, seed);
        std::vector<std::vector<double>> pts;
        for (const auto& p : mu.points) pts.push_back(from_point(p, mu.dim));
        return py::make_tuple(pts, mu.weights);
      },
      py::arg("domain"), py::arg("h"), py::arg("strategy") = "grid", py::arg("seed") = 0);

  m.def(
      "solve_transportation",
      [](const std::vector<std::vector<double>>& sources, const std::vector<double>& source_mass,
         const std::vector<std::vector<double>>& sinks, const std::vector<double>& sink_mass) {
        const TransportPlan plan = solve_transportation(make_atoms(sources, source_mass, 0),
                                                        make_atoms(sinks, sink_mass, static_cast<int>(sources.size())));
        py::list flows;
        for (const auto& f : plan.flows)
          flows.append(py::make_tuple(f.source, f.sink - static_cast<int>(sources.size()), f.mass));
        py::dict d;
        d["cost"] = plan.cost;
        d["flows"] = flows;
        d["source_dual"] = plan.source_dual;
        d["sink_dual"] = plan.sink_dual;
        return d;
      },
      py::arg("sources"), py::arg("source_mass"), py::arg("sinks"), py::arg("sink_mass"),
      "Exact W1 transport between two atomic measures of equal mass. Flows are (source, sink, mass).");

  m.def(
      "decompose_json",
      [](const std::string& config, const std::string& base_dir) {
        const RunConfig c = config_from(config, base_dir);
        const DecomposeResult r = run_decompose(c);
        py::dict out;
        out["artifacts"] = decompose_artifacts(c, r);
        out["verdicts"] = verdict_list(decompose_verdicts(c, r));
        out["certified"] = r.certified;
        return out;
      },
      py::arg("config"), py::arg("base_dir") = "");

  m.def(
      "run_json",
      [](const std::string& command, const std::string& config, const std::string& base_dir) {
        const RunConfig c = config_from(config, base_dir);
        if (command == "poincare") return verdict_list(run_poincare(c));
        if (command == "iso") return verdict_list(run_iso(c));
        if (command == "buser") return verdict_list(run_buser(c));
        if (command == "fourfn") return verdict_list(run_fourfn(c));
        if (command == "fmc") return verdict_list(run_fmc(c));
        if (command == "needle1d") return verdict_list(run_needle1d(c));
        throw Error(ErrorCode::InvalidParams, "unknown command " + command);
      },
      py::arg("command"), py::arg("config"), py::arg("base_dir") = "");

  py::class_<Needle>(m, "Needle")
      .def_readonly("a", &Needle::a)
      .def_readonly("b", &Needle::b)
      .def_readonly("kappa", &Needle::kappa)
      .def_readonly("n", &Needle::n_param)
      .def_readonly("closed", &Needle::closed)
      .def_readonly("t", &Needle::t)
      .def_readonly("density", &Needle::density)
      .def("__call__", &Needle::operator());

  m.def(
      "affine_needle",
      [](double kappa, double n, double alpha, double beta, double a, double b) {
        return affine_needle_density({kappa, n, alpha, beta, a, b});
      },
      py::arg("kappa"), py::arg("n"), py::arg("alpha") = 1.0, py::arg("beta") = 0.0, py::arg("a") = 0.0,
      py::arg("b") = 1.0);
  m.def(
      "sampled_needle",
      [](std::vector<double> t, std::vector<double> density) { return sampled_needle(std::move(t), std::move(density)); },
      py::arg("t"), py::arg("density"));
  m.def("tabulate", &tabulate, py::arg("needle"), py::arg("points") = 2001);
  m.def("equality_residual", &equality_residual, py::arg("needle"), py::arg("points") = 200);
  m.def(
      "check_cd",
      [](const Needle& nd, double kappa, double n, double tol, double margin) {
        const CDReport r = check_cd(nd, kappa, n, tol, margin);
        py::dict d;
        d["pass"] = r.pass;
        d["min_residual"] = r.min_residual;
        d["worst_t"] = r.worst_t;
        d["evaluated"] = r.evaluated;
        return d;
      },
      py::arg("needle"), py::arg("kappa"), py::arg("n"), py::arg("tol"), py::arg("margin") = 0.0);
  m.def("spectral_gap", &spectral_gap_1d, py::arg("needle"), py::arg("cells") = 2000);
  m.def(
      "lambda_knd", [](double kappa, double n, double D) { return lambda_knd(kappa, n, D); }, py::arg("kappa"),
      py::arg("n"), py::arg("D"));
  m.def(
      "iso_profile",
      [](double kappa, double n, double D, double t, double eps) { return iso_profile(kappa, n, D, t, eps); },
      py::arg("kappa"), py::arg("n"), py::arg("D"), py::arg("t"), py::arg("eps"));
  m.def(
      "needle_transform",
      [](const std::vector<double>& t, const std::vector<double>& f, double kappa, double n,
         const std::vector<double>& s) { return needle_transform(t, f, kappa, n, s); },
      py::arg("t"), py::arg("f"), py::arg("kappa"), py::arg("n"), py::arg("s"));

  m.def(
      "poincare",
      [](const WeightedDomain& d, const Expr& f, double h) {
        PoincareOptions opt;
        opt.h = h;
        return verdict_dict(poincare_check(d, f, opt));
      },
      py::arg("domain"), py::arg("f"), py::arg("h") = 0.01);
  m.def(
      "four_functions",
      [](const WeightedDomain& d, const Expr& f1, const Expr& f2, const Expr& f3, const Expr& f4, double alpha,
         double beta, double h) {
        FourFunctionsOptions opt;
        opt.h = h;
        return verdict_dict(four_functions_check(d, f1, f2, f3, f4, alpha, beta, opt));
      },
      py::arg("domain"), py::arg("f1"), py::arg("f2"), py::arg("f3"), py::arg("f4"), py::arg("alpha"),
      py::arg("beta"), py::arg("h") = 0.025);
  m.def(
      "fmc_sweep",
      [](int dim, long admissible, std::uint64_t seed) {
        const FeldmanMcCannSweep s = feldman_mccann_sweep(dim, admissible, seed);
        py::dict d;
        d["dim"] = s.dim;
        d["draws"] = s.draws;
        d["admissible"] = s.admissible;
        d["violations"] = s.violations;
        d["max_ratio"] = s.max_ratio;
        return d;
      },
      py::arg("dim"), py::arg("admissible"), py::arg("seed") = 0);

  m.attr("inf") = kInf;
}
