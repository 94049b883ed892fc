#include "needle/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "needle/error.hpp"
#include "needle/format.hpp"
#include "needle/parallel.hpp"
#include "needle/spatial.hpp"

namespace needle {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

double number(const json& j, const std::string& what) {
  if (!j.is_number()) bad(what + " must be a number");
  return j.get<double>();
}

// N may be a number or the string "inf".
double n_value(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "Infinity") return kInf;
    bad("N must be a number or \"inf\"");
  }
  return number(j, "N");
}

Point point(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || j.size() > 3) bad(what + " must be an array of 1 to 3 numbers");
  Point p = Point::Zero();
  for (std::size_t k = 0; k < j.size(); ++k) p[k] = number(j[k], what);
  return p;
}

std::vector<Point> points(const json& j, const std::string& what) {
  if (!j.is_array()) bad(what + " must be an array of points");
  std::vector<Point> out;
  for (const auto& v : j) out.push_back(point(v, what));
  return out;
}

Polytope parse_body(const json& j) {
  if (!j.is_object() || !j.contains("type")) bad("domain needs a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  if (type == "interval") return Polytope::interval(number(j.at("a"), "a"), number(j.at("b"), "b"));
  if (type == "box") {
    const int dim = static_cast<int>(j.at("lo").size());
    if (j.at("hi").size() != j.at("lo").size()) bad("box lo and hi differ in length");
    return Polytope::box(dim, point(j.at("lo"), "lo"), point(j.at("hi"), "hi"));
  }
  if (type == "polygon") return Polytope::from_vertices(2, points(j.at("vertices"), "vertices"));
  if (type == "polytope")
    return Polytope::from_vertices(static_cast<int>(number(j.at("dim"), "dim")), points(j.at("vertices"), "vertices"));
  if (type == "halfspaces") {
    std::vector<HalfSpace> hs;
    for (const auto& h : j.at("halfspaces")) hs.push_back({point(h.at("normal"), "normal"), number(h.at("offset"), "offset")});
    return Polytope::from_halfspaces(static_cast<int>(number(j.at("dim"), "dim")), hs);
  }
  if (type == "regular_polygon")
    return Polytope::regular_polygon(static_cast<int>(number(j.at("sides"), "sides")), number(j.at("radius"), "radius"),
                                     j.contains("center") ? point(j.at("center"), "center") : Point::Zero(),
                                     j.value("phase", 0.0));
  bad("unknown domain type \"" + type + "\"");
}

WeightSpec parse_weight(const json& j) {
  const double c = j.value("c", 0.0);
  Point b = j.contains("b") ? point(j.at("b"), "weight b") : Point::Zero();
  if (j.contains("Q")) {
    const auto& q = j.at("Q");
    if (!q.is_array() || q.empty() || q.size() > 3) bad("weight Q must be a square array");
    Matrix3 Q = Matrix3::Zero();
    for (std::size_t r = 0; r < q.size(); ++r) {
      if (q[r].size() != q.size()) bad("weight Q must be square");
      for (std::size_t k = 0; k < q.size(); ++k) Q(r, k) = number(q[r][k], "weight Q");
    }
    return WeightSpec::quadratic(Q, b, c);
  }
  if (j.contains("b")) return WeightSpec::linear(b, c);
  return WeightSpec::constant(c);
}

std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) bad("empty CSV " + path.string());
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      out.push_back(cell);
    }
    return out;
  };
  const auto header = split(line);
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) bad("column \"" + column + "\" not in " + path.string());
  const std::size_t col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> values;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    double v = 0.0;
    if (col >= cells.size()) bad("row " + std::to_string(row) + " of " + path.string() + " is short");
    const auto& s = cells[col];
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      bad("row " + std::to_string(row) + " of " + path.string() + " is not a number");
    values.push_back(v);
  }
  return values;
}

Expr parse_expr(const json& j, int dim, const std::string& what) {
  if (!j.is_string()) bad(what + " must be an expression string");
  Expr e = Expr::parse(j.get<std::string>());
  if (e.arity() > dim) bad(what + " uses x" + std::to_string(e.arity()) + " in dimension " + std::to_string(dim));
  return e;
}

const std::set<std::string> kTopKeys = {
    "domain", "weight", "kappa", "N", "f", "h", "seed", "sampling", "tolerances", "density", "min_needle_members",
    "set", "eps", "functions", "alpha", "beta", "c_floor", "radius", "monte_carlo", "mc_samples",
    "needle_certificates", "trials", "dims", "needle", "t", "D"};

RunConfig parse_config_impl(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) bad("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kTopKeys.count(key)) bad("unknown config key \"" + key + "\"");
  RunConfig c;
  if (j.contains("domain")) {
    const Polytope body = parse_body(j.at("domain"));
    const WeightSpec rho = j.contains("weight") ? parse_weight(j.at("weight")) : WeightSpec{};
    c.domain = make_domain(body, rho, j.value("kappa", 0.0), j.contains("N") ? n_value(j.at("N")) : kInf);
  }
  const int dim = c.domain.body.dim() > 0 ? c.domain.body.dim() : 3;
  c.h = j.value("h", c.h);
  if (!(c.h > 0)) bad("h must be positive");
  c.seed = j.value("seed", c.seed);
  const std::string sampling = j.value("sampling", std::string("grid"));
  if (sampling == "grid")
    c.sampling = SamplingStrategy::Grid;
  else if (sampling == "quasirandom")
    c.sampling = SamplingStrategy::Quasirandom;
  else
    bad("sampling must be \"grid\" or \"quasirandom\"");

  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    const std::map<std::string, double*> slots = {
        {"tau", &c.tol.tau},     {"gap", &c.tol.gap},   {"lipschitz", &c.tol.lipschitz}, {"ledger", &c.tol.ledger},
        {"cd", &c.tol.cd},       {"zero", &c.tol.zero}, {"r2", &c.tol.r2},               {"inequality", &c.tol.inequality}};
    for (const auto& [key, value] : t.items()) {
      const auto it = slots.find(key);
      if (it == slots.end()) bad("unknown tolerance \"" + key + "\"");
      *it->second = number(value, "tolerance " + key);
      if (!(*it->second > 0)) bad("tolerance " + key + " must be positive");
    }
  }
  if (j.contains("density")) {
    const auto& d = j.at("density");
    c.density.bandwidth = d.value("bandwidth", 0.0);
    c.density.transverse = d.value("transverse", 0.0);
    c.density.grid_step = d.value("grid_step", 0.0);
  }
  c.min_needle_members = std::max(8, j.value("min_needle_members", 8));

  if (j.contains("f")) {
    const auto& f = j.at("f");
    if (f.is_string()) {
      c.f = parse_expr(f, dim, "f");
      c.f_label = c.f.source();
    } else if (f.is_object() && f.contains("csv")) {
      std::filesystem::path p = f.at("csv").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      const std::string column = f.value("column", std::string("f"));
      c.f_values = read_csv_column(p, column);
      c.f_label = p.filename().string() + ":" + column;
    } else {
      bad("f must be an expression or {\"csv\": path, \"column\": name}");
    }
  }
  if (j.contains("set")) c.set = parse_set(j.at("set"), dim);
  c.eps = j.value("eps", c.eps);
  if (!(c.eps >= 0)) bad("eps must be nonnegative");
  if (j.contains("functions")) {
    const auto& fs = j.at("functions");
    if (!fs.is_array() || fs.size() != 4) bad("functions must list four expressions");
    for (std::size_t k = 0; k < 4; ++k) c.functions.push_back(parse_expr(fs[k], dim, "functions[" + std::to_string(k) + "]"));
  }
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.c_floor = j.value("c_floor", c.c_floor);
  c.radius = j.value("radius", c.radius);
  c.monte_carlo = j.value("monte_carlo", c.monte_carlo);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.needle_certificates = j.value("needle_certificates", c.needle_certificates);
  c.trials = j.value("trials", c.trials);
  if (c.trials <= 0) bad("trials must be positive");
  if (j.contains("dims")) {
    c.fmc_dims = j.at("dims").get<std::vector<int>>();
    for (int d : c.fmc_dims)
      if (d != 2 && d != 3) bad("dims must be 2 or 3");
  }
  if (j.contains("needle")) {
    const auto& n = j.at("needle");
    c.has_needle = true;
    c.needle.kappa = n.value("kappa", 0.0);
    c.needle.n_param = n.contains("N") ? n_value(n.at("N")) : kInf;
    c.needle.alpha = n.value("alpha", 1.0);
    c.needle.beta = n.value("beta", 0.0);
    auto bound = [&](const char* key, double dflt) {
      if (!n.contains(key)) return dflt;
      if (n.at(key).is_string()) {
        const auto s = n.at(key).get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        bad(std::string("needle ") + key + " must be a number or \"inf\"");
      }
      return number(n.at(key), key);
    };
    c.needle.a = bound("a", 0.0);
    c.needle.b = bound("b", 1.0);
  }
  c.t = j.value("t", c.t);
  if (j.contains("D")) c.D = n_value(j.at("D"));
  return c;
}

const DiscreteMeasure& measure_of(const DecomposeResult& r) { return r.data.measure; }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json n_json(double n) { return std::isinf(n) ? json(n > 0 ? "inf" : "-inf") : json(n); }

json point_json(const Point& p, int dim) {
  json a = json::array();
  for (int k = 0; k < dim; ++k) a.push_back(p[k]);
  return a;
}

// Recentered f at an arbitrary point: the expression when there is one,
// otherwise the value of the nearest sample.
std::function<double(const Point&)> point_function(const RunConfig& config, const DecomposeResult& r,
                                                    const GridIndex& index) {
  if (config.f_values.empty()) {
    const double shift = r.data.mean_removed;
    return [&config, shift](const Point& x) { return config.f(x) - shift; };
  }
  const double h = measure_of(r).spacing > 0 ? measure_of(r).spacing : config.h;
  return [&r, &index, h](const Point& x) {
    const auto& pts = measure_of(r).points;
    for (double rad : {h, 3 * h, 10 * h}) {
      int best = -1;
      double bd = kInf;
      for (int i : index.within(x, rad)) {
        const double d = dist(x, pts[i]);
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      if (best >= 0) return r.data.f_values[best];
    }
    return 0.0;
  };
}

InequalityVerdict verdict(const std::string& name, double lhs, double rhs, bool le) {
  InequalityVerdict v;
  v.name = name;
  v.lhs = lhs;
  v.rhs = rhs;
  v.orientation = le ? "lhs<=rhs" : "lhs>=rhs";
  v.pass = le ? lhs <= rhs : lhs >= rhs;
  v.status = v.pass ? "pass" : "fail";
  return v;
}

}  // namespace

SetSpec parse_set(const json& j, int dim) {
  (void)dim;
  if (!j.is_object() || !j.contains("type")) bad("set needs a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  if (type == "empty") return SetSpec::empty();
  if (type == "half_space") return SetSpec::half_space(point(j.at("normal"), "normal"), number(j.at("offset"), "offset"));
  if (type == "box") return SetSpec::box(point(j.at("lo"), "lo"), point(j.at("hi"), "hi"));
  if (type == "ball") return SetSpec::ball(point(j.at("center"), "center"), number(j.at("radius"), "radius"));
  bad("unknown set type \"" + type + "\"");
}

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  try {
    return parse_config_impl(j, base_dir);
  } catch (const json::exception& e) {
    bad(e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    bad(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

DecomposeResult run_decompose(const RunConfig& config) {
  if (config.domain.body.dim() == 0) bad("decompose needs a domain");
  if (config.f.empty() && config.f_values.empty()) bad("decompose needs f");
  DecomposeResult r;
  DiscreteMeasure m = sample_measure(config.domain, config.sampling, config.h, config.seed);
  if (!config.f_values.empty()) {
    if (config.f_values.size() != m.size())
      bad("f column has " + std::to_string(config.f_values.size()) + " rows for " + std::to_string(m.size()) +
          " samples");
    r.data = make_signed_data(std::move(m), config.f_values);
  } else {
    r.data = make_signed_data(std::move(m), config.f);
  }
  const SplitAtoms atoms = split_signed(r.data);
  r.plan = solve_transportation(atoms.sources, atoms.sinks);
  r.potential = recover_potential(r.plan, r.data);
  FoliationOptions fo;
  fo.tau = config.tau();
  r.foliation = foliate(r.potential, r.data.measure, config.domain, fo, &r.plan);

  const MassLedger& L = r.foliation.ledger;
  r.ledger_error = std::abs(L.ray_total + L.residual_mass - L.total_mass);
  r.certified = r.ledger_error <= config.tol.ledger && r.potential.gap <= config.tol.gap * r.plan.cost &&
                r.potential.lipschitz_violation <= config.tol.lipschitz;
  r.ricci = certify_ricci_bound(config.domain);
  r.polynomial_law = config.domain.dim() == 2 && config.domain.rho.is_constant();

  std::vector<int> ids;
  for (std::size_t i = 0; i < r.foliation.rays.size(); ++i)
    if (static_cast<int>(r.foliation.rays[i].members.size()) >= config.min_needle_members)
      ids.push_back(static_cast<int>(i));
  const DensityEstimator est(r.foliation, r.data.measure, config.domain, config.density);
  const double bw = config.density.bandwidth > 0 ? config.density.bandwidth : 8.0 * config.h;
  const GridIndex index(r.data.measure.points, config.h);
  const auto f_at = point_function(config, r, index);
  r.needles.resize(ids.size());
  parallel_for(ids.size(), [&](std::size_t k) {
    NeedleCheck& nc = r.needles[k];
    nc.ray_id = r.foliation.rays[ids[k]].id;
    nc.needle = est.estimate(ids[k]);
    nc.cd = check_cd(nc.needle, config.domain.kappa, config.domain.n_param, config.cd_tol(), 1.5 * bw);
    nc.zero_residual = check_zero_integral(nc.needle, r.foliation.rays[ids[k]], f_at);
    if (r.polynomial_law) nc.r2 = polynomial_fit(nc.needle.t, nc.needle.density, 1, 1e-2).r2;
  });
  return r;
}

std::string rays_json(const FoliationResult& fol) {
  json out = json::array();
  for (const auto& ray : fol.rays) {
    out.push_back({{"id", ray.id},
                   {"base", point_json(ray.base, 3)},
                   {"direction", point_json(ray.direction, 3)},
                   {"t_min", ray.t_min},
                   {"t_max", ray.t_max},
                   {"alpha", ray.alpha},
                   {"beta", ray.beta},
                   {"mass", ray.mass},
                   {"member_count", ray.members.size()}});
  }
  return dump(out);
}

std::string needles_csv(const std::vector<NeedleCheck>& needles) {
  std::string out = "ray_id,t,density\n";
  for (const auto& nc : needles)
    for (std::size_t k = 0; k < nc.needle.t.size(); ++k) {
      out += std::to_string(nc.ray_id);
      out += ',';
      out += fmt_num(nc.needle.t[k]);
      out += ',';
      out += fmt_num(nc.needle.density[k]);
      out += '\n';
    }
  return out;
}

std::string cd_report_csv(const std::vector<NeedleCheck>& needles) {
  std::string out = "ray_id,pass,min_residual,worst_t\n";
  for (const auto& nc : needles) {
    out += std::to_string(nc.ray_id);
    out += nc.cd.pass ? ",1," : ",0,";
    out += fmt_num(nc.cd.min_residual);
    out += ',';
    out += fmt_num(nc.cd.worst_t);
    out += '\n';
  }
  return out;
}

std::string summary_json(const RunConfig& config, const DecomposeResult& r) {
  const MassLedger& L = r.foliation.ledger;
  const auto& m = measure_of(r);
  int cd_pass = 0, zero_pass = 0, r2_pass = 0;
  double zero_max = 0.0, r2_min = 1.0;
  for (const auto& nc : r.needles) {
    cd_pass += nc.cd.pass;
    zero_pass += nc.zero_residual <= config.tol.zero;
    zero_max = std::max(zero_max, nc.zero_residual);
    r2_pass += nc.r2 >= config.tol.r2;
    r2_min = std::min(r2_min, nc.r2);
  }
  json needles = {{"emitted", r.needles.size()},
                  {"cd_tol", config.cd_tol()},
                  {"cd_pass", cd_pass},
                  {"zero_integral_max", zero_max},
                  {"zero_integral_pass", zero_pass}};
  if (r.polynomial_law) {
    needles["r2_min"] = r2_min;
    needles["r2_pass"] = r2_pass;
  }
  json j = {
      {"dim", config.domain.dim()},
      {"samples", m.size()},
      {"h", config.h},
      {"seed", config.seed},
      {"sampling", config.sampling == SamplingStrategy::Grid ? "grid" : "quasirandom"},
      {"f", config.f_label},
      {"mass",
       {{"total", L.total_mass},
        {"rays", L.ray_total},
        {"residual", L.residual_mass},
        {"residual_fraction", L.total_mass > 0 ? L.residual_mass / L.total_mass : 0.0},
        {"ledger_error", r.ledger_error}}},
      {"transport",
       {{"cost", r.plan.cost},
        {"objective", r.potential.objective},
        {"duality_gap", r.potential.gap},
        {"lipschitz_violation", r.potential.lipschitz_violation},
        {"tightness_violation", r.potential.tightness_violation},
        {"mean_removed", r.data.mean_removed},
        {"flows", r.plan.flows.size()},
        {"arcs", r.plan.arcs},
        {"rounds", r.plan.rounds}}},
      {"foliation",
       {{"tau", r.foliation.tau},
        {"rays", r.foliation.rays.size()},
        {"strain_points", r.foliation.strain.size()},
        {"residual_points", r.foliation.residual.size()}}},
      {"needles", needles},
      {"ricci",
       {{"kappa", config.domain.kappa},
        {"N", n_json(config.domain.n_param)},
        {"holds", r.ricci.holds},
        {"infimum", finite_or_null(r.ricci.infimum)},
        {"margin", finite_or_null(r.ricci.margin)}}},
      {"certificates",
       {{"ledger", r.ledger_error <= config.tol.ledger},
        {"duality_gap", r.potential.gap <= config.tol.gap * r.plan.cost},
        {"lipschitz", r.potential.lipschitz_violation <= config.tol.lipschitz},
        {"all", r.certified}}},
  };
  return dump(j);
}

std::string foliation_svg(const WeightedDomain& domain, const DiscreteMeasure& measure, const FoliationResult& fol) {
  const Point lo = domain.body.lower(), hi = domain.body.upper();
  const double ext = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  const double scale = 600.0 / (ext > 0 ? ext : 1.0);
  const double pad = 10.0;
  char buf[160];
  auto X = [&](const Point& p) { return pad + (p.x() - lo.x()) * scale; };
  auto Y = [&](const Point& p) { return pad + (hi.y() - p.y()) * scale; };
  std::string out;
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                2 * pad + (hi.x() - lo.x()) * scale, 2 * pad + (hi.y() - lo.y()) * scale);
  out += buf;
  std::vector<Point> v = domain.body.vertices();
  const Point c = domain.body.centroid();
  std::sort(v.begin(), v.end(), [&](const Point& a, const Point& b) {
    return std::atan2(a.y() - c.y(), a.x() - c.x()) < std::atan2(b.y() - c.y(), b.x() - c.x());
  });
  out += "<polygon fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
  for (const auto& p : v) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(p), Y(p));
    out += buf;
  }
  out += "\"/>\n<g stroke=\"#1f77b4\" stroke-width=\"0.8\">\n";
  for (const auto& ray : fol.rays) {
    const Point a = ray.at(ray.t_min), b = ray.at(ray.t_max);
    std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\"/>\n", X(a), Y(a), X(b), Y(b));
    out += buf;
  }
  out += "</g>\n<g fill=\"#d62728\">\n";
  for (int i : fol.strain) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"0.7\"/>\n", X(measure.points[i]),
                  Y(measure.points[i]));
    out += buf;
  }
  out += "</g>\n</svg>\n";
  return out;
}

Artifacts decompose_artifacts(const RunConfig& config, const DecomposeResult& r) {
  Artifacts a;
  a["rays.json"] = rays_json(r.foliation);
  a["needles.csv"] = needles_csv(r.needles);
  a["cd_report.csv"] = cd_report_csv(r.needles);
  a["summary.json"] = summary_json(config, r);
  a["plan.csv"] = plan_csv(r.plan);
  if (config.domain.dim() == 2) a["foliation.svg"] = foliation_svg(config.domain, measure_of(r), r.foliation);
  return a;
}

std::vector<InequalityVerdict> decompose_verdicts(const RunConfig& config, const DecomposeResult& r) {
  std::vector<InequalityVerdict> out;
  auto ledger = verdict("mass_ledger", r.ledger_error, config.tol.ledger, true);
  ledger.tolerances["absolute"] = config.tol.ledger;
  ledger.values = {{"total", r.foliation.ledger.total_mass},
                   {"rays", r.foliation.ledger.ray_total},
                   {"residual", r.foliation.ledger.residual_mass}};
  out.push_back(ledger);

  auto gap = verdict("duality_gap", r.potential.gap, config.tol.gap * r.plan.cost, true);
  gap.tolerances["relative"] = config.tol.gap;
  gap.values = {{"cost", r.plan.cost}, {"objective", r.potential.objective}};
  out.push_back(gap);

  auto lip = verdict("lipschitz", r.potential.lipschitz_violation, config.tol.lipschitz, true);
  lip.tolerances["absolute"] = config.tol.lipschitz;
  out.push_back(lip);

  int cd_pass = 0, zero_pass = 0, r2_pass = 0;
  double cd_worst = kInf, zero_max = 0.0, r2_min = 1.0;
  for (const auto& nc : r.needles) {
    cd_pass += nc.cd.pass;
    cd_worst = std::min(cd_worst, nc.cd.min_residual);
    zero_pass += nc.zero_residual <= config.tol.zero;
    zero_max = std::max(zero_max, nc.zero_residual);
    r2_pass += nc.r2 >= config.tol.r2;
    r2_min = std::min(r2_min, nc.r2);
  }
  const int n = static_cast<int>(r.needles.size());

  auto cd = verdict("cd_needles", cd_pass, n, false);
  cd.tolerances["cd"] = config.cd_tol();
  cd.values = {{"kappa", config.domain.kappa}, {"N", config.domain.n_param}, {"ricci_infimum", r.ricci.infimum}};
  cd.needles = {n, cd_pass, std::isfinite(cd_worst) ? cd_worst : 0.0};
  if (!r.ricci.holds) cd.status = "uncertified";
  out.push_back(cd);

  auto zero = verdict("zero_integral", zero_max, config.tol.zero, true);
  zero.tolerances["absolute"] = config.tol.zero;
  zero.needles = {n, zero_pass, zero_max};
  out.push_back(zero);

  if (r.polynomial_law) {
    auto poly = verdict("density_polynomial", r2_min, config.tol.r2, false);
    poly.tolerances["r2"] = config.tol.r2;
    poly.values = {{"degree", 1}};
    poly.needles = {n, r2_pass, r2_min};
    out.push_back(poly);
  }
  return out;
}

std::vector<InequalityVerdict> run_poincare(const RunConfig& config) {
  if (config.f.empty()) bad("poincare needs f as an expression");
  PoincareOptions opt;
  opt.h = config.h;
  opt.tol = config.tol.inequality;
  opt.needles = config.needle_certificates;
  return {poincare_check(config.domain, config.f, opt)};
}

std::vector<InequalityVerdict> run_iso(const RunConfig& config) {
  IsoOptions opt;
  opt.tol = config.tol.inequality;
  opt.mass.monte_carlo = config.monte_carlo;
  opt.mass.samples = config.mc_samples;
  opt.mass.seed = config.seed;
  return {isoperimetric_check(config.domain, config.set, config.eps, opt)};
}

std::vector<InequalityVerdict> run_buser(const RunConfig& config) {
  if (config.f.empty()) bad("buser needs f as an expression");
  BuserOptions opt;
  opt.h = config.h;
  opt.c_floor = config.c_floor;
  opt.radius = config.radius;
  opt.mass.monte_carlo = config.monte_carlo;
  opt.mass.samples = config.mc_samples;
  opt.mass.seed = config.seed;
  return {buser_milman_check(config.domain, config.set, config.eps, config.f, opt)};
}

std::vector<InequalityVerdict> run_fourfn(const RunConfig& config) {
  if (config.functions.size() != 4) bad("fourfn needs four functions");
  FourFunctionsOptions opt;
  opt.h = config.h;
  opt.density = config.density;
  const auto& f = config.functions;
  return {four_functions_check(config.domain, f[0], f[1], f[2], f[3], config.alpha, config.beta, opt)};
}

FeldmanMcCannSweep feldman_mccann_sweep(int dim, long admissible, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_real_distribution<double> S(0.01, 1.0);
  auto draw = [&] { return Point(U(rng), U(rng), dim == 3 ? U(rng) : 0.0); };
  FeldmanMcCannSweep out;
  out.dim = dim;
  const long cap = 1000 * admissible;
  while (out.admissible < admissible && out.draws < cap) {
    ++out.draws;
    FeldmanMcCannConfig c;
    c.sigma = S(rng);
    const Point a = draw(), b = draw();
    Point e = draw(), f = draw();
    if (e.norm() < 1e-3 || f.norm() < 1e-3) continue;
    e.normalize();
    f.normalize();
    for (int i = 0; i < 3; ++i) {
      c.x[i] = a + c.sigma * i * e;
      c.y[i] = b + c.sigma * i * f;
    }
    const auto r = feldman_mccann_check(c);
    if (!r.admissible) continue;
    ++out.admissible;
    out.max_ratio = std::max(out.max_ratio, r.ratio);
    if (!(r.ratio <= 10.0)) ++out.violations;
  }
  return out;
}

std::vector<InequalityVerdict> run_fmc(const RunConfig& config) {
  std::vector<InequalityVerdict> out;
  for (int dim : config.fmc_dims) {
    const auto s = feldman_mccann_sweep(dim, config.trials, config.seed + static_cast<std::uint64_t>(dim));
    auto v = verdict("feldman_mccann_d" + std::to_string(dim), s.max_ratio, 10.0, true);
    v.pass = v.pass && s.violations == 0 && s.admissible == config.trials;
    v.status = v.pass ? "pass" : "fail";
    v.values = {{"draws", static_cast<double>(s.draws)},
                {"admissible", static_cast<double>(s.admissible)},
                {"violations", static_cast<double>(s.violations)}};
    out.push_back(v);
  }
  return out;
}

std::vector<InequalityVerdict> run_needle1d(const RunConfig& config, Needle* tabulated) {
  if (!config.has_needle) bad("needle1d needs a \"needle\" block");
  const AffineNeedleSpec& s = config.needle;
  const Needle n = affine_needle_density(s);
  const Needle tab = tabulate(n);
  if (tabulated) *tabulated = tab;
  std::vector<InequalityVerdict> out;

  auto eq = verdict("affine_equality", equality_residual(n), 1e-8, true);
  eq.tolerances["absolute"] = 1e-8;
  eq.values = {{"kappa", s.kappa}, {"N", s.n_param}, {"alpha", s.alpha}, {"beta", s.beta}};
  out.push_back(eq);

  // Closed forms are exact, so the default tolerance is the equality one.
  const double cd_tol = config.tol.cd > 0 ? config.tol.cd : 1e-8;
  const CDReport cd = check_cd(n, s.kappa, s.n_param, cd_tol);
  auto cdv = verdict("cd", cd.min_residual, -cd_tol, false);
  cdv.tolerances["cd"] = cd_tol;
  cdv.values = {{"worst_t", cd.worst_t}, {"evaluated", cd.evaluated}};
  out.push_back(cdv);

  const double gap = spectral_gap_1d(tab);
  const double length = tab.b - tab.a;
  const double D = std::isfinite(config.D) ? config.D : length;
  const double lam = lambda_knd(s.kappa, s.n_param, D);
  auto gv = verdict("spectral_gap", gap, lam * (1 - config.tol.inequality), false);
  gv.tolerances["relative"] = config.tol.inequality;
  gv.values = {{"gap", gap}, {"lambda_knd", lam}, {"D", D}, {"length", length}};
  out.push_back(gv);

  const double I = iso_profile(s.kappa, s.n_param, D, config.t, config.eps);
  auto iv = verdict("iso_profile", I, config.t, false);
  iv.status = "report";
  iv.values = {{"t", config.t}, {"eps", config.eps}, {"D", D}, {"profile", I}};
  out.push_back(iv);
  return out;
}

void write_artifacts(const std::filesystem::path& dir, const Artifacts& files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> temps;
  auto cleanup = [&] {
    for (const auto& t : temps) std::filesystem::remove(t, ec);
  };
  for (const auto& [name, content] : files) {
    const auto tmp = dir / ("." + name + ".tmp");
    temps.push_back(tmp);
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) {
      cleanup();
      throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
  }
  std::size_t k = 0;
  for (const auto& [name, content] : files) {
    std::filesystem::rename(temps[k++], dir / name, ec);
    if (ec) {
      cleanup();
      throw Error(ErrorCode::IoError, "cannot rename into " + (dir / name).string() + ": " + ec.message());
    }
  }
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySample:
    case ErrorCode::DegenerateInstance:
    case ErrorCode::NumericalFailure:
    case ErrorCode::TooFewSamples:
    case ErrorCode::NonpositiveDensity:
      return 2;
    case ErrorCode::CertificateFailure:
    case ErrorCode::HypothesisViolated:
      return 3;
    default:
      return 1;
  }
}

}  // namespace needle
