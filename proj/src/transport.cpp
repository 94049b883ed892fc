#include "needle/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "needle/error.hpp"
#include "needle/format.hpp"
#include "needle/network_simplex.hpp"
#include "needle/parallel.hpp"
#include "needle/spatial.hpp"

namespace needle {

SignedData make_signed_data(DiscreteMeasure measure, std::vector<double> f_raw) {
  if (f_raw.size() != measure.size())
    throw Error(ErrorCode::InvalidParams, "f has " + std::to_string(f_raw.size()) + " values for " +
                                              std::to_string(measure.size()) + " samples");
  double fw = 0.0;
  double w = 0.0;
  for (std::size_t i = 0; i < f_raw.size(); ++i) {
    if (!std::isfinite(f_raw[i])) throw Error(ErrorCode::InvalidParams, "f is not finite at sample " + std::to_string(i));
    fw += f_raw[i] * measure.weights[i];
    w += measure.weights[i];
  }
  const double mean = fw / w;
  double fmax = 0.0;
  for (double& v : f_raw) {
    v -= mean;
    fmax = std::max(fmax, std::abs(v));
  }
  // Values at rounding level of the recentering are treated as exact zeros.
  double scale = std::abs(mean);
  for (double v : f_raw) scale = std::max(scale, std::abs(v + mean));
  for (double& v : f_raw)
    if (std::abs(v) <= 1e-12 * scale) v = 0.0;
  SignedData d;
  d.measure = std::move(measure);
  d.f_values = std::move(f_raw);
  d.mean_removed = mean;
  double bal = 0.0;
  for (std::size_t i = 0; i < d.f_values.size(); ++i) bal += d.f_values[i] * d.measure.weights[i];
  d.balance = std::abs(bal);
  return d;
}

SignedData make_signed_data(DiscreteMeasure measure, const Expr& f) {
  std::vector<double> v(measure.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(measure.points[i]);
  return make_signed_data(std::move(measure), std::move(v));
}

SplitAtoms split_signed(const SignedData& data) {
  SplitAtoms s;
  double abs_total = 0.0;
  for (std::size_t i = 0; i < data.f_values.size(); ++i) {
    const double m = data.f_values[i] * data.measure.weights[i];
    abs_total += std::abs(m);
    if (m > 0)
      s.sources.push_back({static_cast<int>(i), data.measure.points[i], m});
    else if (m < 0)
      s.sinks.push_back({static_cast<int>(i), data.measure.points[i], -m});
  }
  if (s.sources.empty() || s.sinks.empty())
    throw Error(ErrorCode::DegenerateInstance, "f vanishes after recentering");
  if (data.balance > 1e-9 * abs_total)
    throw Error(ErrorCode::DegenerateInstance, "f is not balanced after recentering");
  double a = 0.0;
  double b = 0.0;
  for (const auto& x : s.sources) a += x.mass;
  for (const auto& x : s.sinks) b += x.mass;
  const double r = a / b;
  for (auto& x : s.sinks) x.mass *= r;
  // Absorb the last rounding residue into the largest sink.
  b = 0.0;
  for (const auto& x : s.sinks) b += x.mass;
  auto big = std::max_element(s.sinks.begin(), s.sinks.end(),
                              [](const Atom& p, const Atom& q) { return p.mass < q.mass; });
  big->mass += a - b;
  return s;
}

namespace {

double length_scale(const std::vector<Atom>& s, const std::vector<Atom>& t) {
  Point lo = Point::Constant(kInf);
  Point hi = Point::Constant(-kInf);
  for (const auto* set : {&s, &t})
    for (const auto& a : *set) {
      lo = lo.cwiseMin(a.point);
      hi = hi.cwiseMax(a.point);
    }
  return std::max(1.0, (hi - lo).norm());
}

// Indices of the k points of `to` closest to `from`, ties broken by index.
std::vector<int> nearest(const Point& from, const std::vector<Atom>& to, int k, std::vector<std::pair<double, int>>& buf) {
  buf.clear();
  for (std::size_t j = 0; j < to.size(); ++j) buf.emplace_back((to[j].point - from).squaredNorm(), static_cast<int>(j));
  const std::size_t kk = std::min<std::size_t>(k, buf.size());
  std::partial_sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kk), buf.end());
  std::vector<int> out;
  for (std::size_t q = 0; q < kk; ++q) out.push_back(buf[q].second);
  return out;
}

// Candidate arcs from a solve on aggregated atoms: every coarse flow I -> J
// proposes all fine pairs between the members of I and of J.
std::vector<std::pair<int, int>> coarse_arcs(const std::vector<Atom>& sources, const std::vector<Atom>& sinks,
                                             const SolverOptions& options) {
  Point lo = Point::Constant(kInf);
  Point hi = Point::Constant(-kInf);
  for (const auto* set : {&sources, &sinks})
    for (const auto& a : *set) {
      lo = lo.cwiseMin(a.point);
      hi = hi.cwiseMax(a.point);
    }
  const Point ext = hi - lo;
  int dim = 0;
  double vol = 1.0;
  for (int k = 0; k < 3; ++k)
    if (ext[k] > 0) {
      ++dim;
      vol *= ext[k];
    }
  const double n = static_cast<double>(sources.size() + sinks.size());
  const double cell = 2.0 * std::pow(vol / n, 1.0 / std::max(dim, 1));
  auto key_of = [&](const Point& p) {
    std::uint64_t key = 0;
    for (int k = 0; k < 3; ++k) {
      const auto c = static_cast<std::uint64_t>(std::floor((p[k] - lo[k]) / cell));
      key = key * 1000003ULL + c;
    }
    return key;
  };
  auto aggregate = [&](const std::vector<Atom>& fine, std::vector<Atom>& coarse, std::vector<std::vector<int>>& members) {
    std::vector<std::pair<std::uint64_t, int>> keyed;
    for (std::size_t i = 0; i < fine.size(); ++i) keyed.emplace_back(key_of(fine[i].point), static_cast<int>(i));
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t a = 0; a < keyed.size();) {
      std::size_t b = a;
      Atom agg;
      agg.index = static_cast<int>(coarse.size());
      Point c = Point::Zero();
      members.emplace_back();
      while (b < keyed.size() && keyed[b].first == keyed[a].first) {
        const Atom& f = fine[keyed[b].second];
        agg.mass += f.mass;
        c += f.mass * f.point;
        members.back().push_back(keyed[b].second);
        ++b;
      }
      agg.point = c / agg.mass;
      coarse.push_back(agg);
      a = b;
    }
  };
  std::vector<Atom> cs, ct;
  std::vector<std::vector<int>> ms, mt;
  aggregate(sources, cs, ms);
  aggregate(sinks, ct, mt);
  // Exact balance for the coarse problem.
  double a = 0.0, b = 0.0;
  for (const auto& x : cs) a += x.mass;
  for (const auto& x : ct) b += x.mass;
  for (auto& x : ct) x.mass *= a / b;
  b = 0.0;
  for (const auto& x : ct) b += x.mass;
  ct.back().mass += a - b;

  std::vector<std::pair<int, int>> arcs;
  if (cs.size() + ct.size() >= sources.size() + sinks.size()) return arcs;
  const TransportPlan coarse = solve_transportation(cs, ct, options);
  for (const auto& f : coarse.flows)
    for (int i : ms[f.source])
      for (int j : mt[f.sink]) arcs.emplace_back(i, j);

  return arcs;
}

}  // namespace

TransportPlan solve_transportation(const std::vector<Atom>& sources, const std::vector<Atom>& sinks,
                                   const SolverOptions& options) {
  if (sources.empty() || sinks.empty()) throw Error(ErrorCode::DegenerateInstance, "empty side");
  const int S = static_cast<int>(sources.size());
  const int T = static_cast<int>(sinks.size());
  const double scale = length_scale(sources, sinks);
  std::vector<double> supply(S), demand(T);
  for (int i = 0; i < S; ++i) supply[i] = sources[i].mass;
  for (int j = 0; j < T; ++j) demand[j] = sinks[j].mass;

  TransportSimplex::Options so;
  so.block_size = options.block_size;
  so.start_arc = options.start_arc;
  so.eps = 1e-12 * scale;
  TransportSimplex simplex(supply, demand, 2.0 * scale + 1.0, so);

  std::unordered_set<std::uint64_t> present;
  auto key = [T](int i, int j) { return static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(T) + j; };
  auto add = [&](int i, int j) {
    if (present.insert(key(i, j)).second) simplex.add_arc(i, j, dist(sources[i].point, sinks[j].point));
  };

  if (options.multiscale_threshold > 0 && S + T > options.multiscale_threshold) {
    for (const auto& [i, j] : coarse_arcs(sources, sinks, options)) add(i, j);
  } else {
    std::vector<std::vector<int>> near_s(S), near_t(T);
    parallel_for(S, [&](std::size_t i) {
      std::vector<std::pair<double, int>> buf;
      near_s[i] = nearest(sources[i].point, sinks, options.initial_neighbors, buf);
    });
    parallel_for(T, [&](std::size_t j) {
      std::vector<std::pair<double, int>> buf;
      near_t[j] = nearest(sinks[j].point, sources, options.initial_neighbors, buf);
    });
    for (int i = 0; i < S; ++i)
      for (int j : near_s[i]) add(i, j);
    for (int j = 0; j < T; ++j)
      for (int i : near_t[j]) add(i, j);
  }

  const double price_tol = 1e-11 * scale;
  const int per_round = std::max(1, options.arcs_per_round);
  std::vector<Point> sink_pts(T);
  for (int j = 0; j < T; ++j) sink_pts[j] = sinks[j].point;
  const GridIndex grid(sink_pts, 0.0, 16);
  std::vector<double> cell_max(grid.cells().size());
  auto refresh_cell_max = [&] {
    for (std::size_t c = 0; c < grid.cells().size(); ++c) {
      double m = -kInf;
      for (int j : grid.cells()[c].members) m = std::max(m, simplex.sink_pi(j));
      cell_max[c] = m;
    }
  };
  // Visits (j, rc) for every sink whose reduced cost against source i may be
  // below -tol; cells that provably cannot are skipped.
  auto scan = [&](int i, double tol, auto&& visit) {
    const double pi_i = simplex.source_pi(i);
    const Point& xi = sources[i].point;
    for (std::size_t c = 0; c < grid.cells().size(); ++c) {
      const double room = cell_max[c] - pi_i - tol;
      if (room <= 0) continue;
      const auto& cell = grid.cells()[c];
      if (cell.min_dist(xi) >= room) continue;
      for (int j : cell.members) {
        const double r = simplex.sink_pi(j) - pi_i - tol;
        if (r <= 0) continue;
        const double d2 = (sink_pts[j] - xi).squaredNorm();
        if (d2 >= r * r) continue;
        visit(j, std::sqrt(d2) + pi_i - simplex.sink_pi(j));
      }
    }
  };

  std::vector<std::vector<int>> found(S);
  TransportPlan plan;
  bool converged = false;
  for (int round = 0; round < options.max_rounds; ++round) {
    plan.rounds = round + 1;
    if (!simplex.optimize()) throw Error(ErrorCode::NumericalFailure, "network simplex exceeded its pivot budget");
    simplex.recompute_potentials();
    refresh_cell_max();
    parallel_for(S, [&](std::size_t i) {
      std::vector<std::pair<double, int>> viol;
      scan(static_cast<int>(i), price_tol, [&](int j, double rc) { viol.emplace_back(rc, j); });
      const std::size_t k = std::min<std::size_t>(per_round, viol.size());
      std::partial_sort(viol.begin(), viol.begin() + static_cast<std::ptrdiff_t>(k), viol.end());
      found[i].clear();
      for (std::size_t q = 0; q < k; ++q) found[i].push_back(viol[q].second);
    });
    std::size_t added = 0;
    for (int i = 0; i < S; ++i)
      for (int j : found[i]) {
        const std::size_t before = present.size();
        add(i, j);
        added += present.size() - before;
      }
    if (added == 0) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorCode::NumericalFailure, "column generation did not converge");

  // Complementary slackness audit with freshly recomputed potentials. Only
  // negative reduced costs matter, so pruning at zero is exact.
  std::vector<double> min_rc(S, 0.0);
  parallel_for(S, [&](std::size_t i) {
    double m = 0.0;
    scan(static_cast<int>(i), 0.0, [&](int, double rc) { m = std::min(m, rc); });
    min_rc[i] = m;
  });
  double worst_dual = 0.0;
  for (double m : min_rc) worst_dual = std::max(worst_dual, -m);
  const auto raw = simplex.flows();
  double worst_primal = 0.0;
  plan.sources = sources;
  plan.sinks = sinks;
  for (const auto& fl : raw) {
    const double d = dist(sources[fl.source].point, sinks[fl.sink].point);
    worst_primal = std::max(worst_primal, std::abs(d + simplex.source_pi(fl.source) - simplex.sink_pi(fl.sink)));
    plan.flows.push_back({sources[fl.source].index, sinks[fl.sink].index, fl.mass});
    plan.cost += fl.mass * d;
  }
  double total = 0.0;
  for (double s : supply) total += s;
  plan.slackness = std::max(worst_dual, worst_primal);
  if (simplex.artificial_flow() > 1e-12 * total)
    throw Error(ErrorCode::NumericalFailure, "artificial arcs still carry flow " + fmt_num(simplex.artificial_flow()));
  if (plan.slackness > options.slackness_tol * scale)
    throw Error(ErrorCode::NumericalFailure, "complementary slackness residual " + fmt_num(plan.slackness));
  plan.source_dual.resize(S);
  plan.sink_dual.resize(T);
  for (int i = 0; i < S; ++i) plan.source_dual[i] = -simplex.source_pi(i);
  for (int j = 0; j < T; ++j) plan.sink_dual[j] = -simplex.sink_pi(j);
  plan.pivots = simplex.pivots();
  plan.arcs = simplex.arc_count();
  return plan;
}

double lipschitz_violation(const std::vector<Point>& points, const std::vector<double>& u) {
  const std::size_t n = points.size();
  std::vector<double> worst(n, -kInf);
  parallel_for(n, [&](std::size_t i) {
    double w = -kInf;
    for (std::size_t j = i + 1; j < n; ++j)
      w = std::max(w, std::abs(u[i] - u[j]) - dist(points[i], points[j]));
    worst[i] = w;
  });
  double w = n > 1 ? -kInf : 0.0;
  for (double v : worst) w = std::max(w, v);
  return w;
}

LipschitzPotential recover_potential(const TransportPlan& plan, const SignedData& data) {
  const auto& S = plan.sources;
  const auto& T = plan.sinks;
  if (plan.source_dual.size() != S.size() || plan.sink_dual.size() != T.size())
    throw Error(ErrorCode::CertificateFailure, "plan carries no dual variables");
  LipschitzPotential pot;
  // c-transform onto the sinks makes sink values mutually 1-Lipschitz. Each
  // search starts from a flow partner, which already attains the maximum in
  // exact arithmetic, so bounding boxes prune almost every cell.
  std::vector<Point> src_pts(S.size());
  for (std::size_t i = 0; i < S.size(); ++i) src_pts[i] = S[i].point;
  const GridIndex src_grid(src_pts, 0.0, 16);
  std::vector<double> src_cell_max(src_grid.cells().size(), -kInf);
  for (std::size_t c = 0; c < src_grid.cells().size(); ++c)
    for (int i : src_grid.cells()[c].members) src_cell_max[c] = std::max(src_cell_max[c], plan.source_dual[i]);
  std::unordered_map<int, int> src_slot, sink_slot;
  for (std::size_t i = 0; i < S.size(); ++i) src_slot[S[i].index] = static_cast<int>(i);
  for (std::size_t j = 0; j < T.size(); ++j) sink_slot[T[j].index] = static_cast<int>(j);
  std::vector<double> sink_init(T.size(), -kInf);
  for (const auto& fl : plan.flows) {
    const int i = src_slot.at(fl.source);
    const int j = sink_slot.at(fl.sink);
    sink_init[j] = std::max(sink_init[j], plan.source_dual[i] - dist(S[i].point, T[j].point));
  }
  std::vector<double> sink_u(T.size());
  parallel_for(T.size(), [&](std::size_t j) {
    double best = sink_init[j];
    const Point& y = T[j].point;
    for (std::size_t c = 0; c < src_grid.cells().size(); ++c) {
      const auto& cell = src_grid.cells()[c];
      if (src_cell_max[c] - cell.min_dist(y) <= best) continue;
      for (int i : cell.members) best = std::max(best, plan.source_dual[i] - dist(S[i].point, y));
    }
    sink_u[j] = best;
  });
  for (std::size_t j = 0; j < T.size(); ++j) {
    pot.generator_points.push_back(T[j].point);
    pot.generator_values.push_back(sink_u[j]);
  }
  const auto& pts = data.measure.points;
  // Minimal McShane extension, seeded at the sample's own generator or a flow partner.
  const GridIndex gen_grid(pot.generator_points, 0.0, 16);
  std::vector<double> gen_cell_min(gen_grid.cells().size(), kInf);
  for (std::size_t c = 0; c < gen_grid.cells().size(); ++c)
    for (int j : gen_grid.cells()[c].members) gen_cell_min[c] = std::min(gen_cell_min[c], sink_u[j]);
  std::vector<double> seed(pts.size(), kInf);
  for (std::size_t j = 0; j < T.size(); ++j) seed[T[j].index] = sink_u[j];
  for (const auto& fl : plan.flows) {
    const int j = sink_slot.at(fl.sink);
    seed[fl.source] = std::min(seed[fl.source], sink_u[j] + dist(pts[fl.source], T[j].point));
  }
  pot.values.resize(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    double best = seed[i];
    const Point& x = pts[i];
    for (std::size_t c = 0; c < gen_grid.cells().size(); ++c) {
      const auto& cell = gen_grid.cells()[c];
      if (gen_cell_min[c] + cell.min_dist(x) >= best) continue;
      for (int j : cell.members) best = std::min(best, sink_u[j] + dist(x, pot.generator_points[j]));
    }
    pot.values[i] = best;
  });

  pot.cost = plan.cost;
  double obj = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) obj += pot.values[i] * data.f_values[i] * data.measure.weights[i];
  pot.objective = obj;
  pot.gap = plan.cost - obj;

  double tight = 0.0;
  for (const auto& fl : plan.flows)
    tight = std::max(tight, std::abs(pot.values[fl.source] - pot.values[fl.sink] - dist(pts[fl.source], pts[fl.sink])));
  pot.tightness_violation = tight;
  pot.lipschitz_violation = lipschitz_violation(pts, pot.values);

  const double cost_scale = std::max(plan.cost, 1e-300);
  if (tight > 1e-9) throw Error(ErrorCode::CertificateFailure, "flow edge not tight: " + fmt_num(tight));
  if (pot.lipschitz_violation > 1e-12)
    throw Error(ErrorCode::CertificateFailure, "Lipschitz violation " + fmt_num(pot.lipschitz_violation));
  if (pot.gap > 1e-8 * cost_scale || pot.gap < -1e-8 * cost_scale)
    throw Error(ErrorCode::CertificateFailure, "duality gap " + fmt_num(pot.gap));
  return pot;
}

double eval_potential(const LipschitzPotential& potential, const Point& x) {
  double best = kInf;
  const auto& g = potential.generator_points;
  for (std::size_t j = 0; j < g.size(); ++j) best = std::min(best, potential.generator_values[j] + dist(x, g[j]));
  return best;
}

std::string plan_csv(const TransportPlan& plan) {
  std::string out = "i,j,mass\n";
  for (const auto& f : plan.flows) {
    out += std::to_string(f.source);
    out += ',';
    out += std::to_string(f.sink);
    out += ',';
    out += fmt_num(f.mass);
    out += '\n';
  }
  return out;
}

}  // namespace needle
