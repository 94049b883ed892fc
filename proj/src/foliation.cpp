#include "needle/foliation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "needle/accumulate.hpp"
#include "needle/parallel.hpp"
#include "needle/spatial.hpp"

namespace needle {

namespace {

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Distance from x to the line through p with unit direction e.
double line_distance(const Point& x, const Point& p, const Point& e) {
  const Point r = x - p;
  return (r - r.dot(e) * e).norm();
}

struct LineFit {
  Point center = Point::Zero();
  Point direction = Point::Zero();
  bool ok = false;
};

LineFit fit_line(const std::vector<int>& members, const DiscreteMeasure& m, const std::vector<Point>& dirs,
                 double min_alignment) {
  LineFit fit;
  double mass = 0.0;
  Point mean_dir = Point::Zero();
  for (int i : members) {
    fit.center += m.weights[i] * m.points[i];
    mass += m.weights[i];
    mean_dir += m.weights[i] * dirs[i];
  }
  if (mass <= 0.0 || mean_dir.norm() == 0.0) return fit;
  fit.center /= mass;
  mean_dir.normalize();
  const int d = m.dim;
  if (members.size() < 2) {
    fit.direction = mean_dir;
    fit.ok = true;
    return fit;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (int i : members) {
    const Eigen::VectorXd r = (m.points[i] - fit.center).head(d);
    cov += m.weights[i] * r * r.transpose();
  }
  cov /= mass;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd ev = es.eigenvalues();
  Point e = Point::Zero();
  e.head(d) = es.eigenvectors().col(d - 1);
  if (d > 1 && ev(d - 2) > 0.25 * ev(d - 1)) return fit;
  if (e.dot(mean_dir) < 0) e = -e;
  if (e.dot(mean_dir) < min_alignment) return fit;
  fit.direction = e;
  fit.ok = true;
  return fit;
}

}  // namespace

TightGraph build_tight_graph(const std::vector<double>& u, const DiscreteMeasure& measure, double tau,
                             double radius) {
  TightGraph g;
  g.n = static_cast<int>(measure.size());
  g.tau = tau;
  g.radius = radius;
  g.points = measure.points;
  const auto& pts = measure.points;
  const bool local = std::isfinite(radius);
  GridIndex index;
  if (local) index = GridIndex(pts, radius);
  const std::vector<int> everyone = local ? std::vector<int>{} : all_indices(pts.size());

  std::vector<std::vector<int>> out(g.n);
  parallel_for(g.n, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    const std::vector<int> near = local ? index.within(pts[i], radius) : everyone;
    for (int j : near) {
      if (j == i || !(u[i] > u[j])) continue;
      if (u[i] - u[j] >= dist(pts[i], pts[j]) - tau) out[i].push_back(j);
    }
  });

  g.out_offsets.assign(g.n + 1, 0);
  std::vector<int> in_count(g.n, 0);
  for (int i = 0; i < g.n; ++i) {
    g.out_offsets[i + 1] = g.out_offsets[i] + static_cast<int>(out[i].size());
    for (int j : out[i]) ++in_count[j];
  }
  g.out_targets.reserve(g.out_offsets[g.n]);
  for (auto& row : out) g.out_targets.insert(g.out_targets.end(), row.begin(), row.end());

  g.in_offsets.assign(g.n + 1, 0);
  for (int j = 0; j < g.n; ++j) g.in_offsets[j + 1] = g.in_offsets[j] + in_count[j];
  g.in_sources.resize(g.out_targets.size());
  std::vector<int> fill(g.in_offsets.begin(), g.in_offsets.end() - 1);
  for (int i = 0; i < g.n; ++i)
    for (int k = g.out_offsets[i]; k < g.out_offsets[i + 1]; ++k) g.in_sources[fill[g.out_targets[k]]++] = i;
  return g;
}

std::vector<int> strain_points(const TightGraph& graph) {
  std::vector<char> flag(graph.n, 0);
  const auto& p = graph.points;
  parallel_for(graph.n, [&](std::size_t yy) {
    const int y = static_cast<int>(yy);
    for (int a = graph.in_offsets[y]; a < graph.in_offsets[y + 1] && !flag[y]; ++a) {
      const int z = graph.in_sources[a];
      const double dzy = dist(p[z], p[y]);
      for (int b = graph.out_offsets[y]; b < graph.out_offsets[y + 1]; ++b) {
        const int x = graph.out_targets[b];
        if (dzy + dist(p[y], p[x]) - dist(p[z], p[x]) <= graph.tau) {
          flag[y] = 1;
          break;
        }
      }
    }
  });
  std::vector<int> s;
  for (int i = 0; i < graph.n; ++i)
    if (flag[i]) s.push_back(i);
  return s;
}

std::vector<Point> ascent_directions(const std::vector<double>& u, const DiscreteMeasure& measure, double radius) {
  const auto& pts = measure.points;
  const int d = measure.dim;
  GridIndex index(pts, radius);
  std::vector<Point> dirs(pts.size(), Point::Zero());
  parallel_for(pts.size(), [&](std::size_t i) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (int j : index.within(pts[i], radius)) {
      if (j == static_cast<int>(i)) continue;
      const Eigen::VectorXd r = (pts[j] - pts[i]).head(d);
      A += r * r.transpose();
      rhs += (u[j] - u[i]) * r;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-10) return;
    const Eigen::VectorXd gvec = ldlt.solve(rhs);
    const double n = gvec.norm();
    if (!(n > 0.0) || !std::isfinite(n)) return;
    dirs[i].head(d) = gvec / n;
  });
  return dirs;
}

std::vector<Point> plan_directions(const TransportPlan& plan, std::size_t n) {
  std::vector<Point> dirs(n, Point::Zero());
  std::vector<Point> where(n, Point::Zero());
  for (const auto& a : plan.sources) where[a.index] = a.point;
  for (const auto& a : plan.sinks) where[a.index] = a.point;
  for (const auto& f : plan.flows) {
    const Point v = f.mass * (where[f.source] - where[f.sink]);
    dirs[f.source] += v;
    dirs[f.sink] += v;
  }
  for (auto& d : dirs) {
    const double len = d.norm();
    if (len > 0) d /= len;
  }
  return dirs;
}

FoliationResult extract_rays(const TightGraph& graph, const std::vector<int>& strain, const LipschitzPotential& potential,
                             const DiscreteMeasure& measure, const WeightedDomain& domain,
                             const FoliationOptions& options, const std::vector<Point>& directions) {
  const double h = measure.spacing > 0 ? measure.spacing : typical_spacing(measure.points);
  const double tau = graph.tau;
  const double width = options.bundle_width > 0 ? options.bundle_width : 0.75 * h;
  const double radius = options.radius > 0 ? options.radius : 3.0 * h;
  const auto& pts = measure.points;
  const auto& u = potential.values;
  const int n = static_cast<int>(pts.size());

  FoliationResult res;
  res.tau = tau;
  res.h = h;
  res.strain = strain;
  res.ray_of.assign(n, -1);
  res.directions.assign(n, Point::Zero());
  {
    const auto all = ascent_directions(u, measure, radius);
    for (int i : strain)
      res.directions[i] = !directions.empty() && directions[i].squaredNorm() > 0 ? directions[i] : all[i];
  }
  const auto& dirs = res.directions;

  // 0 = open strain sample, 1 = on a ray, 2 = excluded
  std::vector<char> state(n, 2);
  for (int i : strain)
    if (dirs[i].squaredNorm() > 0) state[i] = 0;
  std::vector<int> open;
  for (int i : strain)
    if (state[i] == 0) open.push_back(i);

  auto collect = [&](int seed, const Point& p, const Point& e) {
    std::vector<int> cand;
    double s0 = 0.0, s1 = 0.0;
    if (!domain.body.clip_line(p, e, &s0, &s1)) {
      s0 = 0.0;
      s1 = 0.0;
    }
    const Point a = p + s0 * e;
    const Point b = p + s1 * e;
    for (int y : open) {
      if (state[y] != 0) continue;
      if (y != seed) {
        if (dirs[y].dot(e) < options.min_alignment) continue;
        if (line_distance(pts[y], p, e) > width) continue;
        if (line_distance(a, pts[y], dirs[y]) > width || line_distance(b, pts[y], dirs[y]) > width) continue;
      }
      cand.push_back(y);
    }
    return cand;
  };

  for (std::size_t oi = 0; oi < open.size(); ++oi) {
    const int seed = open[oi];
    if (state[seed] != 0) continue;
    Point p = pts[seed];
    Point e = dirs[seed];
    std::vector<int> members;
    bool ok = true;
    for (int pass = 0; pass < 2 && ok; ++pass) {
      members = collect(seed, p, e);
      const LineFit fit = fit_line(members, measure, dirs, options.min_alignment);
      if (!fit.ok) {
        ok = false;
        break;
      }
      p = fit.center;
      e = fit.direction;
    }
    if (ok) {
      // Far outliers leave; the line is refitted once on what stays.
      std::vector<int> kept;
      for (int i : members)
        if (line_distance(pts[i], p, e) <= 2.0 * h) kept.push_back(i);
      members.swap(kept);
      const LineFit fit = fit_line(members, measure, dirs, options.min_alignment);
      ok = fit.ok && !members.empty();
      if (ok) {
        p = fit.center;
        e = fit.direction;
        kept.clear();
        for (int i : members)
          if (line_distance(pts[i], p, e) <= 2.0 * h) kept.push_back(i);
        members.swap(kept);
      }
    }
    if (!ok || static_cast<int>(members.size()) < options.min_members) {
      state[seed] = 2;
      continue;
    }

    // Split into maximal tight chains along the line.
    std::vector<std::pair<double, int>> order;
    order.reserve(members.size());
    for (int i : members) order.emplace_back((pts[i] - p).dot(e), i);
    std::sort(order.begin(), order.end());
    std::vector<std::vector<int>> pieces(1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k > 0) {
        const double dt = order[k].first - order[k - 1].first;
        const double du = u[order[k].second] - u[order[k - 1].second];
        if (du < dt - tau) pieces.emplace_back();
      }
      pieces.back().push_back(order[k].second);
    }

    bool seed_used = false;
    for (auto& piece : pieces) {
      if (static_cast<int>(piece.size()) < options.min_members) continue;
      double mass = 0.0, tbar = 0.0;
      for (int i : piece) {
        mass += measure.weights[i];
        tbar += measure.weights[i] * (pts[i] - p).dot(e);
      }
      tbar /= mass;
      int rep = piece.front();
      double best = kInf;
      for (int i : piece) {
        const double gap = std::abs((pts[i] - p).dot(e) - tbar);
        if (gap < best) {
          best = gap;
          rep = i;
        }
      }
      TransportRay ray;
      ray.direction = e;
      ray.base = p + (pts[rep] - p).dot(e) * e;
      ray.rep = rep;
      ray.u_rep = u[rep];
      std::vector<std::pair<double, int>> kept;
      for (int i : piece) {
        const double t = (pts[i] - ray.base).dot(e);
        if (std::abs(u[i] - (ray.u_rep + t)) <= tau) kept.emplace_back(t, i);
      }
      if (static_cast<int>(kept.size()) < options.min_members) continue;
      std::sort(kept.begin(), kept.end());
      ray.id = static_cast<int>(res.rays.size());
      for (auto& [t, i] : kept) {
        ray.members.push_back(i);
        ray.t.push_back(t);
        ray.fit_residual = std::max(ray.fit_residual, line_distance(pts[i], ray.base, e));
        state[i] = 1;
        res.ray_of[i] = ray.id;
        if (i == seed) seed_used = true;
      }
      ray.member_t_min = ray.t.front();
      ray.member_t_max = ray.t.back();
      ray.t_min = ray.member_t_min;
      ray.t_max = ray.member_t_max;
      ray.alpha = -ray.t_min;
      ray.beta = ray.t_max;
      res.rays.push_back(std::move(ray));
    }
    if (!seed_used) state[seed] = 2;
  }

  for (int i = 0; i < n; ++i)
    if (res.ray_of[i] < 0) res.residual.push_back(i);

  // Ledger: compensated sums in a fixed order.
  auto& L = res.ledger;
  CompensatedSum total, rays, residual;
  for (int i = 0; i < n; ++i) total += measure.weights[i];
  for (auto& ray : res.rays) {
    CompensatedSum m;
    for (int i : ray.members) m += measure.weights[i];
    ray.mass = m.value();
    L.ray_mass.push_back(ray.mass);
    rays += ray.mass;
  }
  for (int i : res.residual) residual += measure.weights[i];
  L.total_mass = total.value();
  L.ray_total = rays.value();
  L.residual_mass = residual.value();
  return res;
}

void smooth_direction_field(FoliationResult& res, const DiscreteMeasure& measure) {
  const auto& pts = measure.points;
  std::vector<Point> on_rays;
  std::vector<int> ray_index;
  for (const auto& ray : res.rays)
    for (int i : ray.members) {
      on_rays.push_back(pts[i]);
      ray_index.push_back(ray.id);
    }
  res.field.assign(pts.size(), Point::Zero());
  if (on_rays.empty()) return;
  const double r = 4.0 * res.h;
  GridIndex index(on_rays, r);
  parallel_for(pts.size(), [&](std::size_t i) {
    Point sum = Point::Zero();
    for (int k : index.within(pts[i], r)) {
      const double d = dist(pts[i], on_rays[k]) / r;
      sum += (1 - d * d) * res.rays[ray_index[k]].direction;
    }
    const double len = sum.norm();
    if (len > 0) res.field[i] = sum / len;
  });
}

std::array<double, 2> ray_bounds(const LipschitzPotential& potential, TransportRay& ray, const WeightedDomain& domain,
                                 double tau, double snap) {
  double s0 = ray.member_t_min, s1 = ray.member_t_max;
  if (!domain.body.clip_line(ray.base, ray.direction, &s0, &s1)) {
    s0 = ray.member_t_min;
    s1 = ray.member_t_max;
  }
  const double step_tol = 1e-6 * domain.body.diameter();
  auto extend = [&](double anchor, double limit) {
    const double ua = eval_potential(potential, ray.at(anchor));
    auto tight = [&](double s) {
      const double us = eval_potential(potential, ray.at(s));
      return std::abs(us - ua) >= std::abs(s - anchor) - tau;
    };
    if ((limit - anchor) * (limit > anchor ? 1 : -1) <= 0) return anchor;
    if (tight(limit)) return limit;
    double good = anchor, bad = limit;
    while (std::abs(bad - good) > step_tol) {
      const double mid = 0.5 * (good + bad);
      if (tight(mid))
        good = mid;
      else
        bad = mid;
    }
    return good;
  };
  ray.t_min = extend(ray.member_t_min, std::min(s0, ray.member_t_min));
  ray.t_max = extend(ray.member_t_max, std::max(s1, ray.member_t_max));
  if (ray.t_min - s0 <= snap) ray.t_min = std::min(ray.t_min, s0);
  if (s1 - ray.t_max <= snap) ray.t_max = std::max(ray.t_max, s1);
  ray.alpha = -ray.t_min;
  ray.beta = ray.t_max;
  return {ray.alpha, ray.beta};
}

std::array<double, 2> sample_ray_bounds(const FoliationResult& result, int sample) {
  const int r = result.ray_of[sample];
  if (r < 0) return {-kInf, -kInf};
  const auto& ray = result.rays[r];
  const auto it = std::find(ray.members.begin(), ray.members.end(), sample);
  const double t = ray.t[it - ray.members.begin()];
  return {t - ray.t_min, ray.t_max - t};
}

FoliationResult foliate(const LipschitzPotential& potential, const DiscreteMeasure& measure,
                        const WeightedDomain& domain, const FoliationOptions& options, const TransportPlan* plan) {
  const double h = measure.spacing > 0 ? measure.spacing : typical_spacing(measure.points);
  const double tau = options.tau > 0 ? options.tau : 0.5 * h;
  const double radius = options.radius > 0 ? options.radius : 3.0 * h;
  const TightGraph graph = build_tight_graph(potential.values, measure, tau, radius);
  const std::vector<int> strain = strain_points(graph);
  const std::vector<Point> dirs = plan ? plan_directions(*plan, measure.size()) : std::vector<Point>{};
  FoliationResult res = extract_rays(graph, strain, potential, measure, domain, options, dirs);
  if (options.extend_bounds) {
    parallel_for(res.rays.size(), [&](std::size_t r) { ray_bounds(potential, res.rays[r], domain, tau, h); });
  }
  smooth_direction_field(res, measure);
  return res;
}

FeldmanMcCannResult feldman_mccann_check(const FeldmanMcCannConfig& c) {
  constexpr double tol = 1e-9;
  FeldmanMcCannResult r;
  r.admissible = c.sigma >= 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double target = c.sigma * std::abs(i - j);
      if (i < j) {
        if (std::abs(dist(c.x[i], c.x[j]) - target) > tol) r.admissible = false;
        if (std::abs(dist(c.y[i], c.y[j]) - target) > tol) r.admissible = false;
      }
      if (dist(c.x[i], c.y[j]) < target - tol) r.admissible = false;
    }
  const double num = std::max(dist(c.x[0], c.y[0]), dist(c.x[2], c.y[2]));
  const double den = dist(c.x[1], c.y[1]);
  if (den > 0.0)
    r.ratio = num / den;
  else
    r.ratio = num > 0.0 ? kInf : 1.0;
  return r;
}

}  // namespace needle
