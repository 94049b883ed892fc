#include "needle/needles.hpp"

#include <algorithm>
#include <cmath>

#include "needle/error.hpp"
#include "needle/parallel.hpp"

namespace needle {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Phi {
  double v, d1, d2;
};

Phi affine_phi(const AffineNeedleSpec& s, double t) {
  const double m = s.n_param - 1.0;
  switch (affine_regime(s.kappa, s.n_param)) {
    case AffineRegime::Positive: {
      const double w = std::sqrt(s.kappa / m);
      const double v = s.alpha * std::sin(w * t - s.beta);
      return {v, s.alpha * w * std::cos(w * t - s.beta), -w * w * v};
    }
    case AffineRegime::Zero:
      return {s.alpha + s.beta * t, s.beta, 0.0};
    case AffineRegime::Negative: {
      const double w = std::sqrt(-s.kappa / m);
      const double v = s.alpha * std::sinh(w * t) + s.beta * std::cosh(w * t);
      return {v, w * (s.alpha * std::cosh(w * t) + s.beta * std::sinh(w * t)), w * w * v};
    }
    case AffineRegime::Infinite:
      break;
  }
  return {0, 0, 0};
}

// Maps (0, 1) onto (a, b), which may be unbounded.
double unit_to_interval(double x, double a, double b) {
  const bool fa = std::isfinite(a), fb = std::isfinite(b);
  if (fa && fb) return a + x * (b - a);
  if (fa) return a + x / (1.0 - x);
  if (fb) return b - (1.0 - x) / x;
  return std::tan(kPi * (x - 0.5));
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
  return s;
}

// Finite support [lo, hi] carrying all but about 1e-10 of the mass.
std::pair<double, double> finite_support(const Needle& n) {
  double lo = n.a, hi = n.b;
  if (std::isfinite(lo) && std::isfinite(hi)) return {lo, hi};
  double anchor = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
  if (!std::isfinite(lo) && !std::isfinite(hi) && !n.closed) anchor = 0.0;
  if (n.closed && affine_regime(n.spec.kappa, n.spec.n_param) == AffineRegime::Infinite && n.spec.kappa > 0) {
    const double mode = n.spec.beta / n.spec.kappa;
    anchor = std::clamp(mode, std::isfinite(lo) ? lo : -kInf, std::isfinite(hi) ? hi : kInf);
  }
  double peak = 0.0;
  for (int k = 1; k < 400; ++k) {
    const double x = unit_to_interval(k / 400.0, lo, hi);
    peak = std::max(peak, n(x));
  }
  peak = std::max(peak, n(anchor));
  auto walk = [&](double dir) {
    double step = 0.5;
    double x = anchor + dir * step;
    for (int it = 0; it < 60; ++it) {
      const double f = n(x);
      const double f2 = n(x + dir * step);
      if (f <= 1e-16 * peak && f2 <= f) return x;
      step *= 1.5;
      x = anchor + dir * step;
    }
    return x;
  };
  if (!std::isfinite(lo)) lo = walk(-1.0);
  if (!std::isfinite(hi)) hi = walk(1.0);
  return {lo, hi};
}

}  // namespace

AffineRegime affine_regime(double kappa, double n_param) {
  if (std::isinf(n_param)) return AffineRegime::Infinite;
  if (kappa == 0.0) return AffineRegime::Zero;
  return kappa / (n_param - 1.0) > 0 ? AffineRegime::Positive : AffineRegime::Negative;
}

void Needle::psi(double s, double* p, double* dp, double* ddp) const {
  if (affine_regime(spec.kappa, spec.n_param) == AffineRegime::Infinite) {
    *p = -std::log(spec.alpha) - spec.beta * s + 0.5 * spec.kappa * s * s;
    *dp = -spec.beta + spec.kappa * s;
    *ddp = spec.kappa;
    return;
  }
  const double m = spec.n_param - 1.0;
  const Phi ph = affine_phi(spec, s);
  const double r = ph.d1 / ph.v;
  *p = -m * std::log(ph.v);
  *dp = -m * r;
  *ddp = -m * (ph.d2 / ph.v - r * r);
}

double Needle::operator()(double s) const {
  if (closed) {
    if (!(s >= a && s <= b)) return 0.0;
    if (affine_regime(spec.kappa, spec.n_param) == AffineRegime::Infinite)
      return spec.alpha * std::exp(spec.beta * s - 0.5 * spec.kappa * s * s);
    const double v = affine_phi(spec, s).v;
    if (v <= 0.0) return spec.n_param - 1.0 > 0 ? 0.0 : kInf;
    return std::pow(v, spec.n_param - 1.0);
  }
  if (t.empty() || s < t.front() || s > t.back()) return 0.0;
  const auto it = std::upper_bound(t.begin(), t.end(), s);
  if (it == t.end()) return density.back();
  const std::size_t k = static_cast<std::size_t>(it - t.begin());
  if (k == 0) return density.front();
  const double w = (s - t[k - 1]) / (t[k] - t[k - 1]);
  return (1 - w) * density[k - 1] + w * density[k];
}

Needle affine_needle_density(const AffineNeedleSpec& spec) {
  if (spec.n_param == 1.0 || std::isnan(spec.n_param))
    throw Error(ErrorCode::InvalidParams, "affine needle requires N != 1");
  if (!(spec.a < spec.b)) throw Error(ErrorCode::InvalidParams, "empty needle interval");
  const AffineRegime regime = affine_regime(spec.kappa, spec.n_param);
  if (regime == AffineRegime::Infinite) {
    if (!(spec.alpha > 0)) throw Error(ErrorCode::InvalidParams, "log-affine needle requires alpha > 0");
  } else {
    if (regime == AffineRegime::Positive) {
      const double w = std::sqrt(spec.kappa / (spec.n_param - 1.0));
      if (!std::isfinite(spec.b - spec.a) || w * (spec.b - spec.a) > kPi * (1 + 1e-12))
        throw Error(ErrorCode::InvalidParams, "sine needle interval longer than half a period");
    }
    for (int k = 1; k < 1024; ++k) {
      const double x = unit_to_interval(k / 1024.0, spec.a, spec.b);
      if (!(affine_phi(spec, x).v > 0))
        throw Error(ErrorCode::InvalidParams, "affine needle density not positive on its interval");
    }
  }
  Needle n;
  n.a = spec.a;
  n.b = spec.b;
  n.kappa = spec.kappa;
  n.n_param = spec.n_param;
  n.closed = true;
  n.spec = spec;
  const auto [lo, hi] = finite_support(n);
  const int cells = 4000;
  double mass = 0.0;
  for (int k = 0; k < cells; ++k) mass += n(lo + (k + 0.5) * (hi - lo) / cells);
  n.mass = mass * (hi - lo) / cells;
  return n;
}

Needle sampled_needle(std::vector<double> t, std::vector<double> density, double kappa, double n_param) {
  if (t.size() < 2 || t.size() != density.size())
    throw Error(ErrorCode::InvalidParams, "sampled needle needs matching grids of size >= 2");
  for (std::size_t k = 1; k < t.size(); ++k)
    if (!(t[k] > t[k - 1])) throw Error(ErrorCode::InvalidParams, "needle grid must increase strictly");
  Needle n;
  n.a = t.front();
  n.b = t.back();
  n.kappa = kappa;
  n.n_param = n_param;
  n.mass = trapezoid(t, density);
  n.t = std::move(t);
  n.density = std::move(density);
  return n;
}

Needle tabulate(const Needle& needle, int points) {
  if (!needle.closed) return needle;
  const auto [lo, hi] = finite_support(needle);
  std::vector<double> t(points), f(points);
  for (int k = 0; k < points; ++k) {
    t[k] = lo + (hi - lo) * k / (points - 1);
    f[k] = needle(t[k]);
  }
  Needle out = sampled_needle(std::move(t), std::move(f), needle.kappa, needle.n_param);
  out.ray_id = needle.ray_id;
  return out;
}

namespace {

Needle reflected_kde(const std::vector<double>& ts, const std::vector<double>& ws, double a, double b, double bw,
                     double step, double mass) {
  const int points = std::max(2, static_cast<int>(std::ceil((b - a) / step)) + 1);
  std::vector<double> grid(points), dens(points, 0.0);
  const double norm = 1.0 / (bw * std::sqrt(2 * kPi));
  const double cut = 6.0 * bw;
  // Data plus mirror images about both ends, sorted by position.
  std::vector<std::pair<double, double>> pts;
  for (std::size_t j = 0; j < ts.size(); ++j)
    for (double c : {ts[j], 2 * a - ts[j], 2 * b - ts[j]})
      if (c > a - cut && c < b + cut) pts.emplace_back(c, ws[j]);
  std::sort(pts.begin(), pts.end());
  for (int k = 0; k < points; ++k) {
    const double x = a + (b - a) * k / (points - 1);
    grid[k] = x;
    auto it = std::lower_bound(pts.begin(), pts.end(), std::make_pair(x - cut, -kInf));
    double s = 0.0;
    for (; it != pts.end() && it->first < x + cut; ++it) {
      const double z = x - it->first;
      s += it->second * std::exp(-0.5 * z * z / (bw * bw));
    }
    dens[k] = s * norm;
  }
  // Reflection keeps the mass but flattens a sloped end: for f = c + m u near
  // an end the estimate is off by m B(u). The inward slope is fitted by
  // half-Gaussian weighted moments and the term is subtracted.
  if (b - a > 2.0 * bw) {
    const double w = std::min(3.0 * bw, 0.5 * (b - a));
    auto slope = [&](double end, double sign) {
      double i0 = 0, i1 = 0, i2 = 0;
      const int q = 4000;
      const double len = b - a;
      for (int k = 0; k <= q; ++k) {
        const double u = len * k / q;
        const double g = std::exp(-0.5 * u * u / (w * w)) * ((k == 0 || k == q) ? 0.5 : 1.0) * len / q;
        i0 += g;
        i1 += g * u;
        i2 += g * u * u;
      }
      double s0 = 0, s1 = 0;
      for (std::size_t j = 0; j < ts.size(); ++j) {
        const double u = sign * (ts[j] - end);
        const double g = std::exp(-0.5 * u * u / (w * w));
        s0 += ws[j] * g;
        s1 += ws[j] * g * u;
      }
      const double det = i0 * i2 - i1 * i1;
      return det > 0 ? (i0 * s1 - i1 * s0) / det : 0.0;
    };
    auto bias = [&](double z) {
      const double r = z / bw;
      return 2.0 * bw * std::exp(-0.5 * r * r) / std::sqrt(2 * kPi) - z * std::erfc(r / std::sqrt(2.0));
    };
    const double ma = slope(a, 1.0), mb = slope(b, -1.0);
    for (int k = 0; k < points; ++k) dens[k] -= ma * bias(grid[k] - a) + mb * bias(b - grid[k]);
  }
  const double total = trapezoid(grid, dens);
  if (total > 0)
    for (double& d : dens) d *= mass / total;
  return sampled_needle(std::move(grid), std::move(dens));
}

constexpr double kMinInsideFraction = 0.25;

double spacing_of(const DiscreteMeasure& m) { return m.spacing > 0 ? m.spacing : 1.0; }

}  // namespace

Needle estimate_density(const TransportRay& ray, const DiscreteMeasure& measure, double bandwidth, double grid_step) {
  if (ray.members.size() < 8) throw Error(ErrorCode::TooFewSamples, "density estimation needs at least 8 members");
  const double step = grid_step > 0 ? grid_step : spacing_of(measure);
  std::vector<double> ts, ws;
  for (std::size_t k = 0; k < ray.members.size(); ++k) {
    ts.push_back(std::clamp(ray.t[k], ray.t_min, ray.t_max));
    ws.push_back(measure.weights[ray.members[k]]);
  }
  Needle n = reflected_kde(ts, ws, ray.t_min, ray.t_max, bandwidth, step, ray.mass);
  n.ray_id = ray.id;
  return n;
}

DensityEstimator::DensityEstimator(const FoliationResult& foliation, const DiscreteMeasure& measure,
                                   const WeightedDomain& domain, const DensityOptions& options)
    : fol_(foliation), measure_(measure), domain_(domain), opt_(options) {
  h_ = spacing_of(measure);
  bw_ = opt_.bandwidth > 0 ? opt_.bandwidth : 8.0 * h_;
  sigma_ = opt_.transverse > 0 ? opt_.transverse : 4.0 * h_;
  step_ = opt_.grid_step > 0 ? opt_.grid_step : h_;
  index_ = GridIndex(measure.points, h_);
}

double DensityEstimator::line_gap(const TransportRay& ray, const Point& x, const Point& e) const {
  auto d = [&](const Point& q) {
    const Point v = q - x;
    return (v - v.dot(e) * e).norm();
  };
  return std::max(d(ray.at(ray.t_min)), d(ray.at(ray.t_max)));
}

Point DensityEstimator::field_at(const Point& x) const {
  const auto& field = fol_.field.empty() ? fol_.directions : fol_.field;
  for (double r : {1.5 * h_, 4.0 * h_}) {
    int best = -1;
    double bd = kInf;
    for (int i : index_.within(x, r)) {
      const double d = dist(x, measure_.points[i]);
      if (field[i].squaredNorm() > 0 && d < bd) {
        bd = d;
        best = i;
      }
    }
    if (best >= 0) return field[best];
  }
  return Point::Zero();
}

Needle DensityEstimator::estimate(int r) const {
  const TransportRay& ray = fol_.rays[r];
  if (ray.members.size() < 8) throw Error(ErrorCode::TooFewSamples, "density estimation needs at least 8 members");
  const auto& field = fol_.field.empty() ? fol_.directions : fol_.field;
  const double reach = 3.0 * sigma_;
  const int dim = measure_.dim;

  std::vector<double> ts, ws;
  const Point mid = ray.at(0.5 * (ray.t_min + ray.t_max));
  for (int i : index_.within(mid, 0.5 * (ray.t_max - ray.t_min) + reach)) {
    const Point& e = field[i];
    if (e.dot(ray.direction) < opt_.min_alignment) continue;
    const Point& x = measure_.points[i];
    const double t = (x - ray.base).dot(ray.direction);
    if (t < ray.t_min || t > ray.t_max) continue;
    if ((x - ray.at(t)).norm() > reach) continue;
    const double gap = line_gap(ray, x, e);
    if (gap > reach) continue;
    ts.push_back(t);
    ws.push_back(measure_.weights[i] * std::exp(-0.5 * gap * gap / (sigma_ * sigma_)));
  }
  if (dim >= 2) {
    // Samples near an oblique exit stand for a strip that is partly outside
    // the domain; each weight is divided by the inside fraction at its t.
    Point n1 = Point::Zero(), n2 = Point::Zero();
    if (dim == 2) {
      n1 = Point(-ray.direction(1), ray.direction(0), 0.0);
    } else {
      const Point seed = std::abs(ray.direction(0)) < 0.9 ? Point(1, 0, 0) : Point(0, 1, 0);
      n1 = ray.direction.cross(seed).normalized();
      n2 = ray.direction.cross(n1);
    }
    const int q = 24;
    const double span = 2.0 * reach;
    const int points = std::max(2, static_cast<int>(std::ceil((ray.t_max - ray.t_min) / step_)) + 1);
    std::vector<double> grid(points), frac(points, 1.0);
    // Line-space gap grows like lambda |q| with the transverse offset q; lambda
    // is fitted from points inside the domain, and the same profile is used
    // for the points outside, where the field is unknown.
    double last_lambda = 1.0;
    for (int k = 0; k < points; ++k) {
      grid[k] = ray.t_min + (ray.t_max - ray.t_min) * k / (points - 1);
      const Point c = ray.at(grid[k]);
      std::vector<std::pair<double, bool>> offs;
      double sxy = 0.0, sxx = 0.0;
      for (int a = -q; a <= q; ++a)
        for (int b = (dim == 3 ? -q : 0); b <= (dim == 3 ? q : 0); ++b) {
          const double qa = span * a / q, qb = span * b / q;
          const Point p = c + qa * n1 + qb * n2;
          const double r = std::hypot(qa, qb);
          const bool in = domain_.body.contains(p, 1e-12);
          offs.emplace_back(r, in);
          if (!in || r == 0.0) continue;
          const Point e = field_at(p);
          if (e.squaredNorm() == 0) continue;
          const double gap = line_gap(ray, p, e);
          if (gap > reach) continue;
          sxy += gap * r;
          sxx += r * r;
        }
      const double lambda = sxx > 0 ? std::max(sxy / sxx, 0.05) : last_lambda;
      last_lambda = lambda;
      double inside = 0.0, total = 0.0;
      for (const auto& [r, in] : offs) {
        const double z = lambda * r / sigma_;
        const double w = std::exp(-0.5 * z * z);
        total += w;
        if (in) inside += w;
      }
      frac[k] = total > 0 ? std::max(inside / total, kMinInsideFraction) : 1.0;
    }
    for (std::size_t j = 0; j < ts.size(); ++j) {
      const double pos = (ts[j] - ray.t_min) / (ray.t_max - ray.t_min) * (points - 1);
      const int k = std::clamp(static_cast<int>(pos), 0, points - 2);
      const double w = std::clamp(pos - k, 0.0, 1.0);
      ws[j] /= (1 - w) * frac[k] + w * frac[k + 1];
    }
  }
  Needle n = reflected_kde(ts, ws, ray.t_min, ray.t_max, bw_, step_, 1.0);
  const double total = trapezoid(n.t, n.density);
  if (total > 0)
    for (double& d : n.density) d *= ray.mass / total;
  n.mass = ray.mass;
  n.ray_id = ray.id;
  return n;
}

CDReport check_cd(const Needle& needle, double kappa, double n_param, double tol, double margin) {
  CDReport rep;
  const bool infinite_n = std::isinf(n_param);
  const double m = n_param - 1.0;
  auto record = [&](double t, double res) {
    ++rep.evaluated;
    if (res < rep.min_residual) {
      rep.min_residual = res;
      rep.worst_t = t;
    }
  };
  if (needle.closed) {
    auto [lo, hi] = finite_support(needle);
    const double inset = 0.01 * (hi - lo);
    lo = std::max(lo + inset, needle.a + margin);
    hi = std::min(hi - inset, needle.b - margin);
    const int points = 1001;
    for (int k = 0; k < points && lo <= hi; ++k) {
      const double t = lo + (hi - lo) * k / (points - 1);
      double p, dp, ddp;
      needle.psi(t, &p, &dp, &ddp);
      record(t, ddp - kappa - (infinite_n ? 0.0 : dp * dp / m));
    }
  } else {
    const auto& t = needle.t;
    const auto& f = needle.density;
    const std::size_t n = t.size();
    for (std::size_t k = 1; k + 1 < n; ++k)
      if (!(f[k] > 0)) throw Error(ErrorCode::NonpositiveDensity, "needle density vanishes on the interior grid");
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (t[k] < needle.a + margin || t[k] > needle.b - margin) continue;
      if (!(f[k - 1] > 0) || !(f[k + 1] > 0)) continue;
      const double p0 = -std::log(f[k - 1]), p1 = -std::log(f[k]), p2 = -std::log(f[k + 1]);
      const double hl = t[k] - t[k - 1], hr = t[k + 1] - t[k];
      const double dp = (p2 - p0) / (hl + hr);
      const double ddp = 2.0 * ((p2 - p1) / hr - (p1 - p0) / hl) / (hl + hr);
      record(t[k], ddp - kappa - (infinite_n ? 0.0 : dp * dp / m));
    }
  }
  rep.pass = rep.evaluated == 0 || rep.min_residual >= -tol;
  return rep;
}

double equality_residual(const Needle& needle, int points) {
  if (!needle.closed) throw Error(ErrorCode::InvalidParams, "equality residual needs a closed form");
  const auto [lo, hi] = finite_support(needle);
  const bool infinite_n = std::isinf(needle.spec.n_param);
  const double m = needle.spec.n_param - 1.0;
  double worst = 0.0;
  for (int k = 1; k < points; ++k) {
    const double t = lo + (hi - lo) * k / points;
    double p, dp, ddp;
    needle.psi(t, &p, &dp, &ddp);
    worst = std::max(worst, std::abs(ddp - needle.spec.kappa - (infinite_n ? 0.0 : dp * dp / m)));
  }
  return worst;
}

double check_zero_integral(const Needle& needle, const TransportRay& ray,
                           const std::function<double(const Point&)>& f) {
  const Needle n = tabulate(needle);
  double num = 0.0, den = 0.0;
  constexpr int sub = 8;
  for (std::size_t k = 1; k < n.t.size(); ++k) {
    const double dt = (n.t[k] - n.t[k - 1]) / sub;
    for (int j = 0; j < sub; ++j) {
      const double w = (j + 0.5) / sub;
      const double s = n.t[k - 1] + w * (n.t[k] - n.t[k - 1]);
      const double rho = (1 - w) * n.density[k - 1] + w * n.density[k];
      const double v = f(ray.at(s));
      num += v * rho * dt;
      den += std::abs(v) * rho * dt;
    }
  }
  return den > 0 ? std::abs(num) / den : 0.0;
}

std::vector<double> needle_transform(const std::vector<double>& t, const std::vector<double>& f, double kappa,
                                     double n_param, const std::vector<double>& s) {
  if (!(std::isfinite(n_param) && n_param != 0.0 && kappa / n_param > 0))
    throw Error(ErrorCode::InvalidParams, "transform requires kappa/N > 0");
  const double w = std::sqrt(kappa / n_param);
  auto g = [&](double x) {
    const double arg = w * x;
    const double base = (arg >= 0 && arg <= kPi) ? std::max(0.0, std::sin(arg)) : 0.0;
    if (base == 0.0) return n_param > 0 ? 0.0 : kInf;
    return std::pow(base, n_param);
  };
  std::vector<double> out(s.size(), kInf);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double best = kInf;
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (!(f[k] < kInf)) continue;
      const double q = f[k] == 0.0 ? kInf : g(s[i] + t[k]) / f[k];
      best = std::min(best, q);
    }
    out[i] = best;
  }
  return out;
}

std::vector<double> needle_transform(const Needle& needle, double kappa, double n_param, const std::vector<double>& s) {
  const Needle n = tabulate(needle);
  return needle_transform(n.t, n.density, kappa, n_param, s);
}

namespace {

// Eigenvalues of the symmetric tridiagonal (d, e) below x.
int sturm_count(const std::vector<double>& d, const std::vector<double>& e, double x) {
  int count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double off = i == 0 ? 0.0 : e[i - 1] * e[i - 1];
    q = d[i] - x - (i == 0 ? 0.0 : off / q);
    if (q == 0.0) q = -1e-300;
    if (q < 0) ++count;
  }
  return count;
}

double gap_at(const Needle& n, double lo, double hi, int cells) {
  const double dx = (hi - lo) / cells;
  std::vector<double> mass(cells), cond(cells - 1);
  for (int i = 0; i < cells; ++i) mass[i] = n(lo + (i + 0.5) * dx) * dx;
  for (int i = 0; i + 1 < cells; ++i) cond[i] = n(lo + (i + 1) * dx) / dx;
  std::vector<double> d(cells), e(cells - 1);
  double upper = 0.0;
  for (int i = 0; i < cells; ++i) {
    if (!(mass[i] > 0)) throw Error(ErrorCode::NonpositiveDensity, "spectral gap needs a positive density");
    const double kl = i > 0 ? cond[i - 1] : 0.0;
    const double kr = i + 1 < cells ? cond[i] : 0.0;
    d[i] = (kl + kr) / mass[i];
  }
  for (int i = 0; i + 1 < cells; ++i) e[i] = -cond[i] / std::sqrt(mass[i] * mass[i + 1]);
  for (int i = 0; i < cells; ++i)
    upper = std::max(upper, d[i] + (i > 0 ? std::abs(e[i - 1]) : 0.0) + (i + 1 < cells ? std::abs(e[i]) : 0.0));
  double a = 0.0, b = upper;
  for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
    const double mid = 0.5 * (a + b);
    if (sturm_count(d, e, mid) >= 2)
      b = mid;
    else
      a = mid;
  }
  return 0.5 * (a + b);
}

}  // namespace

double spectral_gap_1d(const Needle& needle, int cells) {
  const auto [lo, hi] = finite_support(needle);
  if (!(hi > lo)) throw Error(ErrorCode::InvalidParams, "spectral gap needs a nondegenerate interval");
  const double coarse = gap_at(needle, lo, hi, cells);
  const double fine = gap_at(needle, lo, hi, 2 * cells);
  return (4.0 * fine - coarse) / 3.0;
}

namespace {

// Affine needles with support inside (0, D), one per shape/placement choice.
std::vector<Needle> affine_family(double kappa, double n_param, double D, const FamilySearch& search) {
  std::vector<Needle> out;
  auto push = [&](AffineNeedleSpec s) {
    try {
      out.push_back(affine_needle_density(s));
    } catch (const Error&) {
    }
  };
  const AffineRegime regime = affine_regime(kappa, n_param);
  const int S = std::max(1, search.shapes);
  const int P = std::max(1, search.positions);
  if (regime == AffineRegime::Infinite) {
    if (!std::isfinite(D)) {
      if (kappa <= 0) return out;
      const double L = 12.0 / std::sqrt(kappa);
      // Gaussian windows; the full line is the first candidate.
      for (int p = 0; p < P; ++p) {
        const double cut = -L + (L + 1.0 / std::sqrt(kappa)) * p / P;
        push({kappa, n_param, 1.0, 0.0, -L, L});
        if (p > 0) push({kappa, n_param, 1.0, 0.0, cut, L});
      }
      return out;
    }
    for (int p = 0; p < P; ++p) {
      const double len = D * (1.0 - 0.5 * p / P);
      for (int k = 0; k < S; ++k) {
        const double z = S == 1 ? 0.0 : -1.0 + 2.0 * k / (S - 1);
        const double beta = 0.5 * kappa * len + 16.0 * z * std::abs(z) / len;
        push({kappa, n_param, 1.0, beta, 0.0, len});
      }
    }
    return out;
  }
  const double m = n_param - 1.0;
  if (regime == AffineRegime::Positive) {
    const double w = std::sqrt(kappa / m);
    const double span = std::min(std::isfinite(D) ? D : kInf, kPi / w);
    for (int p = 0; p < P; ++p) {
      const double len = span * (1.0 - 0.5 * p / P);
      const double room = kPi - w * len;
      for (int k = 0; k < S; ++k) {
        const double start = S == 1 ? 0.5 * room : room * k / (S - 1);
        push({kappa, n_param, 1.0, -start, 0.0, len * (1 - 1e-12)});
      }
    }
    return out;
  }
  if (!std::isfinite(D)) return out;
  for (int p = 0; p < P; ++p) {
    const double len = D * (1.0 - 0.5 * p / P);
    if (regime == AffineRegime::Zero) {
      // phi = 1 + beta t with end ratio r = phi(len) / phi(0) spread geometrically.
      for (int k = 0; k < S; ++k) {
        const double z = S == 1 ? 0.0 : -1.0 + 2.0 * k / (S - 1);
        const double r = std::pow(10.0, 3.0 * z);
        push({kappa, n_param, 1.0, (r - 1.0) / len, 0.0, len});
      }
    } else {
      const double w = std::sqrt(-kappa / m);
      for (int k = 0; k < S; ++k) {
        const double z = S == 1 ? 0.0 : -1.0 + 2.0 * k / (S - 1);
        const double c = w * len * (0.5 + 1.5 * z);  // cosh centre
        push({kappa, n_param, -std::sinh(c), std::cosh(c), 0.0, len});
        const double root = -w * len * std::pow(4.0, z);  // sinh root left of the interval
        push({kappa, n_param, std::cosh(root), -std::sinh(root), 0.0, len});
      }
      push({kappa, n_param, 1.0, 1.0, 0.0, len});
      push({kappa, n_param, -1.0, 1.0, 0.0, len});
    }
  }
  return out;
}

}  // namespace

double lambda_knd(double kappa, double n_param, double D, const FamilySearch& search) {
  const auto family = affine_family(kappa, n_param, D, search);
  if (family.empty()) return 0.0;
  std::vector<double> gaps(family.size());
  parallel_for(family.size(), [&](std::size_t i) { gaps[i] = spectral_gap_1d(family[i], search.cells); });
  return *std::min_element(gaps.begin(), gaps.end());
}

namespace {

struct Cdf {
  std::vector<double> x, F;
  double at(double s) const {
    if (s <= x.front()) return 0.0;
    if (s >= x.back()) return 1.0;
    const auto it = std::upper_bound(x.begin(), x.end(), s);
    const std::size_t k = static_cast<std::size_t>(it - x.begin());
    const double w = (s - x[k - 1]) / (x[k] - x[k - 1]);
    return (1 - w) * F[k - 1] + w * F[k];
  }
  double inverse(double q) const {
    const auto it = std::lower_bound(F.begin(), F.end(), q);
    if (it == F.begin()) return x.front();
    if (it == F.end()) return x.back();
    const std::size_t k = static_cast<std::size_t>(it - F.begin());
    const double span = F[k] - F[k - 1];
    const double w = span > 0 ? (q - F[k - 1]) / span : 0.0;
    return x[k - 1] + w * (x[k] - x[k - 1]);
  }
};

// Normalized CDF from Gauss-Legendre cells; returns the support as well.
Cdf make_cdf(const Needle& n, int cells) {
  const auto [lo, hi] = finite_support(n);
  const double dx = (hi - lo) / cells;
  static const double g[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  Cdf c;
  c.x.resize(cells + 1);
  c.F.resize(cells + 1);
  c.x[0] = lo;
  c.F[0] = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double mid = lo + (i + 0.5) * dx;
    double s = 0.0;
    for (int q = 0; q < 3; ++q) s += gw[q] * n(mid + 0.5 * dx * g[q]);
    c.x[i + 1] = lo + (i + 1) * dx;
    c.F[i + 1] = c.F[i] + 0.5 * dx * s;
  }
  const double total = c.F.back();
  for (double& v : c.F) v /= total;
  return c;
}

}  // namespace

double iso_profile(double kappa, double n_param, double D, double t, double eps, const FamilySearch& search) {
  if (!(t > 0 && t < 1) || !(eps > 0)) throw Error(ErrorCode::InvalidParams, "iso profile needs t in (0,1), eps > 0");
  const auto family = affine_family(kappa, n_param, D, search);
  if (family.empty()) return t;
  std::vector<double> vals(family.size());
  parallel_for(family.size(), [&](std::size_t i) {
    const Cdf c = make_cdf(family[i], 20 * search.cells);
    const double left = c.at(c.inverse(t) + eps);
    const double right = 1.0 - c.at(c.inverse(1.0 - t) - eps);
    vals[i] = std::min(left, right);
  });
  return *std::min_element(vals.begin(), vals.end());
}

BobkovCurve bobkov_i_curve(const Needle& needle, int points) {
  const Cdf c = make_cdf(needle, 20000);
  const double mass = needle.closed ? needle.mass : trapezoid(needle.t, needle.density);
  BobkovCurve out;
  for (int k = 1; k <= points; ++k) {
    const double s = static_cast<double>(k) / (points + 1);
    out.s.push_back(s);
    out.value.push_back(needle(c.inverse(s)) / mass);
  }
  double peak = 0.0;
  for (double v : out.value) peak = std::max(peak, v);
  for (int k = 1; k + 1 < points; ++k) {
    const double d2 = out.value[k + 1] - 2 * out.value[k] + out.value[k - 1];
    out.max_second_difference = std::max(out.max_second_difference, d2);
  }
  out.concave = out.max_second_difference <= 1e-6 * peak;
  return out;
}

PolyFit polynomial_fit(const std::vector<double>& t, const std::vector<double>& y, int degree, double flat_tol) {
  const int n = static_cast<int>(t.size());
  if (n <= degree) throw Error(ErrorCode::TooFewSamples, "polynomial fit needs more points than coefficients");
  double tm = 0.0, scale = 0.0;
  for (double v : t) tm += v;
  tm /= n;
  for (double v : t) scale = std::max(scale, std::abs(v - tm));
  if (scale == 0.0) scale = 1.0;
  Eigen::MatrixXd A(n, degree + 1);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const double z = (t[i] - tm) / scale;
    double p = 1.0;
    for (int j = 0; j <= degree; ++j, p *= z) A(i, j) = p;
    b(i) = y[i];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  double mean = b.mean();
  double ss_tot = (b.array() - mean).square().sum();
  double ss_res = (A * c - b).squaredNorm();
  PolyFit fit;
  // Back to powers of t.
  fit.coeffs.assign(degree + 1, 0.0);
  for (int j = 0; j <= degree; ++j) {
    // c_j ((t - tm)/scale)^j expanded binomially.
    double binom = 1.0;
    for (int k = 0; k <= j; ++k) {
      fit.coeffs[k] += c(j) * binom * std::pow(-tm, j - k) / std::pow(scale, j);
      binom = binom * (j - k) / (k + 1);
    }
  }
  if (ss_tot <= n * std::pow(flat_tol * std::abs(mean), 2) || ss_tot == 0.0)
    fit.r2 = 1.0;
  else
    fit.r2 = 1.0 - ss_res / ss_tot;
  return fit;
}

}  // namespace needle
