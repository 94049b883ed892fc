#include "needle/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "needle/accumulate.hpp"
#include "needle/error.hpp"

namespace needle {

WeightSpec WeightSpec::constant(double c) {
  WeightSpec w;
  w.c = c;
  return w;
}

WeightSpec WeightSpec::linear(const Point& b, double c) {
  WeightSpec w;
  w.kind = WeightKind::Linear;
  w.b = b;
  w.c = c;
  return w;
}

WeightSpec WeightSpec::quadratic(const Matrix3& Q, const Point& b, double c) {
  WeightSpec w;
  w.kind = WeightKind::Quadratic;
  w.Q = 0.5 * (Q + Q.transpose());
  w.b = b;
  w.c = c;
  return w;
}

void check_n_param(int dim, double n_param, const WeightSpec& rho) {
  if (std::isnan(n_param)) throw Error(ErrorCode::InvalidN, "N is NaN");
  if (n_param >= 1.0 && n_param < dim)
    throw Error(ErrorCode::InvalidN, "N must lie outside [1, d)");
  if (n_param == dim && !rho.is_constant())
    throw Error(ErrorCode::InvalidN, "N = d requires a constant weight");
}

WeightedDomain make_domain(Polytope body, WeightSpec rho, double kappa, double n_param) {
  const int d = body.dim();
  for (int k = d; k < 3; ++k) {
    if (rho.b[k] != 0.0) throw Error(ErrorCode::InvalidDomain, "weight vector exceeds dim");
    for (int j = 0; j < 3; ++j)
      if (rho.Q(k, j) != 0.0 || rho.Q(j, k) != 0.0) throw Error(ErrorCode::InvalidDomain, "weight matrix exceeds dim");
  }
  if (!rho.Q.allFinite() || !rho.b.allFinite() || !std::isfinite(rho.c) || !std::isfinite(kappa))
    throw Error(ErrorCode::InvalidDomain, "non-finite weight parameters");
  check_n_param(d, n_param, rho);
  for (const auto& v : body.vertices())
    if (!std::isfinite(rho(v))) throw Error(ErrorCode::InvalidDomain, "weight is not finite on the polytope");
  return WeightedDomain{std::move(body), rho, kappa, n_param};
}

double DiscreteMeasure::total_mass() const {
  CompensatedSum s;
  for (double w : weights) s += w;
  return s.value();
}

bool contains_point(const WeightedDomain& domain, const Point& x) { return domain.body.contains(x, 1e-12); }

double diameter(const WeightedDomain& domain) { return domain.body.diameter(); }

namespace {

DiscreteMeasure grid_sample(const WeightedDomain& domain, double h) {
  const auto& P = domain.body;
  const int d = P.dim();
  const Point lo = P.lower();
  const Point hi = P.upper();
  std::array<long, 3> n{1, 1, 1};
  for (int k = 0; k < d; ++k) n[k] = std::max(1L, static_cast<long>(std::ceil((hi[k] - lo[k]) / h - 1e-9)));
  DiscreteMeasure m;
  m.dim = d;
  m.spacing = h;
  const double cell = std::pow(h, d);
  for (long k = 0; k < n[2]; ++k)
    for (long j = 0; j < n[1]; ++j)
      for (long i = 0; i < n[0]; ++i) {
        Point corner = lo;
        corner.x() += i * h;
        if (d > 1) corner.y() += j * h;
        if (d > 2) corner.z() += k * h;
        Point c;
        const double vol = P.clip_cell(corner, h, &c);
        if (vol <= 1e-12 * cell) continue;
        m.points.push_back(c);
        m.weights.push_back(std::exp(-domain.rho(c)) * vol);
      }
  return m;
}

DiscreteMeasure quasi_sample(const WeightedDomain& domain, double h, std::uint64_t seed) {
  const auto& P = domain.body;
  const int d = P.dim();
  // Generalized golden ratio: unique positive root of x^(d+1) = x + 1.
  double phi = 2.0;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (d + 1));
  Point alpha = Point::Zero();
  for (int k = 0; k < d; ++k) alpha[k] = std::fmod(std::pow(1.0 / phi, k + 1), 1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Point shift = Point::Zero();
  for (int k = 0; k < d; ++k) shift[k] = unif(rng);
  const Point lo = P.lower();
  const Point ext = P.upper() - lo;
  double box = 1.0;
  for (int k = 0; k < d; ++k) box *= ext[k];
  const auto target = static_cast<std::size_t>(std::ceil(P.volume() / std::pow(h, d)));
  DiscreteMeasure m;
  m.dim = d;
  m.spacing = h;
  m.seed = seed;
  const std::size_t cap = static_cast<std::size_t>(20.0 * target * box / P.volume()) + 100;
  for (std::size_t s = 1; s <= cap && m.points.size() < target; ++s) {
    Point x = Point::Zero();
    for (int k = 0; k < d; ++k) {
      double u = shift[k] + static_cast<double>(s) * alpha[k];
      u -= std::floor(u);
      x[k] = lo[k] + u * ext[k];
    }
    if (P.contains(x, 0.0)) m.points.push_back(x);
  }
  if (m.points.empty()) return m;
  const double cell = P.volume() / static_cast<double>(m.points.size());
  for (const auto& x : m.points) m.weights.push_back(std::exp(-domain.rho(x)) * cell);
  return m;
}

}  // namespace

DiscreteMeasure sample_measure(const WeightedDomain& domain, SamplingStrategy strategy, double h,
                               std::uint64_t seed) {
  if (!(h > 0) || !std::isfinite(h)) throw Error(ErrorCode::InvalidParams, "resolution must be positive");
  DiscreteMeasure m = strategy == SamplingStrategy::Grid ? grid_sample(domain, h) : quasi_sample(domain, h, seed);
  m.seed = seed;
  if (m.points.empty()) throw Error(ErrorCode::EmptySample, "no sample point landed inside the domain");
  for (double w : m.weights)
    if (!(w > 0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidDomain, "weight exp(-rho) underflows");
  return m;
}

RicciCertificate certify_ricci_bound(const WeightedDomain& domain) {
  const int d = domain.dim();
  const double N = domain.n_param;
  check_n_param(d, N, domain.rho);
  Eigen::MatrixXd Q = domain.rho.Q.topLeftCorner(d, d);
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().minCoeff();
  RicciCertificate cert;
  if (std::isinf(N) && N > 0) {
    cert.infimum = lmin;
    cert.exact = true;
  } else if (N < d) {
    // N - d < 0 makes the gradient term nonnegative.
    cert.infimum = lmin;
  } else if (N == d) {
    cert.infimum = lmin;
  } else {
    double sup = 0.0;
    for (const auto& v : domain.body.vertices()) sup = std::max(sup, domain.rho.gradient(v).squaredNorm());
    cert.infimum = lmin - sup / (N - d);
  }
  cert.margin = cert.infimum - domain.kappa;
  cert.holds = cert.margin >= -1e-12;
  return cert;
}

}  // namespace needle
