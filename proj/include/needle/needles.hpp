#pragma once

#include <functional>
#include <string>
#include <vector>

#include "needle/foliation.hpp"
#include "needle/spatial.hpp"

namespace needle {

// CD(kappa, N) equality-case densities, with m = N - 1 and w = sqrt(|kappa/m|):
//   kappa/m > 0:  (alpha sin(w t - beta))^m
//   kappa = 0:    (alpha + beta t)^m
//   kappa/m < 0:  (alpha sinh(w t) + beta cosh(w t))^m
//   N infinite:   alpha exp(beta t - kappa t^2 / 2)
struct AffineNeedleSpec {
  double kappa = 0.0;
  double n_param = kInf;
  double alpha = 1.0;
  double beta = 0.0;
  double a = 0.0;  // interval, possibly infinite
  double b = 1.0;
};

enum class AffineRegime { Positive, Zero, Negative, Infinite };
AffineRegime affine_regime(double kappa, double n_param);

struct Needle {
  double a = 0.0;
  double b = 1.0;
  double kappa = 0.0;
  double n_param = kInf;
  bool closed = false;
  AffineNeedleSpec spec;       // closed form
  std::vector<double> t;       // sampled grid, strictly increasing
  std::vector<double> density;
  int ray_id = -1;
  double mass = 0.0;           // trapezoid mass of the samples

  double operator()(double s) const;
  // Psi = -log density with first and second derivatives; closed forms only.
  void psi(double s, double* p, double* dp, double* ddp) const;
};

// Throws InvalidParams when N = 1 or the density is not positive on (a, b).
Needle affine_needle_density(const AffineNeedleSpec& spec);

Needle sampled_needle(std::vector<double> t, std::vector<double> density, double kappa = 0.0,
                      double n_param = kInf);

// Closed forms on infinite intervals are cut where the tail mass falls below
// 1e-10 of the total.
Needle tabulate(const Needle& needle, int points = 2001);

struct DensityOptions {
  double bandwidth = 0.0;    // Gaussian kernel along the ray; 0 means 8 h
  double transverse = 0.0;   // Gaussian scale in line space; 0 means 4 h
  double grid_step = 0.0;    // output grid; 0 means h
  double min_alignment = 0.95;
};

// Reflection kernel density estimate of the member masses over
// (t_min, t_max), normalized to the ray mass. Throws TooFewSamples below
// 8 members.
Needle estimate_density(const TransportRay& ray, const DiscreteMeasure& measure, double bandwidth,
                        double grid_step = 0.0);

// Same estimate over all samples, each weighted by a Gaussian in its
// line-space distance to the ray (distance from the ray's end points to the
// line through the sample along the direction field). This averages out
// lattice aliasing. Where the weighted tube leaves the domain each sample
// weight is divided by the fraction of kernel mass inside at its t.
class DensityEstimator {
 public:
  DensityEstimator(const FoliationResult& foliation, const DiscreteMeasure& measure, const WeightedDomain& domain,
                   const DensityOptions& options = {});
  Needle estimate(int ray) const;

 private:
  double line_gap(const TransportRay& ray, const Point& x, const Point& e) const;
  Point field_at(const Point& x) const;

  const FoliationResult& fol_;
  const DiscreteMeasure& measure_;
  const WeightedDomain& domain_;
  DensityOptions opt_;
  double h_, bw_, sigma_, step_;
  GridIndex index_;
};

struct CDReport {
  bool pass = true;
  double min_residual = kInf;
  double worst_t = 0.0;
  int evaluated = 0;
};

// Residual Psi'' - kappa - Psi'^2/(N-1) on interior grid points at least
// `margin` away from the ends. Sampled needles use centered differences.
// Throws NonpositiveDensity.
CDReport check_cd(const Needle& needle, double kappa, double n_param, double tol, double margin = 0.0);

// Largest |Psi'' - kappa - Psi'^2/(N-1)| of a closed form over `points`
// interior points of its (finite) support. Throws InvalidParams for sampled needles.
double equality_residual(const Needle& needle, int points = 200);

// Quadrature of f(ray(t)) density over (a, b) divided by that of |f| density.
double check_zero_integral(const Needle& needle, const TransportRay& ray, const std::function<double(const Point&)>& f);

// f*(s) = inf_t g(s + t) / f(t), g(t) = (sin(sqrt(kappa/N) t) 1[0,pi])^N, over
// grid points with finite f. Throws InvalidParams unless kappa/N > 0.
std::vector<double> needle_transform(const std::vector<double>& t, const std::vector<double>& f, double kappa,
                                     double n_param, const std::vector<double>& s);
std::vector<double> needle_transform(const Needle& needle, double kappa, double n_param, const std::vector<double>& s);

// Smallest nonzero eigenvalue of -(f u')' = lambda f u with Neumann ends.
double spectral_gap_1d(const Needle& needle, int cells = 2000);

struct FamilySearch {
  int shapes = 25;       // values of the shape parameter; odd keeps the symmetric member
  int positions = 6;     // subinterval placements
  int cells = 600;       // per spectral solve
};

// Minimum over affine needles supported in (0, D); an upper bound.
double lambda_knd(double kappa, double n_param, double D, const FamilySearch& search = {});

// Minimum over affine needles and half-lines of the mass of the eps
// neighbourhood of a set of mass t; an upper bound.
double iso_profile(double kappa, double n_param, double D, double t, double eps, const FamilySearch& search = {});

struct BobkovCurve {
  std::vector<double> s;
  std::vector<double> value;
  bool concave = true;
  double max_second_difference = 0.0;
};

BobkovCurve bobkov_i_curve(const Needle& needle, int points = 199);

struct PolyFit {
  std::vector<double> coeffs;  // ascending powers
  double r2 = 1.0;
};

// Least-squares polynomial fit. Samples whose spread about their mean is
// within `flat_tol` of the mean count as fully explained (r2 = 1).
PolyFit polynomial_fit(const std::vector<double>& t, const std::vector<double>& y, int degree, double flat_tol = 0.0);

}  // namespace needle
