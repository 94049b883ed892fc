#pragma once

#include <array>
#include <vector>

#include "needle/geometry.hpp"
#include "needle/transport.hpp"

namespace needle {

// Directed edges i -> j with u_i > u_j and u_i - u_j >= |x_i - x_j| - tau,
// stored in compressed rows both ways.
struct TightGraph {
  int n = 0;
  double tau = 0.0;
  double radius = kInf;  // pairs farther apart are not examined
  std::vector<Point> points;
  std::vector<int> out_offsets, out_targets;
  std::vector<int> in_offsets, in_sources;

  int out_degree(int i) const { return out_offsets[i + 1] - out_offsets[i]; }
  int in_degree(int i) const { return in_offsets[i + 1] - in_offsets[i]; }
  std::size_t edge_count() const { return out_targets.size(); }
};

TightGraph build_tight_graph(const std::vector<double>& u, const DiscreteMeasure& measure, double tau,
                             double radius = kInf);

// Samples with an incoming edge z -> y and an outgoing edge y -> x such that
// |z - y| + |y - x| - |z - x| <= tau. Ascending.
std::vector<int> strain_points(const TightGraph& graph);

struct TransportRay {
  int id = 0;
  Point base = Point::Zero();       // projection of the representative onto the fitted line
  Point direction = Point::Zero();  // unit, pointing toward increasing u
  double t_min = 0.0;               // ray interval after outward extension
  double t_max = 0.0;
  double member_t_min = 0.0;
  double member_t_max = 0.0;
  double alpha = 0.0;  // t_rep - t_min with t_rep = 0
  double beta = 0.0;   // t_max - t_rep
  int rep = -1;        // representative sample
  double u_rep = 0.0;
  double mass = 0.0;
  double fit_residual = 0.0;  // largest member distance to the line
  std::vector<int> members;   // ascending t
  std::vector<double> t;      // member coordinates

  Point at(double s) const { return base + s * direction; }
};

struct MassLedger {
  std::vector<double> ray_mass;
  double residual_mass = 0.0;
  double total_mass = 0.0;
  double ray_total = 0.0;
};

struct FoliationOptions {
  double tau = -1.0;          // tightness tolerance; negative means 0.5 h
  double radius = -1.0;       // neighbourhood radius for the tight graph; negative means 3 h
  double bundle_width = -1.0; // line-space clustering width; negative means 0.75 h
  double min_alignment = 0.95;
  int min_members = 2;
  bool extend_bounds = true;
};

struct FoliationResult {
  std::vector<TransportRay> rays;
  std::vector<int> strain;
  std::vector<int> residual;
  std::vector<int> ray_of;          // per sample, -1 on residual
  std::vector<Point> directions;    // per-sample ray direction estimate (strain only)
  std::vector<Point> field;         // fitted ray directions averaged over 2h, every sample
  MassLedger ledger;
  double tau = 0.0;
  double h = 0.0;
};

// Direction of steepest ascent of u at every sample from a least-squares fit
// over neighbours within `radius`.
std::vector<Point> ascent_directions(const std::vector<double>& u, const DiscreteMeasure& measure, double radius);

// Mass-weighted sum of (source - sink) over the flows touching each sample,
// normalized; zero for samples that carry no flow. Flow segments lie on rays,
// so this is insensitive to the non-uniqueness of u across rays.
std::vector<Point> plan_directions(const TransportPlan& plan, std::size_t n);

// `directions` gives per-sample unit directions of increasing u; when empty
// they come from ascent_directions. Zero entries fall back the same way.
FoliationResult extract_rays(const TightGraph& graph, const std::vector<int>& strain, const LipschitzPotential& potential,
                             const DiscreteMeasure& measure, const WeightedDomain& domain,
                             const FoliationOptions& options = {}, const std::vector<Point>& directions = {});

// Full foliation stage: graph, strain points, rays, bounds. Directions come
// from the plan when one is given.
FoliationResult foliate(const LipschitzPotential& potential, const DiscreteMeasure& measure,
                        const WeightedDomain& domain, const FoliationOptions& options = {},
                        const TransportPlan* plan = nullptr);

// Fills result.field from the fitted rays.
void smooth_direction_field(FoliationResult& result, const DiscreteMeasure& measure);

// Extends the member range outward while the potential stays tight; returns
// {alpha, beta} and updates the ray interval. An end that stops within `snap`
// of the domain boundary is moved onto it, since the last sample's cell
// reaches that far.
std::array<double, 2> ray_bounds(const LipschitzPotential& potential, TransportRay& ray, const WeightedDomain& domain,
                                 double tau, double snap = 0.0);

// {alpha, beta} at a sample: ray values for members, -inf off the strain set.
std::array<double, 2> sample_ray_bounds(const FoliationResult& result, int sample);

struct FeldmanMcCannConfig {
  std::array<Point, 3> x;
  std::array<Point, 3> y;
  double sigma = 0.0;
};

struct FeldmanMcCannResult {
  bool admissible = false;
  double ratio = 0.0;
};

FeldmanMcCannResult feldman_mccann_check(const FeldmanMcCannConfig& config);

}  // namespace needle
