#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "needle/expr.hpp"
#include "needle/geometry.hpp"

namespace needle {

// Constraint function f on the samples, recentered to have zero mu-mean.
struct SignedData {
  DiscreteMeasure measure;
  std::vector<double> f_values;
  double balance = 0.0;      // |sum f_i w_i| after recentering
  double mean_removed = 0.0;  // mu-mean subtracted from the raw values
};

SignedData make_signed_data(DiscreteMeasure measure, std::vector<double> f_raw);
SignedData make_signed_data(DiscreteMeasure measure, const Expr& f);

struct Atom {
  int index = 0;  // sample index
  Point point = Point::Zero();
  double mass = 0.0;
};

struct SplitAtoms {
  std::vector<Atom> sources;
  std::vector<Atom> sinks;
};

// Positive part of f*mu becomes sources, negative part sinks. Sink masses are
// rescaled by a factor within 1e-9 of one so both totals agree exactly.
SplitAtoms split_signed(const SignedData& data);

struct SolverOptions {
  int block_size = 0;            // network simplex pricing block (0 = auto)
  std::int64_t start_arc = 0;    // first arc scanned; varies the pivot order
  int initial_neighbors = 8;     // nearest-neighbour arcs seeded per atom
  int arcs_per_round = 4;        // violated arcs added per source per round
  double slackness_tol = 1e-10;  // complementary slackness audit (times length scale)
  int max_rounds = 500;
  int multiscale_threshold = 400;   // seed arcs from a coarse solve above this many atoms (0 = off)
};

struct PlanFlow {
  int source = 0;  // sample index
  int sink = 0;    // sample index
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<Atom> sources;
  std::vector<Atom> sinks;
  std::vector<PlanFlow> flows;
  double cost = 0.0;
  // Dual variables (u = -pi) aligned with sources / sinks.
  std::vector<double> source_dual;
  std::vector<double> sink_dual;
  double slackness = 0.0;
  int rounds = 0;
  std::int64_t pivots = 0;
  std::size_t arcs = 0;
};

// Exact optimal plan for cost |x_i - x_j|. Throws NumericalFailure when
// pivoting stalls or the optimality audit fails.
TransportPlan solve_transportation(const std::vector<Atom>& sources, const std::vector<Atom>& sinks,
                                   const SolverOptions& options = {});

struct LipschitzPotential {
  std::vector<double> values;  // u on every sample
  std::vector<Point> generator_points;
  std::vector<double> generator_values;
  double cost = 0.0;
  double objective = 0.0;  // sum u_i f_i w_i
  double gap = 0.0;        // cost - objective
  double lipschitz_violation = 0.0;
  double tightness_violation = 0.0;
};

// Dual potential made globally 1-Lipschitz: c-transform on the sinks, then the
// minimal McShane extension from the sink generators. Throws
// CertificateFailure when tightness, Lipschitz or gap checks fail.
LipschitzPotential recover_potential(const TransportPlan& plan, const SignedData& data);

// u(x) = min_j (u_j + |x - x_j|) over generators.
double eval_potential(const LipschitzPotential& potential, const Point& x);

// Largest u_i - u_j - |x_i - x_j| over all ordered sample pairs.
double lipschitz_violation(const std::vector<Point>& points, const std::vector<double>& u);

std::string plan_csv(const TransportPlan& plan);

}  // namespace needle
