#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "needle/error.hpp"
#include "needle/expr.hpp"
#include "needle/foliation.hpp"
#include "needle/geometry.hpp"
#include "needle/inequalities.hpp"
#include "needle/needles.hpp"
#include "needle/transport.hpp"

namespace needle {

struct Tolerances {
  double tau = -1.0;        // tightness; negative means 0.5 h
  double gap = 1e-8;        // duality gap relative to the cost
  double lipschitz = 1e-12;
  double ledger = 1e-12;    // |rays + residual - total|
  double cd = -1.0;         // checkCD; negative means 10 h
  double zero = 0.05;       // normalized zero-integral residual
  double r2 = 0.99;         // polynomial density fit
  double inequality = 1e-3;
};

// Everything a subcommand needs. Fields a subcommand does not use are ignored.
struct RunConfig {
  WeightedDomain domain;
  SamplingStrategy sampling = SamplingStrategy::Grid;
  double h = 0.02;
  std::uint64_t seed = 0;
  Tolerances tol;
  DensityOptions density;
  int min_needle_members = 8;

  // Constraint function: an expression, or per-sample values from a CSV column.
  Expr f;
  std::vector<double> f_values;
  std::string f_label;

  // Inequality inputs.
  SetSpec set;
  double eps = 0.1;
  std::vector<Expr> functions;  // four-functions f1..f4
  double alpha = 1.0;
  double beta = 1.0;
  double c_floor = 0.1;
  double radius = 0.0;
  bool monte_carlo = false;
  int mc_samples = 200000;
  bool needle_certificates = false;

  // Feldman-McCann sweep.
  long trials = 100000;
  std::vector<int> fmc_dims{2, 3};

  // needle1d.
  AffineNeedleSpec needle;
  bool has_needle = false;
  double t = 0.5;
  double D = kInf;

  double cd_tol() const { return tol.cd > 0 ? tol.cd : 10 * h; }
  double tau() const { return tol.tau > 0 ? tol.tau : 0.5 * h; }
};

// Throws ConfigError (or the expression's ParseError) on malformed input.
// Relative CSV paths resolve against base_dir.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

SetSpec parse_set(const nlohmann::json& j, int dim);

struct NeedleCheck {
  int ray_id = 0;
  Needle needle;
  CDReport cd;
  double zero_residual = 0.0;
  double r2 = 1.0;
};

struct DecomposeResult {
  SignedData data;
  TransportPlan plan;
  LipschitzPotential potential;
  FoliationResult foliation;
  std::vector<NeedleCheck> needles;
  RicciCertificate ricci;
  double ledger_error = 0.0;
  bool polynomial_law = false;  // unweighted 2D: degree <= 1 fits are checked
  // Hard certificates: ledger, duality gap, Lipschitz.
  bool certified = false;
};

// geometry -> transport -> foliation -> needles. Throws on module errors;
// failed hard certificates are reported, not thrown.
DecomposeResult run_decompose(const RunConfig& config);

// File name -> contents. JSON and CSV are byte-identical for equal inputs.
using Artifacts = std::map<std::string, std::string>;

Artifacts decompose_artifacts(const RunConfig& config, const DecomposeResult& result);
std::string rays_json(const FoliationResult& foliation);
std::string needles_csv(const std::vector<NeedleCheck>& needles);
std::string cd_report_csv(const std::vector<NeedleCheck>& needles);
std::string summary_json(const RunConfig& config, const DecomposeResult& result);
std::string foliation_svg(const WeightedDomain& domain, const DiscreteMeasure& measure,
                          const FoliationResult& foliation);

// Certificate verdicts of a decomposition: ledger, gap, Lipschitz, CD, zero
// integral and, where it applies, the polynomial density law.
std::vector<InequalityVerdict> decompose_verdicts(const RunConfig& config, const DecomposeResult& result);

std::vector<InequalityVerdict> run_poincare(const RunConfig& config);
std::vector<InequalityVerdict> run_iso(const RunConfig& config);
std::vector<InequalityVerdict> run_buser(const RunConfig& config);
std::vector<InequalityVerdict> run_fourfn(const RunConfig& config);

struct FeldmanMcCannSweep {
  int dim = 2;
  long draws = 0;
  long admissible = 0;
  long violations = 0;  // ratio > 10
  double max_ratio = 0.0;
};

// Rejection sampling: random base points, unit directions and sigma in
// (0.01, 1); draws continue until `admissible` configurations were seen or
// 1000 times that many draws were made.
FeldmanMcCannSweep feldman_mccann_sweep(int dim, long admissible, std::uint64_t seed);
std::vector<InequalityVerdict> run_fmc(const RunConfig& config);

// Affine needle from the config: equality residual, CD check, spectral gap
// against lambda_knd and iso_profile at (t, eps). D defaults to the support length.
std::vector<InequalityVerdict> run_needle1d(const RunConfig& config, Needle* tabulated = nullptr);

// Writes every file to a temporary name in dir, then renames them into place.
// Throws IoError; on failure no artifact is left half-written.
void write_artifacts(const std::filesystem::path& dir, const Artifacts& files);

// Exit code for an error: 1 config, 2 solver, 3 certificate.
int exit_code(ErrorCode code);

}  // namespace needle
