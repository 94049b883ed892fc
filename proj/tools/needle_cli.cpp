// needle: command-line front end for decompositions and inequality checks.
#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "needle/error.hpp"
#include "needle/format.hpp"
#include "needle/parallel.hpp"
#include "needle/pipeline.hpp"

using namespace needle;

namespace {

struct Flags {
  std::string config;
  std::string out = "out";
  std::optional<double> h;
  std::optional<std::uint64_t> seed;
  std::optional<long> trials;
  int threads = 0;
  std::map<std::string, std::optional<double>> tol;
};

int report(const std::vector<InequalityVerdict>& verdicts) {
  bool ok = true;
  for (const auto& v : verdicts) {
    std::cout << v.name << ": " << v.status << " (lhs " << v.lhs << ", rhs " << v.rhs << ")\n";
    ok = ok && v.pass;
  }
  return ok ? 0 : 3;
}

int run(const std::string& cmd, const Flags& flags) {
  RunConfig c = load_config(flags.config);
  if (flags.h) {
    if (!(*flags.h > 0)) throw Error(ErrorCode::ConfigError, "--h must be positive");
    c.h = *flags.h;
  }
  if (flags.seed) c.seed = *flags.seed;
  if (flags.trials) c.trials = *flags.trials;
  const std::map<std::string, double*> slots = {
      {"tau", &c.tol.tau}, {"gap", &c.tol.gap},   {"lipschitz", &c.tol.lipschitz}, {"ledger", &c.tol.ledger},
      {"cd", &c.tol.cd},   {"zero", &c.tol.zero}, {"r2", &c.tol.r2},               {"inequality", &c.tol.inequality}};
  for (const auto& [name, value] : flags.tol) {
    if (!value) continue;
    if (!(*value > 0)) throw Error(ErrorCode::ConfigError, "--tol-" + name + " must be positive");
    *slots.at(name) = *value;
  }

  Artifacts files;
  int code = 0;
  if (cmd == "decompose" || cmd == "verify") {
    const DecomposeResult r = run_decompose(c);
    files = decompose_artifacts(c, r);
    const auto& L = r.foliation.ledger;
    std::cout << "rays " << r.foliation.rays.size() << ", needles " << r.needles.size() << ", residual mass "
              << L.residual_mass / L.total_mass << ", duality gap " << r.potential.gap << "\n";
    if (cmd == "verify") {
      const auto verdicts = decompose_verdicts(c, r);
      files["verdicts.json"] = verdicts_json(verdicts);
      code = report(verdicts);
    } else {
      code = r.certified ? 0 : 3;
    }
  } else if (cmd == "needle1d") {
    Needle tab;
    const auto verdicts = run_needle1d(c, &tab);
    std::string csv = "t,density\n";
    for (std::size_t k = 0; k < tab.t.size(); ++k) csv += fmt_num(tab.t[k]) + "," + fmt_num(tab.density[k]) + "\n";
    files["needle.csv"] = csv;
    files["verdicts.json"] = verdicts_json(verdicts);
    code = report(verdicts);
  } else {
    std::vector<InequalityVerdict> verdicts;
    if (cmd == "poincare") verdicts = run_poincare(c);
    if (cmd == "iso") verdicts = run_iso(c);
    if (cmd == "buser") verdicts = run_buser(c);
    if (cmd == "fourfn") verdicts = run_fourfn(c);
    if (cmd == "fmc") verdicts = run_fmc(c);
    files["verdicts.json"] = verdicts_json(verdicts);
    code = report(verdicts);
  }
  write_artifacts(flags.out, files);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Needle decompositions of weighted convex domains"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, std::string> help = {
      {"decompose", "Transport, foliation and needle densities; writes rays.json, needles.csv, cd_report.csv, "
                    "summary.json, plan.csv and foliation.svg (2D)"},
      {"verify", "decompose plus certificate verdicts in verdicts.json"},
      {"poincare", "Poincare inequality for f"},
      {"iso", "Isoperimetric inequality for a set"},
      {"buser", "Buser-Milman inequality for a set"},
      {"fourfn", "Four-functions inequality"},
      {"fmc", "Feldman-McCann ratio sweep"},
      {"needle1d", "Checks on one affine needle"}};
  const std::vector<std::string> tols = {"tau", "gap", "lipschitz", "ledger", "cd", "zero", "r2", "inequality"};
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->set_help_flag("--help", "Print this help message and exit");
    sub->add_option("--config", flags.config, "JSON config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory")->capture_default_str();
    sub->add_option("--h", flags.h, "Grid spacing");
    sub->add_option("--seed", flags.seed, "Random seed");
    sub->add_option("--threads", flags.threads, "Worker thread cap (results do not depend on it)");
    sub->add_option("--trials", flags.trials, "Admissible configurations per dimension (fmc)");
    for (const auto& t : tols) sub->add_option("--tol-" + t, flags.tol[t], "Override tolerance " + t);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (flags.threads > 0) set_thread_count(flags.threads);
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run(cmd, flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
