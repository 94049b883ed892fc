#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "needle/error.hpp"
#include "needle/format.hpp"
#include "needle/parallel.hpp"
#include "needle/pipeline.hpp"

using namespace needle;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json square_config(const std::string& f, double h) {
  return {{"domain", {{"type", "box"}, {"lo", {0, 0}}, {"hi", {1, 1}}}}, {"f", f}, {"h", h}};
}

ErrorCode error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("needle_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config parsing and its errors") {
  const RunConfig c = parse_config({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 2}}},
                                    {"N", "inf"},
                                    {"kappa", 0},
                                    {"f", "x1 - 1"},
                                    {"h", 0.05},
                                    {"tolerances", {{"cd", 0.3}}}});
  CHECK(c.domain.dim() == 1);
  CHECK(std::isinf(c.domain.n_param));
  CHECK(c.h == 0.05);
  CHECK(c.cd_tol() == 0.3);
  CHECK(c.tau() == doctest::Approx(0.025));
  CHECK(c.f(Point(0.25, 0, 0)) == doctest::Approx(-0.75));

  const RunConfig w = parse_config({{"domain", {{"type", "box"}, {"lo", {0, 0}}, {"hi", {1, 1}}}},
                                    {"weight", {{"Q", {{1, 0}, {0, 2}}}, {"b", {0.5, 0}}}},
                                    {"kappa", 1},
                                    {"N", "inf"}});
  CHECK(w.domain.rho(Point(1, 1, 0)) == doctest::Approx(0.5 + 1 + 0.5));

  auto cfg = [](json j) { return [j] { parse_config(j); }; };
  CHECK(error_of(cfg({{"domain", {{"type", "box"}, {"lo", {0, 0}}, {"hi", {1, 1}}}}, {"fx", "x1"}})) ==
        ErrorCode::ConfigError);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", "x2"}})) ==
        ErrorCode::ConfigError);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"N", "many"}})) ==
        ErrorCode::ConfigError);
  CHECK(error_of(cfg({{"domain", {{"type", "blob"}}}})) == ErrorCode::ConfigError);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"h", -1}})) ==
        ErrorCode::ConfigError);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"tolerances", {{"gap", 0}}}})) ==
        ErrorCode::ConfigError);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", "x1 +"}})) ==
        ErrorCode::SyntaxError);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 1}, {"b", 1}}}})) == ErrorCode::InvalidDomain);
  CHECK(error_of(cfg({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"set", {{"type", "ball"}}}})) ==
        ErrorCode::ConfigError);
}

TEST_CASE("exit codes follow the error class") {
  CHECK(exit_code(ErrorCode::ConfigError) == 1);
  CHECK(exit_code(ErrorCode::SyntaxError) == 1);
  CHECK(exit_code(ErrorCode::InvalidN) == 1);
  CHECK(exit_code(ErrorCode::DegenerateInstance) == 2);
  CHECK(exit_code(ErrorCode::NumericalFailure) == 2);
  CHECK(exit_code(ErrorCode::CertificateFailure) == 3);
  CHECK(exit_code(ErrorCode::HypothesisViolated) == 3);
}

TEST_CASE("left/right indicator decomposes with most mass on certified rays") {
  const RunConfig c = parse_config(square_config("(0.5 - x1) / abs(0.5 - x1)", 0.02));
  const DecomposeResult r = run_decompose(c);
  CHECK(r.certified);
  CHECK(r.foliation.ledger.ray_total >= 0.95 * r.foliation.ledger.total_mass);
  CHECK(r.ledger_error <= 1e-12);
  REQUIRE(r.needles.size() >= 45);
  for (const auto& nc : r.needles) {
    CHECK(nc.cd.pass);
    CHECK(nc.zero_residual <= 0.05);
  }
  for (const auto& v : decompose_verdicts(c, r)) CHECK_MESSAGE(v.pass, v.name);
}

TEST_CASE("1D sign function gives a single ray over the whole interval") {
  const RunConfig c =
      parse_config({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", "(x1 - 0.5)/abs(x1 - 0.5)"}, {"h", 0.01}});
  const DecomposeResult r = run_decompose(c);
  REQUIRE(r.foliation.rays.size() == 1);
  const auto& ray = r.foliation.rays[0];
  CHECK(ray.t_max - ray.t_min == doctest::Approx(1.0).epsilon(1e-9));
  REQUIRE(r.needles.size() == 1);
  CHECK(r.needles[0].cd.pass);
  CHECK(r.needles[0].zero_residual <= 0.05);
}

TEST_CASE("vanishing f is a degenerate instance") {
  const RunConfig c = parse_config(square_config("3", 0.05));
  CHECK(error_of([&] { run_decompose(c); }) == ErrorCode::DegenerateInstance);
}

TEST_CASE("CSV column input matches the expression") {
  const RunConfig by_expr =
      parse_config({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", "(x1 - 0.3)/abs(x1 - 0.3)"}, {"h", 0.02}});
  const DiscreteMeasure m = sample_measure(by_expr.domain, SamplingStrategy::Grid, 0.02);
  const fs::path dir = scratch("csv");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "f.csv");
    out << "index,f\n";
    for (std::size_t i = 0; i < m.size(); ++i) out << i << "," << fmt_num(by_expr.f(m.points[i])) << "\n";
  }
  const RunConfig by_csv = parse_config(
      {{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", {{"csv", "f.csv"}, {"column", "f"}}}, {"h", 0.02}},
      dir);
  REQUIRE(by_csv.f_values.size() == m.size());
  const auto a = run_decompose(by_expr), b = run_decompose(by_csv);
  CHECK(rays_json(a.foliation) == rays_json(b.foliation));
  CHECK(needles_csv(a.needles) == needles_csv(b.needles));
  CHECK(cd_report_csv(a.needles) == cd_report_csv(b.needles));

  const RunConfig short_csv = parse_config(
      {{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", {{"csv", "f.csv"}}}, {"h", 0.01}}, dir);
  CHECK(error_of([&] { run_decompose(short_csv); }) == ErrorCode::ConfigError);
  CHECK(error_of([&] {
          parse_config({{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", {{"csv", "f.csv"}, {"column", "g"}}}},
                       dir);
        }) == ErrorCode::ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("artifacts are identical across thread counts") {
  RunConfig c = parse_config(square_config("x1 - x2^2 - 0.1*sin(5*x2)", 0.04));
  set_thread_count(1);
  const Artifacts one = decompose_artifacts(c, run_decompose(c));
  set_thread_count(8);
  const Artifacts eight = decompose_artifacts(c, run_decompose(c));
  set_thread_count(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  REQUIRE(one.size() == eight.size());
  for (const auto& [name, content] : one) CHECK_MESSAGE(content == eight.at(name), name);
  CHECK(one.count("foliation.svg") == 1);
}

TEST_CASE("artifact files are written atomically") {
  const fs::path dir = scratch("atomic");
  write_artifacts(dir, {{"a.json", "{}\n"}, {"b.csv", "x\n1\n"}});
  CHECK(slurp(dir / "a.json") == "{}\n");
  CHECK(slurp(dir / "b.csv") == "x\n1\n");
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++files;
    CHECK(e.path().extension() != ".tmp");
  }
  CHECK(files == 2);

  // A directory squatting on the target name makes the rename fail.
  fs::create_directories(dir / "c.csv" / "inner");
  CHECK(error_of([&] { write_artifacts(dir, {{"c.csv", "y\n"}}); }) == ErrorCode::IoError);
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".tmp");
  fs::remove_all(dir);
}

TEST_CASE("summary and ray JSON carry the ledger") {
  const RunConfig c = parse_config(square_config("(0.5 - x1) / abs(0.5 - x1)", 0.05));
  const DecomposeResult r = run_decompose(c);
  const json s = json::parse(summary_json(c, r));
  CHECK(s["mass"]["total"].get<double>() ==
        doctest::Approx(s["mass"]["rays"].get<double>() + s["mass"]["residual"].get<double>()).epsilon(1e-12));
  CHECK(s["ricci"]["N"] == "inf");
  CHECK(s["certificates"]["all"] == true);
  const json rays = json::parse(rays_json(r.foliation));
  REQUIRE(rays.size() == r.foliation.rays.size());
  for (const auto& ray : rays) {
    CHECK(ray["t_max"].get<double>() > ray["t_min"].get<double>());
    CHECK(ray["member_count"].get<int>() >= 2);
  }
  const std::string csv = cd_report_csv(r.needles);
  CHECK(csv.rfind("ray_id,pass,min_residual,worst_t\n", 0) == 0);
}

TEST_CASE("Feldman-McCann sweep is deterministic and within the bound") {
  const auto a = feldman_mccann_sweep(2, 2000, 5), b = feldman_mccann_sweep(2, 2000, 5);
  CHECK(a.admissible == 2000);
  CHECK(a.draws == b.draws);
  CHECK(a.max_ratio == b.max_ratio);
  CHECK(a.violations == 0);
  CHECK(a.max_ratio <= 10.0);
  const auto c = feldman_mccann_sweep(3, 2000, 5);
  CHECK(c.admissible == 2000);
  CHECK(c.violations == 0);
}

TEST_CASE("subcommand runners") {
  SUBCASE("poincare on the interval extremal") {
    const RunConfig c = parse_config(
        {{"domain", {{"type", "interval"}, {"a", 0}, {"b", 1}}}, {"f", "cos(3.141592653589793*x1)"}, {"h", 0.002}});
    const auto v = run_poincare(c);
    REQUIRE(v.size() == 1);
    CHECK(v[0].pass);
    CHECK(v[0].values.at("ratio") == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("needle1d Gaussian profile") {
    const RunConfig c = parse_config({{"needle", {{"kappa", 1}, {"N", "inf"}, {"a", "-inf"}, {"b", "inf"}}},
                                      {"D", "inf"},
                                      {"t", 0.5},
                                      {"eps", 0.1}});
    Needle tab;
    const auto v = run_needle1d(c, &tab);
    REQUIRE(v.size() == 4);
    for (const auto& x : v) CHECK_MESSAGE(x.pass, x.name);
    CHECK(v[3].lhs == doctest::Approx(0.5398).epsilon(1e-3));
    CHECK(tab.t.size() > 100);
  }
  SUBCASE("iso, buser and four functions") {
    json j = square_config("x1 - 0.5", 0.05);
    j["set"] = {{"type", "half_space"}, {"normal", {1, 0}}, {"offset", 0.5}};
    j["eps"] = 0.1;
    j["radius"] = 1.0;
    j["functions"] = {"1 + x1", "1 + x2", "2 + x1", "2 + x2"};
    const RunConfig c = parse_config(j);
    CHECK(run_iso(c)[0].pass);
    const auto b = run_buser(c);
    CHECK(b[0].pass);
    CHECK(b[0].values.at("c") == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(run_fourfn(c)[0].pass);
  }
  SUBCASE("fmc") {
    const RunConfig c = parse_config({{"trials", 500}, {"dims", {2, 3}}});
    const auto v = run_fmc(c);
    REQUIRE(v.size() == 2);
    CHECK(v[0].pass);
    CHECK(v[1].pass);
    CHECK(v[0].name == "feldman_mccann_d2");
  }
}
