#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "brw/errors.hpp"
#include "brw/harness.hpp"
#include "brw/pde.hpp"
#include "brw/stats.hpp"

using namespace brw;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::vector<std::string> problems_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  return std::any_of(problems.begin(), problems.end(),
                     [&](const std::string& p) { return p.find(needle) != std::string::npos; });
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("brw_harness_" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmall = R"(# small end-to-end run
[geometry]
gamma = 1
side = 22
cutoff = 3
[dynamics]
birth = 0.5
death = 0.1
T = 0.2
initial = profile:gauss:1,1
scales = 1,2
replicas = 6
obs_times = 0.1
[homogenization]
method = fixed
sigma2 = 2
[observables]
g = gauss:1,1
mass = const:1
[seeds]
root = 42
)";

}  // namespace

TEST_CASE("minimal config gets documented defaults") {
  const auto c = parse("[observables]\ng = gauss:1,1\n");
  CHECK(c.geometry.cutoff == 15.0);
  CHECK(c.homogenization.tol == 1e-8);
  CHECK(c.geometry.topology == Topology::free);
  CHECK(c.homogenization.topology == Topology::periodic);
  CHECK(c.dynamics.scales.empty());
  CHECK(c.dynamics.replicas == 1);
  REQUIRE(c.observables.size() == 1);
  CHECK(c.observables[0].id == "g");
}

TEST_CASE("trailing comments are not part of values") {
  const auto c = parse("[geometry]\ngamma = 2   # intensity\ntopology = periodic ; torus\n[observables]\ng = gauss:1,1 # G\n");
  CHECK(c.geometry.gamma == 2.0);
  CHECK(c.geometry.topology == Topology::periodic);
  CHECK(c.observables[0].fn.width == 1.0);
}

TEST_CASE("margin violations name the scale and the margin") {
  const auto p = problems_of("[geometry]\nside = 20\n[dynamics]\nscales = 1,20\n[observables]\ng = gauss:1,1\n");
  CHECK(mentions(p, "N=1"));
  CHECK(mentions(p, "margin -8"));
  CHECK_FALSE(mentions(p, "N=20"));
}

TEST_CASE("strict schema and collected problems") {
  CHECK(mentions(problems_of("[geometry]\ngama = 1\n[observables]\ng = const:1\n"), "gama"));
  CHECK(mentions(problems_of("[geometri]\nside = 3\n[observables]\ng = const:1\n"), "geometri"));
  const auto p = problems_of("[geometry]\ngamma = -1\ndim = 1\n[dynamics]\nreplicas = 0\n[observables]\ng = const:1\n");
  CHECK(mentions(p, "geometry.gamma"));
  CHECK(mentions(p, "geometry.dim"));
  CHECK(mentions(p, "dynamics.replicas"));
  const auto q = problems_of("[geometry]\nside = abc\ntopology = klein\n[observables]\ng = wave:1\n");
  CHECK(q.size() == 3);
  CHECK(mentions(problems_of("[observables]\n"), "observable"));
}

TEST_CASE("syntax errors carry the line number") {
  const auto p = problems_of("[geometry]\ngamma = 1\nnot a key value line\n");
  REQUIRE(p.size() == 1);
  CHECK(mentions(p, "line 3"));
}

TEST_CASE("config hash changes iff a field changes") {
  const auto base = parse(kSmall);
  CHECK(base.hash() == parse(kSmall).hash());
  CHECK(base.hash().size() == 64);
  std::vector<ExperimentConfig> variants(14, base);
  variants[0].geometry.gamma = 1.5;
  variants[1].geometry.side = 23;
  variants[2].geometry.cutoff = 2.5;
  variants[3].geometry.percolation = PercolationKind::long_range;
  variants[4].dynamics.birth = 0.6;
  variants[5].dynamics.horizon = 0.3;
  variants[6].dynamics.initial = InitialCondition::poisson(1.0);
  variants[7].dynamics.scales.push_back(3);
  variants[8].dynamics.replicas = 7;
  variants[9].homogenization.sigma2 = 2.5;
  variants[10].observables[0].fn.width = 1.1;
  variants[11].root_seed = 43;
  variants[12].output.dir = "elsewhere";
  variants[13].fixed_cloud = true;
  std::vector<std::string> hashes{base.hash()};
  for (const auto& v : variants) hashes.push_back(v.hash());
  std::sort(hashes.begin(), hashes.end());
  CHECK(std::unique(hashes.begin(), hashes.end()) == hashes.end());
}

TEST_CASE("pde reference: growth enters through b - d only") {
  auto a = parse(kSmall);
  auto b = a;
  a.dynamics.birth = 0.7;
  a.dynamics.death = 0.2;
  b.dynamics.birth = 0.5;
  b.dynamics.death = 0.0;
  const auto g = TestFunction::gaussian(1.0, 1.0);
  CHECK(pde_reference(a, 3.0, g) == pde_reference(b, 3.0, g));
}

TEST_CASE("pde reference: the intensity multiplies the initial density") {
  auto c = parse(kSmall);
  c.dynamics.initial = InitialCondition::from_profile(TestFunction::gaussian(2.0, 1.0));
  c.dynamics.horizon = 0.5;
  c.dynamics.birth = 0.7;
  c.dynamics.death = 0.2;
  c.geometry.gamma = 1.0;
  const auto g = TestFunction::gaussian(1.0, 1.0);
  const double one = pde_reference(c, 3.0, g);
  c.geometry.gamma = 2.0;
  CHECK(pde_reference(c, 3.0, g) == doctest::Approx(2.0 * one).epsilon(1e-14));

  // Independent quadrature of G against the closed-form density gamma rho(T).
  const std::vector<double> center{11.0, 11.0};
  const PdeProblem p{3.0, 0.5, 2};
  const auto rho0 = TestFunction::gaussian(2.0 * 2.0, 1.0, center);
  const auto grid = GridSpec::centered(center, 11.0, 0.02);
  const auto gc = g.resolved(2, center);
  CHECK(pde_reference(c, 3.0, g) == doctest::Approx(integrate_against(gaussian_field(p, rho0, 0.5, grid), gc)).epsilon(1e-6));
}

TEST_CASE("pde reference: finite-difference path conserves and grows mass") {
  auto c = parse(kSmall);
  c.dynamics.initial = InitialCondition::from_profile(TestFunction::bump(1.5, 2.0));
  c.dynamics.birth = 0.4;
  c.dynamics.death = 0.1;
  c.dynamics.horizon = 0.2;
  const double mass = pde_reference(c, 2.0, TestFunction::constant(1.0));
  CHECK(mass == doctest::Approx(std::exp(0.3 * 0.2) * TestFunction::bump(1.5, 2.0).integral(2)).epsilon(2e-3));
  // Gaussian data against a bump observable uses grid quadrature of the closed form.
  c.dynamics.initial = InitialCondition::from_profile(TestFunction::gaussian(1.0, 1.0));
  const double bump_ref = pde_reference(c, 2.0, TestFunction::bump(1.0, 1.0));
  CHECK(bump_ref > 0.0);
  CHECK(bump_ref < pde_reference(c, 2.0, TestFunction::constant(1.0)));
}

TEST_CASE("end-to-end run is deterministic and well-formed") {
  const auto cfg = parse(kSmall);
  const auto a = run_hydro_experiment(cfg);
  const auto b = run_hydro_experiment(cfg);
  CHECK(a.complete);
  REQUIRE(a.scales.size() == 2);
  CHECK(a.scales[1].num_points > a.scales[0].num_points);
  const auto da = scratch("a"), db = scratch("b");
  emit_report(a, da.string());
  emit_report(b, db.string());
  for (const char* f : {"trajectories.csv", "errors.csv", "report.json"}) CHECK(slurp(da / f) == slurp(db / f));

  const auto errors = slurp(da / "errors.csv");
  CHECK(errors.rfind("N,mean,stderr,pde_ref,rel_error\n", 0) == 0);
  CHECK(std::count(errors.begin(), errors.end(), '\n') == 3);
  const auto traj = slurp(da / "trajectories.csv");
  // 2 scales x 6 replicas x 2 times x 2 observables, plus the header.
  CHECK(std::count(traj.begin(), traj.end(), '\n') == 1 + 2 * 6 * 2 * 2);

  const auto report = nlohmann::json::parse(slurp(da / "report.json"));
  CHECK(report["complete"] == true);
  CHECK(report["sigma2"]["method"] == "fixed");
  CHECK(report["scales"].size() == 2);
  CHECK(report["config_hash"] == cfg.hash());
  const auto manifest = slurp(da / "MANIFEST");
  CHECK(manifest.find("config_hash=" + cfg.hash()) != std::string::npos);
  CHECK(manifest.find("complete=true") != std::string::npos);
  CHECK(manifest.find("root_seed=42") != std::string::npos);

  for (const auto& sc : a.scales) {
    const auto& st = sc.observables[0];
    CHECK(st.rel_error == doctest::Approx(std::abs(st.mean - st.pde_ref) / std::abs(st.pde_ref)));
    // Replica order does not matter.
    std::vector<double> finals;
    for (const auto& rec : sc.replicas) finals.push_back(rec.values[0].back());
    std::reverse(finals.begin(), finals.end());
    const auto ms = mean_stderr(finals);
    CHECK(std::abs(ms.mean - st.mean) <= 1e-12 * std::abs(st.mean));
    CHECK(std::abs(ms.stderr_ - st.stderr_) <= 1e-12 * st.stderr_);
  }
}

TEST_CASE("conservation: the constant observable stays put without branching") {
  auto cfg = parse(kSmall);
  cfg.dynamics.birth = 0.0;
  cfg.dynamics.death = 0.0;
  const auto rep = run_hydro_experiment(cfg);
  for (const auto& sc : rep.scales)
    for (const auto& rec : sc.replicas) {
      CHECK(rec.values[1].front() == rec.initial[1]);
      CHECK(rec.values[1].back() == rec.initial[1]);
      CHECK(rec.births.back() == 0);
    }
}

TEST_CASE("empty scale list gives an empty error table") {
  auto cfg = parse(kSmall);
  cfg.dynamics.scales.clear();
  const auto rep = run_hydro_experiment(cfg);
  const auto dir = scratch("empty");
  emit_report(rep, dir.string());
  CHECK(slurp(dir / "errors.csv") == "N,mean,stderr,pde_ref,rel_error\n");
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(j["scales"].empty());
}

TEST_CASE("fixed-cloud mode nests the clouds") {
  auto cfg = parse(kSmall);
  cfg.fixed_cloud = true;
  const auto rep = run_hydro_experiment(cfg);
  REQUIRE(rep.scales.size() == 2);
  CHECK(rep.scales[0].num_points < rep.scales[1].num_points);
}

TEST_CASE("resolvent-corrected observables are reported alongside") {
  auto cfg = parse(kSmall);
  cfg.homogenization.resolvent_lambda = 1.0;
  const auto rep = run_hydro_experiment(cfg);
  REQUIRE(rep.observable_ids.size() == 4);
  CHECK(rep.observable_ids[2] == "g@resolvent");
  CHECK(rep.scales[0].observables.size() == 4);
}

TEST_CASE("stage failures carry a partial report") {
  auto cfg = parse(kSmall);
  cfg.homogenization.method = "corrector";
  cfg.homogenization.side = 30.0;
  cfg.geometry.gamma = 0.02;
  try {
    run_hydro_experiment(cfg);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "sigma2");
    CHECK_FALSE(e.partial().complete);
    const auto dir = scratch("partial");
    emit_report(e.partial(), dir.string());
    CHECK(slurp(dir / "MANIFEST").find("complete=false") != std::string::npos);
    CHECK(slurp(dir / "MANIFEST").find("failed_stage=sigma2") != std::string::npos);
  }
}

TEST_CASE("unwritable output directory") {
  const auto base = scratch("file");
  fs::create_directories(base);
  std::ofstream(base / "blocker") << "x";
  const auto rep = run_hydro_experiment([] {
    auto c = parse(kSmall);
    c.dynamics.scales.clear();
    return c;
  }());
  CHECK_THROWS(emit_report(rep, (base / "blocker" / "out").string()));
}
