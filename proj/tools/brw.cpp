// brw: command-line front end for the branching-random-walk toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "brw/dynamics.hpp"
#include "brw/errors.hpp"
#include "brw/format.hpp"
#include "brw/geometry.hpp"
#include "brw/graph_io.hpp"
#include "brw/harness.hpp"
#include "brw/homogenize.hpp"
#include "brw/parallel.hpp"
#include "brw/pde.hpp"

using namespace brw;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

struct GenGraphArgs {
  double gamma = 1.0, side = 20.0, cutoff = 15.0, alpha = 1.5, beta = 1.0, tau = 3.0;
  int dim = 2;
  std::uint64_t seed = 1;
  std::string percolation = "none", topology = "free", out;
  bool palm = false;
};

int gen_graph(const GenGraphArgs& a) {
  PointCloud cloud = sample_poisson_cloud(a.gamma, a.side, a.dim, parse_topology(a.topology), a.seed);
  if (a.palm) cloud = palm_condition(cloud);
  RateGraph graph = build_graph(cloud, a.cutoff);
  const std::uint64_t perc_seed = stream_seed(a.seed, 0x2000);
  switch (parse_percolation(a.percolation)) {
    case PercolationKind::none: break;
    case PercolationKind::long_range: graph = percolate_long_range(graph, a.alpha, a.beta, perc_seed); break;
    case PercolationKind::scale_free: graph = percolate_scale_free(graph, a.alpha, a.beta, a.tau, perc_seed); break;
  }
  write_graph(a.out, graph);
  std::cerr << graph.num_sites() << " points, " << graph.num_directed_edges() << " directed edges, "
            << component_count(graph) << " connected components\n";
  return 0;
}

struct SimulateArgs {
  std::string graph, ic = "const:1", obs_times, out;
  std::vector<std::string> testfns;
  double scale = 1.0, b = 0.0, d = 0.0, horizon = 1.0;
  std::size_t replicas = 1;
  bool ghosts = false;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

int simulate(const SimulateArgs& a) {
  const RateGraph graph = read_graph(a.graph);
  const DynamicsParams params{a.scale, a.b, a.d, a.ghosts};
  const InitialCondition ic = InitialCondition::parse(a.ic);
  std::vector<double> grid = a.obs_times.empty() ? std::vector<double>{} : parse_list(a.obs_times);
  grid.push_back(a.horizon);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<SiteObservable> observables;
  const std::vector<std::string> specs = a.testfns.empty() ? std::vector<std::string>{"const:1"} : a.testfns;
  for (std::size_t k = 0; k < specs.size(); ++k)
    observables.push_back(make_observable(graph, params, TestFunction::parse(specs[k]), "g" + std::to_string(k)));

  std::vector<TrajectoryRecord> records(a.replicas);
  parallel_for(a.replicas, a.jobs, [&](std::size_t r) {
    ParticleState state = init_particles(graph, ic, params, stream_seed(a.seed, r));
    records[r] = run(state, a.horizon, observables, grid);
  });

  auto out = open_out(a.out);
  out << "replica,time,observable_id,value,total_alive,jumps,births,deaths,dynkin_residual\n";
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    for (std::size_t k = 0; k < rec.ids.size(); ++k) {
      const auto m = dynkin_residual(rec, k);
      for (std::size_t ti = 0; ti < rec.times.size(); ++ti)
        out << r << ',' << format_double(rec.times[ti]) << ',' << rec.ids[k] << ',' << format_double(rec.values[k][ti])
            << ',' << rec.alive[ti] << ',' << rec.jumps[ti] << ',' << rec.births[ti] << ',' << rec.deaths[ti] << ','
            << format_double(m[ti]) << '\n';
    }
  }
  return 0;
}

struct SigmaArgs {
  std::string graph, method = "corrector", out;
  double tol = 1e-8, t_max = 100.0;
  std::size_t walkers = 1000;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
};

int sigma(const SigmaArgs& a) {
  const RateGraph graph = read_graph(a.graph);
  if (a.method != "corrector" && a.method != "msd" && a.method != "both")
    throw ParameterError("method must be corrector, msd or both");
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  const double side = graph.cloud().side;
  if (a.method == "corrector" || a.method == "both") {
    const auto sol = solve_corrector(graph, {}, a.tol);
    results.push_back({{"sigma2", sol.sigma2},
                       {"stderr", 0.0},
                       {"method", "corrector"},
                       {"residual", sol.residual},
                       {"iterations", sol.iterations},
                       {"L", side},
                       {"num_points", graph.num_sites()},
                       {"zero_corrector_energy", sol.zero_corrector_energy},
                       {"degenerate", sol.degenerate}});
    if (sol.degenerate) std::cerr << "warning: corrector sigma2 is near zero (degenerate diffusion)\n";
  }
  if (a.method == "msd" || a.method == "both") {
    const auto est = msd_diffusivity(graph, a.t_max, a.walkers, a.seed, a.jobs);
    results.push_back({{"sigma2", est.sigma2},
                       {"stderr", est.stderr_},
                       {"method", "msd"},
                       {"residual", nullptr},
                       {"iterations", 0},
                       {"L", side},
                       {"num_points", graph.num_sites()},
                       {"t_max", a.t_max},
                       {"walkers", a.walkers}});
  }
  auto out = open_out(a.out);
  out << (results.size() == 1 ? results.front() : results).dump(2) << "\n";
  return 0;
}

struct ResolventArgs {
  std::string graph, scales = "5,10,20", testfn = "gauss:1,1", out;
  double lambda = 1.0, sigma2 = 0.0, tol = 1e-10;
};

int resolvent_check(const ResolventArgs& a) {
  const RateGraph graph = read_graph(a.graph);
  if (!(a.sigma2 > 0.0)) throw ParameterError("--sigma2 must be positive");
  const TestFunction g = TestFunction::parse(a.testfn);
  auto out = open_out(a.out);
  out << "N,lambda,l2_distance,l1_distance,residual,iterations,generator_decay\n";
  for (double n : parse_list(a.scales)) {
    // One graph serves every N: the macroscopic window is side/N.
    const double window = graph.cloud().side / n;
    const double reach = resolve_center(graph, n, g).support_radius() + graph.cutoff() / n;
    if (g.has_compact_support() && 2.0 * reach > window)
      std::cerr << "warning: N=" << n << ": test function support is not inside the window\n";
    const auto sol = solve_resolvent(graph, n, a.lambda, g, a.sigma2, a.tol);
    out << format_double(n) << ',' << format_double(a.lambda) << ',' << format_double(sol.l2_distance) << ','
        << format_double(sol.l1_distance) << ',' << format_double(sol.residual) << ',' << sol.iterations << ','
        << format_double(generator_l2_decay(graph, n, g)) << '\n';
  }
  return 0;
}

struct PdeArgs {
  double sigma2 = 1.0, rnet = 0.0, horizon = 1.0, h = 0.1, half_width = 0.0;
  int dim = 2;
  std::string rho0 = "gauss:1,1,0", method = "closed", boundary = "zero-flux", out;
};

int pde(const PdeArgs& a) {
  const PdeProblem problem{a.sigma2, a.rnet, a.dim};
  std::vector<double> origin(static_cast<std::size_t>(a.dim), 0.0);
  const TestFunction rho0 = TestFunction::parse(a.rho0).resolved(a.dim, origin);
  const double spread = std::sqrt(rho0.width * rho0.width + 2.0 * a.sigma2 * a.horizon);
  const double half = a.half_width > 0.0 ? a.half_width : rho0.width + 6.0 * spread;
  const GridSpec grid = GridSpec::centered(rho0.center, half, a.h);
  DensityField field;
  if (a.method == "closed") {
    field = gaussian_field(problem, rho0, a.horizon, grid);
  } else if (a.method == "fd") {
    const Boundary bc = a.boundary == "dirichlet" ? Boundary::dirichlet : Boundary::zero_flux;
    field = fd_solve(problem, sample_field(grid, rho0), a.horizon, 0.5 * max_stable_dt(problem, a.h), bc);
  } else {
    throw ParameterError("method must be closed or fd");
  }
  auto out = open_out(a.out);
  for (int k = 0; k < a.dim; ++k) out << 'x' << (k + 1) << ',';
  out << "value\n";
  std::vector<double> x(static_cast<std::size_t>(a.dim));
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    grid.node(i, x);
    for (double c : x) out << format_double(c) << ',';
    out << format_double(field.values[i]) << '\n';
  }
  return 0;
}

struct HydroArgs {
  std::string config, out;
  bool fixed_cloud = false;
  unsigned jobs = 1;
};

int hydro(const HydroArgs& a) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(a.config);
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) std::cerr << "config: " << p << "\n";
    return 2;
  }
  cfg.fixed_cloud = a.fixed_cloud;
  if (!a.out.empty()) cfg.output.dir = a.out;
  RunOptions opts;
  opts.jobs = a.jobs;
  opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
  try {
    const ConvergenceReport rep = run_hydro_experiment(cfg, opts);
    emit_report(rep, cfg.output.dir);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      emit_report(e.partial(), cfg.output.dir);
    } catch (const std::exception& inner) {
      std::cerr << "error: " << inner.what() << "\n";
    }
    return e.stage() == "validate" ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching random walks on Poisson point-process graphs"};
  app.require_subcommand(1);

  GenGraphArgs gg;
  auto* cmd_gg = app.add_subcommand("gen-graph", "Sample a Poisson cloud and write its rate graph");
  cmd_gg->add_option("--gamma", gg.gamma, "Intensity")->capture_default_str();
  cmd_gg->add_option("--side", gg.side, "Box side L")->capture_default_str();
  cmd_gg->add_option("--dim", gg.dim, "Dimension")->capture_default_str();
  cmd_gg->add_option("--cutoff", gg.cutoff, "Edge cutoff R_c")->capture_default_str();
  cmd_gg->add_option("--seed", gg.seed, "Seed")->capture_default_str();
  cmd_gg->add_option("--topology", gg.topology, "free or periodic")->capture_default_str();
  cmd_gg->add_option("--percolation", gg.percolation, "none, longrange or scalefree")->capture_default_str();
  cmd_gg->add_option("--alpha", gg.alpha)->capture_default_str();
  cmd_gg->add_option("--beta", gg.beta)->capture_default_str();
  cmd_gg->add_option("--tau", gg.tau)->capture_default_str();
  cmd_gg->add_flag("--palm", gg.palm, "Add a point at the box center");
  cmd_gg->add_option("--out", gg.out, "Output graph file")->required();

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "Run replicas of the branching random walk");
  cmd_sim->add_option("--graph", sim.graph)->required();
  cmd_sim->add_option("--scale", sim.scale, "N")->capture_default_str();
  cmd_sim->add_option("--b", sim.b, "Birth rate")->capture_default_str();
  cmd_sim->add_option("--d", sim.d, "Death rate")->capture_default_str();
  cmd_sim->add_option("--T", sim.horizon, "Horizon")->capture_default_str();
  cmd_sim->add_option("--ic", sim.ic, "const:M, poisson:RHO or profile:<fn>")->capture_default_str();
  cmd_sim->add_option("--replicas", sim.replicas)->capture_default_str();
  cmd_sim->add_option("--obs-times", sim.obs_times, "Comma list; T is always included");
  cmd_sim->add_option("--testfn", sim.testfns, "Observable test functions (repeatable); default const:1");
  cmd_sim->add_flag("--ghosts", sim.ghosts);
  cmd_sim->add_option("--seed", sim.seed)->capture_default_str();
  cmd_sim->add_option("--jobs", sim.jobs)->capture_default_str();
  cmd_sim->add_option("--out", sim.out)->required();

  SigmaArgs sg;
  auto* cmd_sg = app.add_subcommand("sigma", "Estimate the effective diffusivity");
  cmd_sg->add_option("--graph", sg.graph)->required();
  cmd_sg->add_option("--method", sg.method, "corrector, msd or both")->capture_default_str();
  cmd_sg->add_option("--tol", sg.tol)->capture_default_str();
  cmd_sg->add_option("--tmax", sg.t_max)->capture_default_str();
  cmd_sg->add_option("--walkers", sg.walkers)->capture_default_str();
  cmd_sg->add_option("--seed", sg.seed)->capture_default_str();
  cmd_sg->add_option("--jobs", sg.jobs)->capture_default_str();
  cmd_sg->add_option("--out", sg.out)->required();

  ResolventArgs rv;
  auto* cmd_rv = app.add_subcommand("resolvent-check", "Resolvent and generator diagnostics across scales");
  cmd_rv->add_option("--graph", rv.graph)->required();
  cmd_rv->add_option("--scales", rv.scales)->capture_default_str();
  cmd_rv->add_option("--lambda", rv.lambda)->capture_default_str();
  cmd_rv->add_option("--sigma2", rv.sigma2)->required();
  cmd_rv->add_option("--testfn", rv.testfn)->capture_default_str();
  cmd_rv->add_option("--tol", rv.tol)->capture_default_str();
  cmd_rv->add_option("--out", rv.out)->required();

  PdeArgs pd;
  auto* cmd_pd = app.add_subcommand("pde", "Evaluate the limiting reaction-diffusion solution on a grid");
  cmd_pd->add_option("--sigma2", pd.sigma2)->capture_default_str();
  cmd_pd->add_option("--rnet", pd.rnet)->capture_default_str();
  cmd_pd->add_option("--rho0", pd.rho0)->capture_default_str();
  cmd_pd->add_option("--T", pd.horizon)->capture_default_str();
  cmd_pd->add_option("--grid", pd.h, "Spacing h")->capture_default_str();
  cmd_pd->add_option("--dim", pd.dim)->capture_default_str();
  cmd_pd->add_option("--half-width", pd.half_width, "Default: width + 6 spread");
  cmd_pd->add_option("--method", pd.method, "closed or fd")->capture_default_str();
  cmd_pd->add_option("--boundary", pd.boundary, "zero-flux or dirichlet")->capture_default_str();
  cmd_pd->add_option("--out", pd.out)->required();

  HydroArgs hy;
  auto* cmd_hy = app.add_subcommand("hydro", "Run a hydrodynamic-limit experiment from a config file");
  cmd_hy->add_option("--config", hy.config)->required();
  cmd_hy->add_flag("--fixed-cloud", hy.fixed_cloud);
  cmd_hy->add_option("--jobs", hy.jobs)->capture_default_str();
  cmd_hy->add_option("--out", hy.out, "Output directory; overrides the config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gg->parsed()) return gen_graph(gg);
    if (cmd_sim->parsed()) return simulate(sim);
    if (cmd_sg->parsed()) return sigma(sg);
    if (cmd_rv->parsed()) return resolvent_check(rv);
    if (cmd_pd->parsed()) return pde(pd);
    if (cmd_hy->parsed()) return hydro(hy);
  } catch (const SingularSystemError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
