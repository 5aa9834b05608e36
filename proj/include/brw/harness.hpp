#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "brw/dynamics.hpp"
#include "brw/geometry.hpp"
#include "brw/test_function.hpp"

namespace brw {

// Experiment configuration. INI grammar (all keys optional unless noted):
//
//   [geometry]        gamma, side (macroscopic window L; clouds have side L*N), dim, cutoff,
//                     topology (free|periodic), percolation (none|longrange|scalefree),
//                     alpha, beta, tau
//   [dynamics]        birth, death, T, initial (const:M | poisson:RHO | profile:<fn>),
//                     scales (comma list), replicas, obs_times (comma list), ghosts
//   [homogenization]  method (corrector|msd|fixed), sigma2 (fixed only), tol, t_max,
//                     walkers, side, topology, resolvent_lambda (0 disables)
//   [observables]     <id> = <test function spec>, one per line, in output order
//   [seeds]           root
//   [output]          dir, formats (comma list of csv, json)
//
// Lines starting with ';' or '#' are comments. Unknown sections or keys are errors.

struct GeometryConfig {
  double gamma = 1.0;
  double side = 20.0;
  int dim = 2;
  double cutoff = 15.0;
  Topology topology = Topology::free;
  PercolationKind percolation = PercolationKind::none;
  double alpha = 1.5;
  double beta = 1.0;
  double tau = 3.0;
};

struct DynamicsConfig {
  double birth = 0.0;
  double death = 0.0;
  double horizon = 1.0;
  InitialCondition initial = InitialCondition::constant(1);
  std::vector<double> scales;
  std::size_t replicas = 1;
  std::vector<double> obs_times;  // T is always appended
  bool ghosts = false;
};

struct HomogenizationConfig {
  std::string method = "corrector";
  double sigma2 = 0.0;
  double tol = 1e-8;
  double t_max = 100.0;
  std::size_t walkers = 1000;
  double side = 60.0;
  Topology topology = Topology::periodic;
  double resolvent_lambda = 0.0;
};

struct ObservableConfig {
  std::string id;
  TestFunction fn;
};

struct OutputConfig {
  std::string dir = "out";
  std::vector<std::string> formats{"csv", "json"};
};

struct ExperimentConfig {
  GeometryConfig geometry;
  DynamicsConfig dynamics;
  HomogenizationConfig homogenization;
  std::vector<ObservableConfig> observables;
  std::uint64_t root_seed = 1;
  OutputConfig output;
  bool fixed_cloud = false;

  /// Observation grid: obs_times plus T, sorted and deduplicated.
  std::vector<double> observation_grid() const;
  /// Deterministic text rendering of every field; the config hash is taken over this.
  std::string canonical() const;
  /// Hex SHA-256 of canonical().
  std::string hash() const;
};

/// Parse errors carry the line; validation failures are collected and thrown together.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
/// Every violated constraint, empty when the config is valid.
std::vector<std::string> validate(const ExperimentConfig& config);

/// Distance between an observable's effective support and the window boundary, minus
/// the graph range R_c/N. Constant observables have no support constraint (+infinity).
double observable_margin(const ExperimentConfig& config, const TestFunction& g, double scale);

struct ObservableStats {
  std::string id;
  double mean = 0.0;
  double stderr_ = 0.0;
  double pde_ref = 0.0;
  double rel_error = 0.0;
  double dynkin_mean = 0.0;
  double dynkin_stderr = 0.0;
  double scaled_variance = 0.0;  // N^n Var(M_T)
};

struct ScaleResult {
  double scale = 0.0;
  std::size_t num_points = 0;
  std::size_t num_edges = 0;
  std::vector<ObservableStats> observables;
  std::vector<TrajectoryRecord> replicas;
};

struct SigmaProvenance {
  double value = 0.0;
  double stderr_ = 0.0;
  std::string method;
  double sample_side = 0.0;
  std::size_t num_points = 0;
  std::uint64_t seed = 0;
  double residual = 0.0;
  std::size_t iterations = 0;
};

struct ConvergenceReport {
  ExperimentConfig config;
  SigmaProvenance sigma2;
  std::vector<std::string> observable_ids;
  std::vector<double> pde_ref;  // gamma int G rho(T), per observable id
  std::vector<ScaleResult> scales;
  bool complete = false;
  std::string failed_stage;
  std::string error;
};

/// Stage failure; carries whatever was computed before it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what, ConvergenceReport partial)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), partial_(std::move(partial)) {}
  const std::string& stage() const { return stage_; }
  const ConvergenceReport& partial() const { return partial_; }

 private:
  std::string stage_;
  ConvergenceReport partial_;
};

/// Reference value gamma int G(u) rho(T,u) du for the configured initial data. Closed form
/// for gaussian data, finite differences otherwise.
double pde_reference(const ExperimentConfig& config, double sigma2, const TestFunction& g);

struct RunOptions {
  unsigned jobs = 1;
  std::function<void(const std::string&)> log;
};

ConvergenceReport run_hydro_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes report.json, trajectories.csv, errors.csv and MANIFEST into `dir`.
void emit_report(const ConvergenceReport& report, const std::string& dir);

}  // namespace brw
