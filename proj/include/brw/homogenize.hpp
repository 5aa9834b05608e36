#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "brw/geometry.hpp"
#include "brw/test_function.hpp"

namespace brw {

// ---- Random-walk generator on V/N and the uniform measure mu_N = N^{-n} sum_x delta_{x/N} ----

/// (L^N f)(x) = N^2 sum_y r(x,y) (f(y) - f(x)).
std::vector<double> apply_generator(const RateGraph& graph, double scale, std::span<const double> f);
void apply_generator(const RateGraph& graph, double scale, std::span<const double> f,
                     std::span<double> out);

/// Site values f(x/N) of a test function; its center defaults to the macroscopic box center.
std::vector<double> sample_on_sites(const RateGraph& graph, double scale, const TestFunction& g);
std::vector<double> sample_laplacian_on_sites(const RateGraph& graph, double scale,
                                              const TestFunction& g);
/// Test function with a missing center replaced by the macroscopic box center side/(2N).
TestFunction resolve_center(const RateGraph& graph, double scale, const TestFunction& g);

double mu_inner(double scale, int dim, std::span<const double> f, std::span<const double> g);
double mu_l1(double scale, int dim, std::span<const double> f);
double mu_l2(double scale, int dim, std::span<const double> f);

/// |||H|||_N = sqrt(||H||_{L1}^2 + N^{-n} ||H||_{L2} ||L^N H||_{L2}).
double triple_norm(const RateGraph& graph, double scale, std::span<const double> h);

// ---- Effective diffusivity ----

struct CorrectorSolution {
  std::vector<double> psi;
  std::vector<double> direction;
  double sigma2 = 0.0;
  double zero_corrector_energy = 0.0;
  double residual = 0.0;
  std::size_t iterations = 0;
  double side = 0.0;
  std::size_t num_points = 0;
  bool degenerate = false;  // sigma2 below 1e-8 relative to the psi = 0 energy
};

/// E(psi) = 1/(2|V|) sum_x sum_{y~x} r(x,y) (a.(y-x) + psi(y) - psi(x))^2 over directed
/// neighbor lists: the tagged-point average of the Palm functional.
double corrector_energy(const RateGraph& graph, std::span<const double> direction,
                        std::span<const double> psi);

/// Minimizes corrector_energy over psi by Jacobi-preconditioned CG on the normal
/// equations. Requires a periodic, connected graph.
CorrectorSolution solve_corrector(const RateGraph& graph, std::vector<double> direction = {},
                                  double tol = 1e-8, std::size_t max_iter = 0);

struct MsdEstimate {
  double t_max = 0.0;
  std::size_t walkers = 0;
  std::vector<double> second_moments;  // per coordinate, mean over walkers
  double sigma2 = 0.0;                 // mean_k second_moments[k] / (2 t_max)
  double stderr_ = 0.0;
  double sigma2_first = 0.0;  // first coordinate only
  double stderr_first = 0.0;
  std::size_t trapped = 0;  // walkers started on an isolated site
};

/// Independent continuous-time walks with rates r(x,y), displacement unwound across
/// the torus by summing per-jump displacement vectors.
MsdEstimate msd_diffusivity(const RateGraph& graph, double t_max, std::size_t walkers,
                            std::uint64_t seed, unsigned jobs = 1);

// ---- Resolvent regularization ----

struct ResolventSolution {
  double lambda = 0.0;
  double scale = 0.0;
  double sigma2 = 0.0;
  std::vector<double> values;  // G_N^lambda(x/N)
  std::vector<double> source;  // H_N
  std::vector<double> target;  // G(x/N)
  double residual = 0.0;
  std::size_t iterations = 0;
  double l1_distance = 0.0;
  double l2_distance = 0.0;
};

/// Solves (lambda - L^N) u = H_N with H = lambda G - sigma2 Lap G.
ResolventSolution solve_resolvent(const RateGraph& graph, double scale, double lambda,
                                  const TestFunction& g, double sigma2, double tol = 1e-10,
                                  std::size_t max_iter = 0);

/// N^{-n} ||L^N G||_{L2(mu_N)} for each (N, graph) pair.
std::vector<double> generator_l2_decay(std::span<const std::pair<double, const RateGraph*>> graphs,
                                       const TestFunction& g);
double generator_l2_decay(const RateGraph& graph, double scale, const TestFunction& g);

}  // namespace brw
