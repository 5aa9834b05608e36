#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "brw/test_function.hpp"

namespace brw {

/// d_t rho = sigma2 Lap rho + r_net rho on R^dim.
struct PdeProblem {
  double sigma2 = 1.0;
  double r_net = 0.0;
  int dim = 2;
};

/// Exact solution for gaussian initial data A exp(-|x-c|^2/(2 s^2)).
double gaussian_solution(const PdeProblem& problem, const TestFunction& rho0, double t,
                         std::span<const double> x);

/// The solution at time t is again a gaussian; returns its (A', s', c).
TestFunction evolve_gaussian(const PdeProblem& problem, const TestFunction& rho0, double t);

/// Integral of the product of two gaussians over R^dim (both centers must be set).
double gaussian_overlap(const TestFunction& f, const TestFunction& g, int dim);

/// Regular node grid: node i_k sits at lower[k] + i_k h, i_k in [0, counts[k]).
struct GridSpec {
  std::vector<double> lower;
  std::vector<std::size_t> counts;
  double h = 0.1;

  int dim() const { return static_cast<int>(counts.size()); }
  std::size_t size() const;
  void node(std::size_t flat, std::span<double> out) const;

  /// Grid covering [center - half_width, center + half_width] in every coordinate.
  static GridSpec centered(std::span<const double> center, double half_width, double h);
};

struct DensityField {
  GridSpec grid;
  std::vector<double> values;
  double time = 0.0;
};

DensityField sample_field(const GridSpec& grid, const TestFunction& f, double t = 0.0);
DensityField gaussian_field(const PdeProblem& problem, const TestFunction& rho0, double t,
                            const GridSpec& grid);

enum class Boundary { zero_flux, dirichlet };

/// Largest stable explicit step, h^2 / (4 sigma2 dim).
double max_stable_dt(const PdeProblem& problem, double h);

/// Explicit central differences from `initial` up to time T. The step is shrunk so that
/// an integer number of steps lands on T.
DensityField fd_solve(const PdeProblem& problem, const DensityField& initial, double horizon, double dt,
                      Boundary boundary = Boundary::zero_flux);

/// Node-rule quadrature h^dim sum_i f_i (g(x_i)).
double integrate(const DensityField& field);
double integrate_against(const DensityField& field, const TestFunction& g);

}  // namespace brw
