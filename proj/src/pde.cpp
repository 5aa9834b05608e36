#include "brw/pde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "brw/errors.hpp"

namespace brw {

namespace {

void require_gaussian(const TestFunction& f, int dim) {
  if (f.kind != TestFunction::Kind::gaussian) throw ParameterError("closed form needs gaussian data");
  if (!(f.width > 0.0)) throw ParameterError("gaussian width must be positive");
  if (f.center.size() != static_cast<std::size_t>(dim)) throw ParameterError("gaussian center not resolved");
}

}  // namespace

TestFunction evolve_gaussian(const PdeProblem& problem, const TestFunction& rho0, double t) {
  require_gaussian(rho0, problem.dim);
  if (t < 0.0) throw ParameterError("time must be non-negative");
  const double s2 = rho0.width * rho0.width;
  const double s2t = s2 + 2.0 * problem.sigma2 * t;
  TestFunction out = rho0;
  out.width = std::sqrt(s2t);
  out.amplitude = std::exp(problem.r_net * t) * rho0.amplitude * std::pow(s2 / s2t, 0.5 * problem.dim);
  return out;
}

double gaussian_solution(const PdeProblem& problem, const TestFunction& rho0, double t,
                         std::span<const double> x) {
  if (t == 0.0) return rho0.value(x);
  return evolve_gaussian(problem, rho0, t).value(x);
}

double gaussian_overlap(const TestFunction& f, const TestFunction& g, int dim) {
  require_gaussian(f, dim);
  require_gaussian(g, dim);
  const double a = f.width * f.width;
  const double b = g.width * g.width;
  double d2 = 0.0;
  for (int k = 0; k < dim; ++k) d2 += (f.center[k] - g.center[k]) * (f.center[k] - g.center[k]);
  return f.amplitude * g.amplitude * std::pow(2.0 * std::numbers::pi * a * b / (a + b), 0.5 * dim) *
         std::exp(-d2 / (2.0 * (a + b)));
}

std::size_t GridSpec::size() const {
  std::size_t n = 1;
  for (auto c : counts) n *= c;
  return n;
}

void GridSpec::node(std::size_t flat, std::span<double> out) const {
  for (std::size_t k = counts.size(); k-- > 0;) {
    out[k] = lower[k] + h * static_cast<double>(flat % counts[k]);
    flat /= counts[k];
  }
}

GridSpec GridSpec::centered(std::span<const double> center, double half_width, double h) {
  if (!(h > 0.0) || !(half_width > 0.0)) throw ParameterError("grid spacing and half width must be positive");
  GridSpec g;
  g.h = h;
  const auto half = static_cast<std::size_t>(std::ceil(half_width / h - 1e-9));
  for (double c : center) {
    g.lower.push_back(c - h * static_cast<double>(half));
    g.counts.push_back(2 * half + 1);
  }
  return g;
}

DensityField sample_field(const GridSpec& grid, const TestFunction& f, double t) {
  DensityField out{grid, std::vector<double>(grid.size()), t};
  std::vector<double> x(grid.counts.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    grid.node(i, x);
    out.values[i] = f.value(x);
  }
  return out;
}

DensityField gaussian_field(const PdeProblem& problem, const TestFunction& rho0, double t,
                            const GridSpec& grid) {
  return sample_field(grid, evolve_gaussian(problem, rho0, t), t);
}

double max_stable_dt(const PdeProblem& problem, double h) {
  return h * h / (4.0 * problem.sigma2 * problem.dim);
}

DensityField fd_solve(const PdeProblem& problem, const DensityField& initial, double horizon, double dt,
                      Boundary boundary) {
  if (!(problem.sigma2 > 0.0)) throw ParameterError("diffusivity must be positive");
  if (!(horizon >= 0.0)) throw ParameterError("horizon must be non-negative");
  const GridSpec& grid = initial.grid;
  if (grid.dim() != problem.dim) throw ParameterError("grid dimension differs from problem dimension");
  if (initial.values.size() != grid.size()) throw ParameterError("field size differs from grid size");
  const double dt_max = max_stable_dt(problem, grid.h);
  if (!(dt > 0.0) || dt > dt_max * (1.0 + 1e-12))
    throw ParameterError("dt violates the explicit stability bound; max admissible dt = " +
                         std::to_string(dt_max));
  for (double v : initial.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("initial density must be finite and >= 0");

  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-12));
  const double tau = steps ? horizon / static_cast<double>(steps) : 0.0;
  const double nu = problem.sigma2 * tau / (grid.h * grid.h);
  const double growth = problem.r_net * tau;
  const std::size_t n = grid.size();
  const int dim = grid.dim();

  std::vector<std::size_t> stride(static_cast<std::size_t>(dim));
  std::size_t s = 1;
  for (int k = dim - 1; k >= 0; --k) {
    stride[k] = s;
    s *= grid.counts[k];
  }

  std::vector<double> u = initial.values, next(n);
  const double self = 1.0 + growth - 2.0 * dim * nu;
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t i = 0; i < n; ++i) next[i] = self * u[i];
    // One sweep per axis over contiguous blocks; missing neighbours at the boundary mirror
    // the node itself (zero flux, no mass crosses the face) or read zero (Dirichlet).
    for (int k = 0; k < dim; ++k) {
      const std::size_t st = stride[k], len = grid.counts[k], block = st * len;
      const double edge = boundary == Boundary::zero_flux ? nu : 0.0;
      for (std::size_t o = 0; o < n; o += block) {
        for (std::size_t ik = 0; ik < len; ++ik) {
          const std::size_t base = o + ik * st;
          const double* here = &u[base];
          const double* lo = ik > 0 ? here - st : nullptr;
          const double* hi = ik + 1 < len ? here + st : nullptr;
          double* out = &next[base];
          if (lo && hi) {
            for (std::size_t j = 0; j < st; ++j) out[j] += nu * (lo[j] + hi[j]);
          } else {
            const double* inside = lo ? lo : hi;
            for (std::size_t j = 0; j < st; ++j) out[j] += nu * inside[j] + edge * here[j];
          }
        }
      }
    }
    u.swap(next);
  }
  return DensityField{grid, std::move(u), initial.time + horizon};
}

double integrate(const DensityField& field) {
  double s = 0.0;
  for (double v : field.values) s += v;
  return s * std::pow(field.grid.h, field.grid.dim());
}

double integrate_against(const DensityField& field, const TestFunction& g) {
  std::vector<double> x(field.grid.counts.size());
  double s = 0.0;
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    field.grid.node(i, x);
    s += field.values[i] * g.value(x);
  }
  return s * std::pow(field.grid.h, field.grid.dim());
}

}  // namespace brw
