#include "brw/homogenize.hpp"

#include <cmath>
#include <numeric>

#include "brw/cg.hpp"
#include "brw/errors.hpp"
#include "brw/parallel.hpp"
#include "brw/random.hpp"

namespace brw {

void apply_generator(const RateGraph& graph, double scale, std::span<const double> f,
                     std::span<double> out) {
  const double speed = scale * scale;
  for (std::size_t x = 0; x < graph.num_sites(); ++x) {
    auto nb = graph.neighbors(x);
    auto rt = graph.rates(x);
    const double fx = f[x];
    double acc = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) acc += rt[k] * (f[nb[k]] - fx);
    out[x] = speed * acc;
  }
}

std::vector<double> apply_generator(const RateGraph& graph, double scale,
                                    std::span<const double> f) {
  std::vector<double> out(graph.num_sites());
  apply_generator(graph, scale, f, out);
  return out;
}

TestFunction resolve_center(const RateGraph& graph, double scale, const TestFunction& g) {
  const int dim = graph.cloud().dim;
  std::vector<double> center(static_cast<std::size_t>(dim), 0.5 * graph.cloud().side / scale);
  return g.resolved(dim, center);
}

namespace {

template <class Eval>
std::vector<double> sample_sites(const RateGraph& graph, double scale, Eval&& eval) {
  const PointCloud& cloud = graph.cloud();
  std::vector<double> out(cloud.size());
  std::vector<double> u(static_cast<std::size_t>(cloud.dim));
  for (std::size_t x = 0; x < cloud.size(); ++x) {
    auto p = cloud.point(x);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = p[k] / scale;
    out[x] = eval(std::span<const double>(u));
  }
  return out;
}

}  // namespace

std::vector<double> sample_on_sites(const RateGraph& graph, double scale, const TestFunction& g) {
  const TestFunction fn = resolve_center(graph, scale, g);
  return sample_sites(graph, scale, [&](std::span<const double> u) { return fn.value(u); });
}

std::vector<double> sample_laplacian_on_sites(const RateGraph& graph, double scale,
                                              const TestFunction& g) {
  const TestFunction fn = resolve_center(graph, scale, g);
  return sample_sites(graph, scale, [&](std::span<const double> u) { return fn.laplacian(u); });
}

double mu_inner(double scale, int dim, std::span<const double> f, std::span<const double> g) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
  return s / std::pow(scale, dim);
}

double mu_l1(double scale, int dim, std::span<const double> f) {
  double s = 0.0;
  for (double v : f) s += std::abs(v);
  return s / std::pow(scale, dim);
}

double mu_l2(double scale, int dim, std::span<const double> f) {
  return std::sqrt(mu_inner(scale, dim, f, f));
}

double triple_norm(const RateGraph& graph, double scale, std::span<const double> h) {
  const int dim = graph.cloud().dim;
  const auto lh = apply_generator(graph, scale, h);
  const double l1 = mu_l1(scale, dim, h);
  return std::sqrt(l1 * l1 + std::pow(scale, -dim) * mu_l2(scale, dim, h) * mu_l2(scale, dim, lh));
}

double corrector_energy(const RateGraph& graph, std::span<const double> direction,
                        std::span<const double> psi) {
  const std::size_t n = graph.num_sites();
  if (n == 0) return 0.0;
  std::vector<double> d(static_cast<std::size_t>(graph.cloud().dim));
  std::vector<double> e1;
  if (direction.empty()) {
    e1.assign(d.size(), 0.0);
    e1[0] = 1.0;
    direction = e1;
  }
  double acc = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    auto nb = graph.neighbors(x);
    auto rt = graph.rates(x);
    double row = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      graph.displacement(x, k, d);
      const double proj = std::inner_product(d.begin(), d.end(), direction.begin(), 0.0);
      const double v = proj + psi[nb[k]] - psi[x];
      row += rt[k] * v * v;
    }
    acc += row;
  }
  return acc / (2.0 * static_cast<double>(n));
}

CorrectorSolution solve_corrector(const RateGraph& graph, std::vector<double> direction,
                                  double tol, std::size_t max_iter) {
  const PointCloud& cloud = graph.cloud();
  if (cloud.topology != Topology::periodic)
    throw ParameterError("corrector problem requires a periodic (torus) graph");
  const auto dim = static_cast<std::size_t>(cloud.dim);
  if (direction.empty()) {
    direction.assign(dim, 0.0);
    direction[0] = 1.0;
  }
  if (direction.size() != dim) throw ParameterError("direction must have one entry per dimension");
  const double norm = std::sqrt(std::inner_product(direction.begin(), direction.end(),
                                                   direction.begin(), 0.0));
  if (!(norm > 0.0)) throw ParameterError("direction must be non-zero");
  for (double& a : direction) a /= norm;

  const std::size_t n = graph.num_sites();
  const std::size_t components = component_count(graph);
  if (components > 1)
    throw SingularSystemError("corrector system is singular beyond the constant gauge: graph has " +
                                  std::to_string(components) + " connected components",
                              components);

  CorrectorSolution sol;
  sol.direction = direction;
  sol.side = cloud.side;
  sol.num_points = n;
  sol.psi.assign(n, 0.0);

  // Normal equations: sum_y r(x,y)(psi(x) - psi(y)) = sum_y r(x,y) a.(y - x).
  std::vector<double> rhs(n, 0.0);
  std::vector<double> d(dim);
  double scale_sq = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    auto rt = graph.rates(x);
    double acc = 0.0, mag = 0.0;
    for (std::size_t k = 0; k < rt.size(); ++k) {
      graph.displacement(x, k, d);
      const double proj = std::inner_product(d.begin(), d.end(), direction.begin(), 0.0);
      acc += rt[k] * proj;
      mag += rt[k] * std::abs(proj);
    }
    rhs[x] = acc;
    scale_sq += mag * mag;
  }
  // The right-hand side sums to zero in exact arithmetic; remove the roundoff so the
  // system stays consistent with the constant null space.
  if (n > 0) {
    const double mean = std::accumulate(rhs.begin(), rhs.end(), 0.0) / static_cast<double>(n);
    for (double& v : rhs) v -= mean;
  }
  auto apply = [&](std::span<const double> u, std::span<double> out) {
    apply_generator(graph, 1.0, u, out);
    for (double& v : out) v = -v;
  };
  if (max_iter == 0) max_iter = 10 * std::max<std::size_t>(n, 1);
  // On symmetric configurations (e.g. a lattice) the right-hand side is pure roundoff, so the
  // residual is measured against the scale of the individual rate-weighted displacements.
  const CgResult cg = conjugate_gradient(apply, rhs, sol.psi, graph.total_rates(), tol, max_iter,
                                         1e-12 * std::sqrt(scale_sq));
  sol.iterations = cg.iterations;
  sol.residual = cg.relative_residual;

  if (n > 0) {
    const double mean = std::accumulate(sol.psi.begin(), sol.psi.end(), 0.0) / static_cast<double>(n);
    for (double& v : sol.psi) v -= mean;
  }
  sol.sigma2 = corrector_energy(graph, direction, sol.psi);
  const std::vector<double> zero(n, 0.0);
  sol.zero_corrector_energy = corrector_energy(graph, direction, zero);
  sol.degenerate = sol.sigma2 <= 1e-8 * std::max(sol.zero_corrector_energy, 1e-300);
  return sol;
}

MsdEstimate msd_diffusivity(const RateGraph& graph, double t_max, std::size_t walkers,
                            std::uint64_t seed, unsigned jobs) {
  if (!(t_max > 0.0)) throw ParameterError("t_max must be positive");
  if (walkers == 0) throw ParameterError("at least one walker is required");
  const std::size_t n = graph.num_sites();
  if (n == 0) throw ParameterError("cannot run walkers on an empty cloud");
  const auto dim = static_cast<std::size_t>(graph.cloud().dim);

  std::vector<std::vector<double>> disp(walkers, std::vector<double>(dim, 0.0));
  std::vector<char> trapped(walkers, 0);
  parallel_for(walkers, jobs, [&](std::size_t w) {
    Rng rng(stream_seed(seed, w));
    std::size_t x = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)), n - 1);
    std::vector<double> step(dim);
    auto& acc = disp[w];
    if (graph.total_rate(x) <= 0.0) {
      trapped[w] = 1;
      return;
    }
    double t = 0.0;
    while (true) {
      const double r = graph.total_rate(x);
      if (r <= 0.0) break;
      t += exponential(rng, r);
      if (t > t_max) break;
      const std::size_t k = graph.sample_neighbor(x, uniform01(rng));
      graph.displacement(x, k, step);
      for (std::size_t c = 0; c < dim; ++c) acc[c] += step[c];
      x = graph.neighbors(x)[k];
    }
  });

  MsdEstimate est;
  est.t_max = t_max;
  est.walkers = walkers;
  est.second_moments.assign(dim, 0.0);
  std::vector<double> per_walker(walkers), first(walkers);
  for (std::size_t w = 0; w < walkers; ++w) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double v = disp[w][c] * disp[w][c];
      est.second_moments[c] += v;
      s += v;
    }
    per_walker[w] = s / (2.0 * static_cast<double>(dim) * t_max);
    first[w] = disp[w][0] * disp[w][0] / (2.0 * t_max);
    est.trapped += trapped[w];
  }
  for (double& m : est.second_moments) m /= static_cast<double>(walkers);
  auto mean_se = [&](const std::vector<double>& v, double& mean, double& se) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
  };
  mean_se(per_walker, est.sigma2, est.stderr_);
  mean_se(first, est.sigma2_first, est.stderr_first);
  return est;
}

ResolventSolution solve_resolvent(const RateGraph& graph, double scale, double lambda,
                                  const TestFunction& g, double sigma2, double tol,
                                  std::size_t max_iter) {
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive (the system loses definiteness)");
  if (!(sigma2 >= 0.0)) throw ParameterError("sigma2 must be non-negative");
  if (!(scale > 0.0)) throw ParameterError("scale N must be positive");
  const std::size_t n = graph.num_sites();
  const int dim = graph.cloud().dim;

  ResolventSolution sol;
  sol.lambda = lambda;
  sol.scale = scale;
  sol.sigma2 = sigma2;
  sol.target = sample_on_sites(graph, scale, g);
  const auto lap = sample_laplacian_on_sites(graph, scale, g);
  sol.source.resize(n);
  for (std::size_t x = 0; x < n; ++x) sol.source[x] = lambda * sol.target[x] - sigma2 * lap[x];

  const double speed = scale * scale;
  std::vector<double> diag(n);
  for (std::size_t x = 0; x < n; ++x) diag[x] = lambda + speed * graph.total_rate(x);
  auto apply = [&](std::span<const double> u, std::span<double> out) {
    apply_generator(graph, scale, u, out);
    for (std::size_t x = 0; x < n; ++x) out[x] = lambda * u[x] - out[x];
  };
  // Start from H/diag, which is exact when the graph has no edges.
  sol.values.resize(n);
  for (std::size_t x = 0; x < n; ++x) sol.values[x] = sol.source[x] / diag[x];
  if (max_iter == 0) max_iter = 10 * std::max<std::size_t>(n, 1) + 100;
  const CgResult cg = conjugate_gradient(apply, sol.source, sol.values, diag, tol, max_iter);
  sol.iterations = cg.iterations;
  sol.residual = cg.relative_residual;

  std::vector<double> diff(n);
  for (std::size_t x = 0; x < n; ++x) diff[x] = sol.values[x] - sol.target[x];
  sol.l1_distance = mu_l1(scale, dim, diff);
  sol.l2_distance = mu_l2(scale, dim, diff);
  return sol;
}

double generator_l2_decay(const RateGraph& graph, double scale, const TestFunction& g) {
  const int dim = graph.cloud().dim;
  const auto vals = sample_on_sites(graph, scale, g);
  const auto lg = apply_generator(graph, scale, vals);
  return std::pow(scale, -dim) * mu_l2(scale, dim, lg);
}

std::vector<double> generator_l2_decay(std::span<const std::pair<double, const RateGraph*>> graphs,
                                       const TestFunction& g) {
  std::vector<double> out;
  out.reserve(graphs.size());
  for (const auto& [scale, graph] : graphs) out.push_back(generator_l2_decay(*graph, scale, g));
  return out;
}

}  // namespace brw
