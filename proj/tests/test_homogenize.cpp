#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "brw/errors.hpp"
#include "brw/geometry.hpp"
#include "brw/homogenize.hpp"
#include "brw/random.hpp"
#include "oracles.hpp"

using namespace brw;

namespace {

RateGraph periodic_graph(double side, double cutoff, std::uint64_t seed, double gamma = 1.0) {
  return build_graph(sample_poisson_cloud(gamma, side, 2, Topology::periodic, seed), cutoff);
}

/// Dense generator matrix: (Q f)(x) = sum_y r(x,y) (f(y) - f(x)).
Eigen::MatrixXd dense_generator(const RateGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_sites());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t x = 0; x < g.num_sites(); ++x) {
    auto nb = g.neighbors(x);
    auto rt = g.rates(x);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      q(x, nb[k]) += rt[k];
      q(x, x) -= rt[k];
    }
  }
  return q;
}

double energy_oracle(const RateGraph& g, const Eigen::VectorXd& psi) {
  double s = 0.0;
  std::vector<double> d(2);
  for (std::size_t x = 0; x < g.num_sites(); ++x) {
    auto nb = g.neighbors(x);
    auto rt = g.rates(x);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      g.displacement(x, k, d);
      const double t = d[0] + psi[nb[k]] - psi[x];
      s += rt[k] * t * t;
    }
  }
  return s / (2.0 * g.num_sites());
}

}  // namespace

TEST_CASE("generator examples") {
  PointCloud c;
  c.dim = 2;
  c.side = 5.0;
  c.coords = {1.0, 1.0, 2.0, 1.0};
  const auto g = build_graph(c, 2.0);
  const std::vector<double> f{0.0, 1.0};
  const auto lf = apply_generator(g, 1.0, f);
  CHECK(lf[0] == doctest::Approx(std::exp(-1.0)));
  CHECK(lf[1] == doctest::Approx(-std::exp(-1.0)));

  const auto big = periodic_graph(12.0, 4.0, 2);
  const std::vector<double> ones(big.num_sites(), 3.0);
  for (double v : apply_generator(big, 7.0, ones)) CHECK(v == 0.0);
}

TEST_CASE("generator matches the dense matrix and is self-adjoint") {
  const auto g = periodic_graph(7.0, 3.5, 4);
  REQUIRE(g.num_sites() <= 60);
  const double n = 3.0;
  const Eigen::MatrixXd q = n * n * dense_generator(g);
  Rng rng(2);
  std::vector<double> f(g.num_sites()), h(g.num_sites());
  for (auto& v : f) v = uniform01(rng) - 0.5;
  for (auto& v : h) v = uniform01(rng) - 0.5;
  const auto lf = apply_generator(g, n, f);
  const auto lh = apply_generator(g, n, h);
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), f.size());
  const Eigen::VectorXd dense = q * fv;
  for (std::size_t x = 0; x < f.size(); ++x) CHECK(lf[x] == doctest::Approx(dense[x]).epsilon(1e-12));
  const double a = mu_inner(n, 2, f, lh);
  const double b = mu_inner(n, 2, lf, h);
  CHECK(std::abs(a - b) <= 1e-10 * std::max(std::abs(a), 1e-300));
}

TEST_CASE("corrector matches a dense solve on a small torus") {
  const auto g = periodic_graph(7.0, 3.5, 6);
  REQUIRE(component_count(g) == 1);
  const auto sol = solve_corrector(g, {}, 1e-13);
  CHECK(sol.residual <= 1e-13);

  const Eigen::MatrixXd lap = -dense_generator(g);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(lap.rows());
  std::vector<double> d(2);
  for (std::size_t x = 0; x < g.num_sites(); ++x) {
    auto rt = g.rates(x);
    for (std::size_t k = 0; k < rt.size(); ++k) {
      g.displacement(x, k, d);
      rhs[x] += rt[k] * d[0];
    }
  }
  Eigen::VectorXd psi = lap.completeOrthogonalDecomposition().solve(rhs);
  psi.array() -= psi.mean();
  double scale = psi.cwiseAbs().maxCoeff();
  for (std::size_t x = 0; x < g.num_sites(); ++x) CHECK(std::abs(sol.psi[x] - psi[x]) <= 1e-8 * scale);
  CHECK(sol.sigma2 == doctest::Approx(energy_oracle(g, psi)).epsilon(1e-8));
  CHECK(std::abs(std::accumulate(sol.psi.begin(), sol.psi.end(), 0.0)) < 1e-10);
}

TEST_CASE("corrector: variational and gauge properties") {
  const auto g = periodic_graph(20.0, 6.0, 8);
  const auto sol = solve_corrector(g);
  const std::vector<double> e1{1.0, 0.0};
  std::vector<double> zero(g.num_sites(), 0.0);
  CHECK(sol.sigma2 == doctest::Approx(corrector_energy(g, e1, sol.psi)).epsilon(1e-12));
  CHECK(sol.zero_corrector_energy == doctest::Approx(corrector_energy(g, e1, zero)).epsilon(1e-12));
  CHECK(sol.sigma2 <= sol.zero_corrector_energy);
  CHECK(sol.sigma2 > 0.0);

  Rng rng(3);
  std::vector<double> noisy = sol.psi, shifted = sol.psi;
  for (auto& v : noisy) v += 0.1 * (uniform01(rng) - 0.5);
  for (auto& v : shifted) v += 12.5;
  CHECK(sol.sigma2 <= corrector_energy(g, e1, noisy));
  CHECK(std::abs(corrector_energy(g, e1, shifted) - sol.sigma2) <= 1e-12 * sol.sigma2);
}

TEST_CASE("corrector: unit grid has zero corrector and the lattice sum") {
  const auto g = build_graph(lattice_cloud(20, 2, Topology::periodic), 9.5);
  const auto sol = solve_corrector(g);
  CHECK(*std::max_element(sol.psi.begin(), sol.psi.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) ==
        doctest::Approx(0.0));
  for (double v : sol.psi) CHECK(std::abs(v) < 1e-8);
  CHECK(std::abs(sol.sigma2 / oracle::lattice_sigma2(9.5) - 1.0) < 1e-6);
}

TEST_CASE("corrector: errors") {
  const auto free_g = build_graph(sample_poisson_cloud(1.0, 10.0, 2, Topology::free, 1), 3.0);
  CHECK_THROWS_AS(solve_corrector(free_g), ParameterError);

  PointCloud c;
  c.dim = 2;
  c.side = 20.0;
  c.topology = Topology::periodic;
  c.coords = {1, 1, 1.5, 1, 10, 10, 10.5, 10, 15, 3};
  const auto g = build_graph(c, 2.0);
  try {
    solve_corrector(g);
    FAIL("expected a singular system");
  } catch (const SingularSystemError& e) {
    CHECK(e.components() == 3);
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
}

TEST_CASE("zero-corrector energy against the closed-form integral") {
  double s = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto g = periodic_graph(40.0, 15.0, 100 + seed);
    std::vector<double> zero(g.num_sites(), 0.0);
    s += corrector_energy(g, {}, zero);
  }
  CHECK(std::abs(s / 4.0 / oracle::zero_corrector_energy_2d(1.0, 15.0) - 1.0) < 0.05);
  CHECK(oracle::zero_corrector_energy_2d(1.0, 1e9) == doctest::Approx(3.0 * M_PI));
}

TEST_CASE("corrector: isotropy at L=60") {
  const auto g = periodic_graph(60.0, 10.0, 12);
  const auto a = solve_corrector(g, {1.0, 0.0});
  const auto b = solve_corrector(g, {0.0, 1.0});
  CHECK(std::abs(a.sigma2 / b.sigma2 - 1.0) < 0.05);
}

TEST_CASE("percolated sigma2 never exceeds the complete graph's") {
  const auto g = periodic_graph(30.0, 10.0, 14);
  const double full = solve_corrector(g).sigma2;
  CHECK(solve_corrector(percolate_long_range(g, 1.5, 1.0, 3)).sigma2 <= full);
  CHECK(solve_corrector(percolate_scale_free(g, 1.5, 1.0, 3.0, 3)).sigma2 <= full);
}

TEST_CASE("msd: isolated point and unit grid") {
  PointCloud c;
  c.dim = 2;
  c.side = 10.0;
  c.topology = Topology::periodic;
  c.coords = {5.0, 5.0};
  const auto lone = msd_diffusivity(build_graph(c, 2.0), 10.0, 20, 1);
  CHECK(lone.sigma2 == 0.0);
  CHECK(lone.trapped == 20);

  const auto grid = build_graph(lattice_cloud(20, 2, Topology::periodic), 9.5);
  const auto est = msd_diffusivity(grid, 20.0, 4000, 5);
  const double want = oracle::lattice_sigma2(9.5);
  CHECK(std::abs(est.sigma2 - want) < 3.0 * est.stderr_);
  CHECK(std::abs(est.sigma2_first - want) < 3.0 * est.stderr_first);
}

TEST_CASE("msd: results do not depend on the thread count") {
  const auto g = periodic_graph(20.0, 6.0, 3);
  const auto a = msd_diffusivity(g, 5.0, 64, 9, 1);
  const auto b = msd_diffusivity(g, 5.0, 64, 9, 3);
  CHECK(a.sigma2 == b.sigma2);
  CHECK(a.stderr_ == b.stderr_);
}

TEST_CASE("resolvent matches a dense solve") {
  const auto g = periodic_graph(7.0, 3.5, 6);
  const double n = 2.0, lambda = 1.3, sigma2 = 9.0;
  const auto fn = TestFunction::gaussian(1.0, 0.8);
  const auto sol = solve_resolvent(g, n, lambda, fn, sigma2, 1e-13);
  CHECK(sol.residual <= 1e-8);

  const auto gv = sample_on_sites(g, n, fn);
  const auto lap = sample_laplacian_on_sites(g, n, fn);
  Eigen::VectorXd h(gv.size());
  for (std::size_t x = 0; x < gv.size(); ++x) h[x] = lambda * gv[x] - sigma2 * lap[x];
  const Eigen::MatrixXd a = lambda * Eigen::MatrixXd::Identity(h.size(), h.size()) - n * n * dense_generator(g);
  const Eigen::VectorXd u = a.ldlt().solve(h);
  for (std::size_t x = 0; x < gv.size(); ++x) CHECK(sol.values[x] == doctest::Approx(u[x]).epsilon(1e-8));

  // Defining equation, re-applied independently.
  const auto lu = apply_generator(g, n, sol.values);
  double num = 0.0, den = 0.0;
  for (std::size_t x = 0; x < gv.size(); ++x) {
    num += std::pow(lambda * sol.values[x] - lu[x] - h[x], 2);
    den += h[x] * h[x];
  }
  CHECK(std::sqrt(num / den) <= 1e-8);
}

TEST_CASE("resolvent without edges is H / lambda") {
  PointCloud c;
  c.dim = 2;
  c.side = 10.0;
  c.topology = Topology::periodic;
  c.coords = {1, 1, 5, 5, 8, 2};
  const auto g = build_graph(c, 0.5);
  REQUIRE(g.num_directed_edges() == 0);
  const auto fn = TestFunction::gaussian(1.0, 2.0);
  const auto sol = solve_resolvent(g, 1.0, 2.0, fn, 3.0);
  for (std::size_t x = 0; x < g.num_sites(); ++x) CHECK(sol.values[x] == sol.source[x] / 2.0);
  CHECK_THROWS_AS(solve_resolvent(g, 1.0, 0.0, fn, 3.0), ParameterError);
  CHECK_THROWS_AS(solve_resolvent(g, 1.0, -1.0, fn, 3.0), ParameterError);
}

TEST_CASE("norms and generator diagnostics") {
  const auto g = periodic_graph(12.0, 4.0, 5);
  const double n = 2.0;
  const auto fn = TestFunction::bump(1.0, 1.5);
  const auto h = sample_on_sites(g, n, fn);
  const auto lh = apply_generator(g, n, h);
  double l1 = 0.0, l2 = 0.0, ll2 = 0.0;
  for (std::size_t x = 0; x < h.size(); ++x) {
    l1 += std::abs(h[x]);
    l2 += h[x] * h[x];
    ll2 += lh[x] * lh[x];
  }
  l1 /= n * n;
  l2 = std::sqrt(l2 / (n * n));
  ll2 = std::sqrt(ll2 / (n * n));
  CHECK(mu_l1(n, 2, h) == doctest::Approx(l1));
  CHECK(mu_l2(n, 2, h) == doctest::Approx(l2));
  CHECK(triple_norm(g, n, h) == doctest::Approx(std::sqrt(l1 * l1 + l2 * ll2 / (n * n))));
  CHECK(generator_l2_decay(g, n, fn) == doctest::Approx(ll2 / (n * n)));
  CHECK(generator_l2_decay(g, n, TestFunction::gaussian(0.0, 1.0)) == 0.0);
}
