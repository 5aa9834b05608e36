#include "brw/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "brw/errors.hpp"
#include "brw/random.hpp"

namespace brw {

std::string to_string(Topology t) { return t == Topology::periodic ? "periodic" : "free"; }

Topology parse_topology(const std::string& s) {
  if (s == "free") return Topology::free;
  if (s == "periodic" || s == "torus") return Topology::periodic;
  throw ParameterError("unknown topology '" + s + "' (expected free or periodic)");
}

std::string to_string(PercolationKind k) {
  switch (k) {
    case PercolationKind::long_range: return "longrange";
    case PercolationKind::scale_free: return "scalefree";
    default: return "none";
  }
}

PercolationKind parse_percolation(const std::string& s) {
  if (s == "none") return PercolationKind::none;
  if (s == "longrange") return PercolationKind::long_range;
  if (s == "scalefree") return PercolationKind::scale_free;
  throw ParameterError("unknown percolation '" + s + "' (expected none, longrange or scalefree)");
}

void PointCloud::displacement(std::size_t from, std::size_t to, std::span<double> out) const {
  const double* a = coords.data() + from * static_cast<std::size_t>(dim);
  const double* b = coords.data() + to * static_cast<std::size_t>(dim);
  for (int k = 0; k < dim; ++k) {
    double d = b[k] - a[k];
    if (topology == Topology::periodic) d -= side * std::round(d / side);
    out[k] = d;
  }
}

double PointCloud::distance(std::size_t a, std::size_t b) const {
  double buf[8];
  std::vector<double> heap;
  std::span<double> d;
  if (dim <= 8) {
    d = std::span<double>(buf, static_cast<std::size_t>(dim));
  } else {
    heap.resize(static_cast<std::size_t>(dim));
    d = heap;
  }
  displacement(a, b, d);
  double s = 0.0;
  for (double v : d) s += v * v;
  return std::sqrt(s);
}

PointCloud sample_poisson_cloud(double intensity, double side, int dim, Topology topology,
                                std::uint64_t seed) {
  if (dim < 2) throw ParameterError("dimension must be >= 2, got " + std::to_string(dim));
  if (!(intensity >= 0.0)) throw ParameterError("intensity must be non-negative");
  if (!(side > 0.0)) throw ParameterError("box side must be positive");

  PointCloud cloud;
  cloud.dim = dim;
  cloud.side = side;
  cloud.intensity = intensity;
  cloud.topology = topology;
  cloud.seed = seed;

  Rng rng(seed);
  const double mean = intensity * std::pow(side, dim);
  std::size_t count = 0;
  if (mean > 0.0) {
    std::poisson_distribution<long long> pois(mean);
    count = static_cast<std::size_t>(pois(rng));
  }
  cloud.coords.resize(count * static_cast<std::size_t>(dim));
  for (double& c : cloud.coords) {
    c = side * uniform01(rng);
    if (c >= side) c = 0.0;
  }
  return cloud;
}

PointCloud palm_condition(const PointCloud& cloud) {
  if (cloud.palm) throw UsageError("cloud is already palm-conditioned");
  PointCloud out = cloud;
  out.palm = true;
  out.palm_index = out.size();
  for (int k = 0; k < out.dim; ++k) out.coords.push_back(0.5 * out.side);
  return out;
}

PointCloud lattice_cloud(int side, int dim, Topology topology) {
  if (dim < 2) throw ParameterError("dimension must be >= 2");
  if (side < 1) throw ParameterError("lattice side must be >= 1");
  PointCloud cloud;
  cloud.dim = dim;
  cloud.side = side;
  cloud.intensity = 1.0;
  cloud.topology = topology;
  std::size_t count = 1;
  for (int k = 0; k < dim; ++k) count *= static_cast<std::size_t>(side);
  cloud.coords.reserve(count * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t rest = i;
    for (int k = 0; k < dim; ++k) {
      cloud.coords.push_back(static_cast<double>(rest % static_cast<std::size_t>(side)));
      rest /= static_cast<std::size_t>(side);
    }
  }
  return cloud;
}

PointCloud restrict_cloud(const PointCloud& cloud, double side) {
  if (!(side > 0.0) || side > cloud.side) throw ParameterError("restriction side out of range");
  PointCloud out;
  out.dim = cloud.dim;
  out.side = side;
  out.intensity = cloud.intensity;
  out.topology = Topology::free;
  out.seed = cloud.seed;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto p = cloud.point(i);
    if (std::all_of(p.begin(), p.end(), [&](double c) { return c < side; }))
      out.coords.insert(out.coords.end(), p.begin(), p.end());
  }
  return out;
}

namespace {

// Uniform cell grid over the box; each cell has side >= cutoff.
class CellIndex {
 public:
  CellIndex(const PointCloud& cloud, double cutoff) : cloud_(cloud) {
    per_dim_ = std::max<long>(1, static_cast<long>(std::floor(cloud.side / cutoff)));
    // Bound the cell count; a coarser grid is still exact, just slower.
    while (std::pow(static_cast<double>(per_dim_), cloud.dim) > 4.0 * (cloud.size() + 1) &&
           per_dim_ > 1)
      per_dim_ = std::max<long>(1, per_dim_ / 2);
    cell_side_ = cloud.side / static_cast<double>(per_dim_);
    std::size_t cells = 1;
    for (int k = 0; k < cloud.dim; ++k) cells *= static_cast<std::size_t>(per_dim_);
    start_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      cell_of[i] = cell_id(cloud.point(i));
      ++start_[cell_of[i] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    members_.resize(cloud.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < cloud.size(); ++i)
      members_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }

  long coord_cell(double c) const {
    long v = static_cast<long>(std::floor(c / cell_side_));
    return std::clamp<long>(v, 0, per_dim_ - 1);
  }

  std::size_t cell_id(std::span<const double> p) const {
    std::size_t id = 0;
    for (int k = cloud_.dim - 1; k >= 0; --k) id = id * per_dim_ + coord_cell(p[k]);
    return id;
  }

  /// Distinct cells adjacent (including itself) to the cell containing p.
  std::vector<std::size_t> neighborhood(std::span<const double> p) const {
    const int dim = cloud_.dim;
    std::vector<std::vector<long>> choices(dim);
    for (int k = 0; k < dim; ++k) {
      const long c = coord_cell(p[k]);
      std::set<long> s;
      for (long o = -1; o <= 1; ++o) {
        long v = c + o;
        if (cloud_.topology == Topology::periodic) {
          v = ((v % per_dim_) + per_dim_) % per_dim_;
        } else if (v < 0 || v >= per_dim_) {
          continue;
        }
        s.insert(v);
      }
      choices[k].assign(s.begin(), s.end());
    }
    std::vector<std::size_t> out{0};
    for (int k = dim - 1; k >= 0; --k) {
      std::vector<std::size_t> next;
      next.reserve(out.size() * choices[k].size());
      for (std::size_t base : out)
        for (long v : choices[k]) next.push_back(base * per_dim_ + static_cast<std::size_t>(v));
      out.swap(next);
    }
    return out;
  }

  std::span<const std::uint32_t> members(std::size_t cell) const {
    return {members_.data() + start_[cell], start_[cell + 1] - start_[cell]};
  }

 private:
  const PointCloud& cloud_;
  long per_dim_ = 1;
  double cell_side_ = 1.0;
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> members_;
};

}  // namespace

RateGraph::RateGraph(std::shared_ptr<const PointCloud> cloud, double cutoff,
                     std::vector<Edge> edges, PercolationDescriptor percolation)
    : cloud_(std::move(cloud)), cutoff_(cutoff), percolation_(std::move(percolation)) {
  const std::size_t n = cloud_->size();
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  });
  offset_.assign(n + 1, 0);
  for (const Edge& e : edges) {
    if (e.src >= n || e.dst >= n) throw ParameterError("edge endpoint out of range");
    if (e.src == e.dst) throw ParameterError("self-edges are not allowed");
    ++offset_[e.src + 1];
  }
  std::partial_sum(offset_.begin(), offset_.end(), offset_.begin());
  neighbor_.resize(edges.size());
  rate_.resize(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    neighbor_[i] = edges[i].dst;
    rate_[i] = edges[i].rate;
  }
  finish();
}

RateGraph::RateGraph(std::shared_ptr<const PointCloud> cloud, double cutoff,
                     std::vector<std::size_t> offsets, std::vector<std::uint32_t> neighbors,
                     std::vector<double> rates, PercolationDescriptor percolation)
    : cloud_(std::move(cloud)),
      cutoff_(cutoff),
      percolation_(std::move(percolation)),
      offset_(std::move(offsets)),
      neighbor_(std::move(neighbors)),
      rate_(std::move(rates)) {
  if (offset_.size() != cloud_->size() + 1 || offset_.back() != neighbor_.size() ||
      rate_.size() != neighbor_.size())
    throw ParameterError("inconsistent CSR arrays");
  finish();
}

void RateGraph::finish() {
  const std::size_t n = cloud_->size();
  total_.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x)
    for (double r : rates(x)) total_[x] += r;
  build_alias_tables();
}

void RateGraph::build_alias_tables() {
  alias_prob_.assign(rate_.size(), 1.0);
  alias_index_.assign(rate_.size(), 0);
  std::vector<double> scaled;
  std::vector<std::uint32_t> small, large;
  for (std::size_t x = 0; x < num_sites(); ++x) {
    const std::size_t deg = degree(x);
    if (deg == 0 || total_[x] <= 0.0) continue;
    const std::size_t base = offset_[x];
    scaled.resize(deg);
    small.clear();
    large.clear();
    for (std::size_t k = 0; k < deg; ++k) {
      scaled[k] = rate_[base + k] * static_cast<double>(deg) / total_[x];
      alias_index_[base + k] = static_cast<std::uint32_t>(k);
      (scaled[k] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(k));
    }
    while (!small.empty() && !large.empty()) {
      const std::uint32_t s = small.back();
      small.pop_back();
      const std::uint32_t l = large.back();
      alias_prob_[base + s] = scaled[s];
      alias_index_[base + s] = l;
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    // Leftovers are 1 up to rounding.
    for (std::uint32_t k : small) alias_prob_[base + k] = 1.0;
    for (std::uint32_t k : large) alias_prob_[base + k] = 1.0;
  }
}

std::size_t RateGraph::sample_neighbor(std::size_t x, double u) const {
  const std::size_t deg = degree(x);
  const double scaled = u * static_cast<double>(deg);
  std::size_t k = std::min(static_cast<std::size_t>(scaled), deg - 1);
  const double frac = scaled - static_cast<double>(k);
  const std::size_t base = offset_[x];
  return frac < alias_prob_[base + k] ? k : alias_index_[base + k];
}

double RateGraph::max_total_rate() const {
  return total_.empty() ? 0.0 : *std::max_element(total_.begin(), total_.end());
}

std::vector<Edge> RateGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(neighbor_.size());
  for (std::size_t x = 0; x < num_sites(); ++x)
    for (std::size_t k = offset_[x]; k < offset_[x + 1]; ++k)
      out.push_back({static_cast<std::uint32_t>(x), neighbor_[k], rate_[k]});
  return out;
}

RateGraph build_graph(std::shared_ptr<const PointCloud> cloud, double cutoff) {
  if (!(cutoff > 0.0)) throw ParameterError("cutoff must be positive");
  if (cloud->topology == Topology::periodic && cutoff > 0.5 * cloud->side)
    throw ParameterError("cutoff " + std::to_string(cutoff) + " exceeds half the torus side " +
                         std::to_string(0.5 * cloud->side));
  if (cloud->size() >= std::numeric_limits<std::uint32_t>::max())
    throw ParameterError("too many points for 32-bit site indices");

  const PointCloud& pc = *cloud;
  const CellIndex cells(pc, cutoff);
  const double cut2 = cutoff * cutoff;
  std::vector<std::size_t> offsets{0};
  offsets.reserve(pc.size() + 1);
  std::vector<std::uint32_t> neighbors;
  std::vector<double> rates;
  const auto expected = static_cast<std::size_t>(
      pc.size() * std::max(1.0, pc.intensity * std::pow(2.0 * cutoff, pc.dim) * 0.8));
  neighbors.reserve(expected);
  rates.reserve(expected);
  std::vector<double> d(static_cast<std::size_t>(pc.dim));
  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    row.clear();
    for (std::size_t cell : cells.neighborhood(pc.point(i))) {
      for (std::uint32_t j : cells.members(cell)) {
        if (j == i) continue;
        pc.displacement(i, j, d);
        double s = 0.0;
        for (double v : d) s += v * v;
        if (s <= cut2) row.emplace_back(j, std::exp(-std::sqrt(s)));
      }
    }
    std::sort(row.begin(), row.end());
    for (const auto& [j, r] : row) {
      neighbors.push_back(j);
      rates.push_back(r);
    }
    offsets.push_back(neighbors.size());
  }
  neighbors.shrink_to_fit();
  rates.shrink_to_fit();
  return RateGraph(std::move(cloud), cutoff, std::move(offsets), std::move(neighbors),
                   std::move(rates));
}

RateGraph build_graph(const PointCloud& cloud, double cutoff) {
  return build_graph(std::make_shared<const PointCloud>(cloud), cutoff);
}

std::vector<double> sample_pareto_weights(std::size_t count, double tau, std::uint64_t seed) {
  if (!(tau > 1.0)) throw ParameterError("scale-free tail exponent tau must exceed 1");
  Rng rng(seed);
  std::vector<double> w(count);
  const double inv = 1.0 / (tau - 1.0);
  for (double& v : w) v = std::pow(1.0 - uniform01(rng), -inv);
  return w;
}

double long_range_retention(double dist, double alpha, double beta) {
  return -std::expm1(-beta * std::pow(dist, -alpha));
}

double scale_free_retention(double dist, double wx, double wy, double alpha, double beta) {
  return -std::expm1(-beta * wx * wy * std::pow(dist, -alpha));
}

namespace {

template <class Retain>
std::vector<Edge> retained_edges(const RateGraph& graph, std::uint64_t seed, Retain&& prob) {
  std::vector<Edge> out;
  for (std::size_t x = 0; x < graph.num_sites(); ++x) {
    auto nb = graph.neighbors(x);
    auto rt = graph.rates(x);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const std::size_t y = nb[k];
      const std::size_t lo = std::min(x, y), hi = std::max(x, y);
      // One coin per unoriented edge: both directions read the same key.
      const double u = hashed_uniform(seed, lo, hi);
      if (u < prob(lo, hi, graph.cloud().distance(lo, hi)))
        out.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), rt[k]});
    }
  }
  return out;
}

}  // namespace

RateGraph percolate_long_range(const RateGraph& graph, double alpha, double beta,
                               std::uint64_t seed) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ParameterError("alpha and beta must be positive");
  auto edges = retained_edges(graph, seed, [&](std::size_t, std::size_t, double dist) {
    return long_range_retention(dist, alpha, beta);
  });
  PercolationDescriptor desc;
  desc.kind = PercolationKind::long_range;
  desc.alpha = alpha;
  desc.beta = beta;
  desc.seed = seed;
  return RateGraph(graph.cloud_ptr(), graph.cutoff(), std::move(edges), std::move(desc));
}

RateGraph percolate_scale_free(const RateGraph& graph, double alpha, double beta, double tau,
                               std::uint64_t seed, std::vector<double> weights) {
  if (!(tau > 1.0)) throw ParameterError("scale-free tail exponent tau must exceed 1");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ParameterError("alpha and beta must be positive");
  if (weights.size() != graph.num_sites()) throw ParameterError("one weight per site required");
  auto edges = retained_edges(graph, seed, [&](std::size_t x, std::size_t y, double dist) {
    return scale_free_retention(dist, weights[x], weights[y], alpha, beta);
  });
  PercolationDescriptor desc;
  desc.kind = PercolationKind::scale_free;
  desc.alpha = alpha;
  desc.beta = beta;
  desc.tau = tau;
  desc.seed = seed;
  desc.weights = std::move(weights);
  return RateGraph(graph.cloud_ptr(), graph.cutoff(), std::move(edges), std::move(desc));
}

RateGraph percolate_scale_free(const RateGraph& graph, double alpha, double beta, double tau,
                               std::uint64_t seed) {
  if (!(tau > 1.0)) throw ParameterError("scale-free tail exponent tau must exceed 1");
  auto weights = sample_pareto_weights(graph.num_sites(), tau, stream_seed(seed, 0x57));
  return percolate_scale_free(graph, alpha, beta, tau, seed, std::move(weights));
}

std::size_t component_count(const RateGraph& graph) {
  const std::size_t n = graph.num_sites();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++components;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      for (std::uint32_t y : graph.neighbors(x))
        if (!seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
    }
  }
  return components;
}

}  // namespace brw
