#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace brw {

enum class Topology { free, periodic };

std::string to_string(Topology t);
Topology parse_topology(const std::string& s);

/// Point locations in [0, side)^dim, stored row-major (dim doubles per point).
struct PointCloud {
  int dim = 2;
  double side = 0.0;
  double intensity = 0.0;
  Topology topology = Topology::free;
  std::uint64_t seed = 0;
  bool palm = false;
  std::optional<std::size_t> palm_index;
  std::vector<double> coords;

  std::size_t size() const { return dim > 0 ? coords.size() / static_cast<std::size_t>(dim) : 0; }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  double coord(std::size_t i, int k) const { return coords[i * static_cast<std::size_t>(dim) + k]; }

  /// y - x, wrapped to the minimal image on the torus.
  void displacement(std::size_t from, std::size_t to, std::span<double> out) const;
  double distance(std::size_t a, std::size_t b) const;
};

/// Number of points ~ Poisson(intensity * side^dim), coordinates i.i.d. uniform.
PointCloud sample_poisson_cloud(double intensity, double side, int dim, Topology topology,
                                std::uint64_t seed);

/// Adds one point at the box center and sets the palm flag. Throws if already set.
PointCloud palm_condition(const PointCloud& cloud);

/// Points at every integer coordinate of [0, side)^dim. `side` must be a positive integer.
PointCloud lattice_cloud(int side, int dim, Topology topology);

/// Restriction of a cloud to the sub-box [0, side)^dim (free topology).
PointCloud restrict_cloud(const PointCloud& cloud, double side);

enum class PercolationKind { none, long_range, scale_free };

struct PercolationDescriptor {
  PercolationKind kind = PercolationKind::none;
  double alpha = 0.0;
  double beta = 0.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> weights;  // scale-free only, one per site
};

std::string to_string(PercolationKind k);
PercolationKind parse_percolation(const std::string& s);

struct Edge {
  std::uint32_t src;
  std::uint32_t dst;
  double rate;
};

/// Symmetric jump-rate graph over a point cloud in CSR form, with one alias table
/// per site for sampling a destination with probability r(x,y)/r(x).
class RateGraph {
 public:
  RateGraph() = default;

  /// Directed edge list must be symmetric; rows are sorted by neighbor index here.
  RateGraph(std::shared_ptr<const PointCloud> cloud, double cutoff, std::vector<Edge> edges,
            PercolationDescriptor percolation = {});

  /// CSR form; each row must already be sorted by neighbor index.
  RateGraph(std::shared_ptr<const PointCloud> cloud, double cutoff,
            std::vector<std::size_t> offsets, std::vector<std::uint32_t> neighbors,
            std::vector<double> rates, PercolationDescriptor percolation = {});

  const PointCloud& cloud() const { return *cloud_; }
  std::shared_ptr<const PointCloud> cloud_ptr() const { return cloud_; }
  std::size_t num_sites() const { return total_.size(); }
  std::size_t num_directed_edges() const { return neighbor_.size(); }
  double cutoff() const { return cutoff_; }
  const PercolationDescriptor& percolation() const { return percolation_; }

  std::span<const std::uint32_t> neighbors(std::size_t x) const {
    return {neighbor_.data() + offset_[x], offset_[x + 1] - offset_[x]};
  }
  std::span<const double> rates(std::size_t x) const {
    return {rate_.data() + offset_[x], offset_[x + 1] - offset_[x]};
  }
  std::size_t degree(std::size_t x) const { return offset_[x + 1] - offset_[x]; }
  double total_rate(std::size_t x) const { return total_[x]; }
  std::span<const double> total_rates() const { return total_; }
  double max_total_rate() const;

  /// Signed displacement along the k-th neighbor edge of x under the cloud topology.
  void displacement(std::size_t x, std::size_t k, std::span<double> out) const {
    cloud_->displacement(x, neighbor_[offset_[x] + k], out);
  }

  /// Index within neighbors(x) of a destination drawn with probability r(x,y)/r(x).
  /// `u` is uniform on [0,1). Requires degree(x) > 0.
  std::size_t sample_neighbor(std::size_t x, double u) const;

  std::vector<Edge> edges() const;

 private:
  void finish();
  void build_alias_tables();

  std::shared_ptr<const PointCloud> cloud_;
  double cutoff_ = 0.0;
  PercolationDescriptor percolation_;
  std::vector<std::size_t> offset_{0};
  std::vector<std::uint32_t> neighbor_;
  std::vector<double> rate_;
  std::vector<double> total_;
  std::vector<double> alias_prob_;
  std::vector<std::uint32_t> alias_index_;
};

/// All pairs within `cutoff` joined with rate exp(-dist). Cell lists for the search.
RateGraph build_graph(std::shared_ptr<const PointCloud> cloud, double cutoff);
RateGraph build_graph(const PointCloud& cloud, double cutoff);

/// Pareto(tau - 1) weights, P(W > w) = w^{-(tau-1)} for w >= 1.
std::vector<double> sample_pareto_weights(std::size_t count, double tau, std::uint64_t seed);

/// Retain each unoriented edge with probability 1 - exp(-beta * d^{-alpha}).
RateGraph percolate_long_range(const RateGraph& graph, double alpha, double beta,
                               std::uint64_t seed);

/// Retain each unoriented edge with probability 1 - exp(-beta * W_x W_y * d^{-alpha}).
RateGraph percolate_scale_free(const RateGraph& graph, double alpha, double beta, double tau,
                               std::uint64_t seed);

/// Same as percolate_scale_free with caller-supplied weights.
RateGraph percolate_scale_free(const RateGraph& graph, double alpha, double beta, double tau,
                               std::uint64_t seed, std::vector<double> weights);

double long_range_retention(double dist, double alpha, double beta);
double scale_free_retention(double dist, double wx, double wy, double alpha, double beta);

std::size_t component_count(const RateGraph& graph);

}  // namespace brw
