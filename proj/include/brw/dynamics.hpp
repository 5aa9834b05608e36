#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "brw/geometry.hpp"
#include "brw/random.hpp"
#include "brw/test_function.hpp"

namespace brw {

/// Initial occupation law. Every kind is dominated by a constant plus an i.i.d.
/// Poisson product, which is what the hydrodynamic scaling needs.
struct InitialCondition {
  enum class Kind { constant, poisson, profile };
  Kind kind = Kind::constant;
  std::uint64_t count = 1;  // constant: M per site
  double rho = 0.0;         // poisson: mean per site
  TestFunction profile;     // profile: eta(x) ~ Poisson(rho0(x/N))

  static InitialCondition constant(std::uint64_t m);
  static InitialCondition poisson(double rho);
  static InitialCondition from_profile(TestFunction rho0);
  /// "const:M", "poisson:RHO" or "profile:<test function spec>".
  static InitialCondition parse(const std::string& spec);
  std::string to_spec() const;
};

struct DynamicsParams {
  double scale = 1.0;  // N; jump rates are N^2 r(x,y)
  double birth = 0.0;
  double death = 0.0;
  bool ghosts = false;
};

enum class EventKind { jump, birth, death, absorbed };

struct EventRecord {
  double time = 0.0;
  EventKind kind = EventKind::absorbed;
  std::size_t site = 0;
  std::size_t destination = 0;  // jumps only
};

/// Binary sum tree over non-negative site weights. Internal nodes are recomputed from
/// their children on every update, so the root never accumulates drift.
class SumTree {
 public:
  explicit SumTree(std::size_t size = 0);
  void set(std::size_t i, double w);
  double get(std::size_t i) const { return nodes_[leaves_ + i]; }
  double total() const { return nodes_[1]; }
  /// Leaf i such that the prefix sum before i is <= target < prefix through i.
  std::size_t find(double target) const;
  std::size_t size() const { return size_; }

 private:
  std::size_t size_ = 0;
  std::size_t leaves_ = 1;
  std::vector<double> nodes_;
};

/// Occupation numbers on a rate graph and the exact (Gillespie) event loop.
class ParticleState {
 public:
  ParticleState(const RateGraph& graph, std::vector<std::uint64_t> occupation,
                DynamicsParams params, std::uint64_t seed);

  const RateGraph& graph() const { return *graph_; }
  const DynamicsParams& params() const { return params_; }
  double time() const { return time_; }
  std::span<const std::uint64_t> occupation() const { return eta_; }
  std::span<const std::uint64_t> ghosts() const { return ghosts_; }
  std::uint64_t total_alive() const { return alive_; }
  std::uint64_t total_ghosts() const { return ghost_total_; }
  std::uint64_t jumps() const { return jumps_; }
  std::uint64_t births() const { return births_; }
  std::uint64_t deaths() const { return deaths_; }

  /// Per-particle event rate at x: N^2 r(x) + b + d.
  double site_rate(std::size_t x) const { return site_rate_[x]; }
  /// Aggregate W = sum_x eta(x) (N^2 r(x) + b + d), as maintained by the tree.
  double total_weight() const { return tree_.total(); }
  /// W summed directly from the occupation numbers.
  double recompute_total_weight() const;

  /// Advances by one event. Returns kind `absorbed` without changing the state when W = 0.
  EventRecord step();

  /// Draws the holding time and the event without applying it; split out so run() can
  /// integrate observables up to the event time first.
  EventRecord draw_event();
  void apply(const EventRecord& ev);
  void advance_to(double t) { time_ = t; }

  /// Rebuilds the sum tree from the occupation numbers.
  void refresh();

  Rng& rng() { return rng_; }

 private:
  void set_site(std::size_t x, std::uint64_t count);

  const RateGraph* graph_;
  DynamicsParams params_;
  Rng rng_;
  double time_ = 0.0;
  std::vector<std::uint64_t> eta_;
  std::vector<std::uint64_t> ghosts_;
  std::vector<double> site_rate_;
  SumTree tree_;
  std::uint64_t alive_ = 0;
  std::uint64_t ghost_total_ = 0;
  std::uint64_t jumps_ = 0;
  std::uint64_t births_ = 0;
  std::uint64_t deaths_ = 0;
  std::uint64_t since_refresh_ = 0;
};

/// Samples the initial occupation and builds the state. Stream split: the occupation
/// draw uses stream_seed(seed, 0) and the event loop stream_seed(seed, 1).
ParticleState init_particles(const RateGraph& graph, const InitialCondition& ic,
                             const DynamicsParams& params, std::uint64_t seed);

std::vector<std::uint64_t> sample_occupation(const RateGraph& graph, const InitialCondition& ic,
                                             double scale, std::uint64_t seed);

/// Site-level observable: values G(x/N) and the Dynkin drift L^N G(x) + (b - d) G(x/N).
struct SiteObservable {
  std::string id;
  std::vector<double> values;
  std::vector<double> drift;
};

SiteObservable make_observable(const RateGraph& graph, const DynamicsParams& params,
                               const TestFunction& g, std::string id);
/// Observable from arbitrary site values, e.g. a resolvent-corrected test function.
SiteObservable make_observable(const RateGraph& graph, const DynamicsParams& params,
                               std::vector<double> values, std::string id);

/// <pi^N, G> = N^{-n} sum_x eta(x) G(x/N).
double observe(const ParticleState& state, std::span<const double> site_values);
double observe(const ParticleState& state, const TestFunction& g);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<std::string> ids;
  std::vector<double> initial;                  // <pi_0, G> per observable
  std::vector<std::vector<double>> values;      // [obs][time]
  std::vector<std::vector<double>> compensator; // int_0^t <pi_s, L^N G + (b-d) G> ds
  std::vector<std::vector<double>> running_sup; // sup_{s<=t} <pi_s, G>
  std::vector<std::vector<double>> residual_sup_sq;  // sup_{s<=t} M_s^2
  std::vector<std::uint64_t> alive, jumps, births, deaths;
};

/// Runs the event loop until time >= T, recording observables at each grid time
/// (state after the last event at or before the grid time).
TrajectoryRecord run(ParticleState& state, double horizon, std::span<const SiteObservable> observables,
                     std::span<const double> grid);

/// M_t = <pi_t,G> - <pi_0,G> - int_0^t <pi_s, L^N G + (b-d)G> ds at each grid time.
std::vector<double> dynkin_residual(const TrajectoryRecord& record, std::size_t observable);

/// Axis-aligned box in macroscopic coordinates (site x is inside when x/N is).
struct ProbeBox {
  std::vector<double> lower;
  std::vector<double> upper;
  bool contains(std::span<const double> u) const;
};

struct GhostBound {
  double lhs = 0.0;  // mean over replicas of alive + ghost count in K at T
  double lhs_stderr = 0.0;
  double rhs = 0.0;  // C_K M e^{bT}, or M (sum_K r(x) + 1)(T v 1) when b = 0
  double c_k = 0.0;
  std::size_t sites_in_box = 0;
};

/// Compares replica final states (ghost mode on) against the first-moment bound.
/// Effective jump rates N^2 r(x) enter C_K.
GhostBound ghost_bound_check(std::span<const ParticleState> finals, const ProbeBox& box, double m,
                             double horizon);

struct KvTail {
  std::vector<double> a_grid;
  std::vector<double> tail;  // P(sup > A)
  double triple_norm = 0.0;
  double fitted_slope = 0.0;  // log-log slope over the mid tail
  double fitted_c = 0.0;      // max_A A * tail(A)
  std::size_t fit_points = 0;
};

/// Empirical tail of replica suprema. The slope is fitted on grid points whose tail
/// probability lies in [0.05, 0.5].
KvTail kv_supremum_check(std::span<const double> suprema, std::span<const double> a_grid,
                         double triple_norm);

}  // namespace brw
