#include "brw/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "brw/errors.hpp"
#include "brw/homogenize.hpp"
#include "brw/stats.hpp"

namespace brw {

namespace {
constexpr std::uint64_t kRefreshInterval = 100000;
}

// ---------------------------------------------------------------- InitialCondition

InitialCondition InitialCondition::constant(std::uint64_t m) {
  InitialCondition ic;
  ic.kind = Kind::constant;
  ic.count = m;
  return ic;
}

InitialCondition InitialCondition::poisson(double rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ParameterError("poisson mean must be finite and >= 0");
  InitialCondition ic;
  ic.kind = Kind::poisson;
  ic.rho = rho;
  return ic;
}

InitialCondition InitialCondition::from_profile(TestFunction rho0) {
  if (!std::isfinite(rho0.amplitude) || rho0.amplitude < 0.0)
    throw ParameterError("initial profile must be bounded and non-negative");
  InitialCondition ic;
  ic.kind = Kind::profile;
  ic.profile = std::move(rho0);
  return ic;
}

InitialCondition InitialCondition::parse(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ParameterError("initial condition '" + spec + "' lacks ':'");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  try {
    if (kind == "const") {
      std::size_t used = 0;
      const long long m = std::stoll(rest, &used);
      if (used != rest.size() || m < 0) throw ParameterError("bad count");
      return constant(static_cast<std::uint64_t>(m));
    }
    if (kind == "poisson") {
      std::size_t used = 0;
      const double rho = std::stod(rest, &used);
      if (used != rest.size()) throw ParameterError("bad mean");
      return poisson(rho);
    }
  } catch (const std::logic_error&) {
    throw ParameterError("malformed initial condition '" + spec + "'");
  }
  if (kind == "profile") return from_profile(TestFunction::parse(rest));
  throw ParameterError("unknown initial condition kind '" + kind + "'");
}

std::string InitialCondition::to_spec() const {
  switch (kind) {
    case Kind::constant: return "const:" + std::to_string(count);
    case Kind::poisson: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "poisson:%.17g", rho);
      return buf;
    }
    case Kind::profile: return "profile:" + profile.to_spec();
  }
  return {};
}

// ---------------------------------------------------------------- SumTree

SumTree::SumTree(std::size_t size) : size_(size) {
  while (leaves_ < size) leaves_ <<= 1;
  nodes_.assign(2 * leaves_, 0.0);
}

void SumTree::set(std::size_t i, double w) {
  i += leaves_;
  nodes_[i] = w;
  for (i >>= 1; i >= 1; i >>= 1) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

std::size_t SumTree::find(double target) const {
  std::size_t i = 1;
  while (i < leaves_) {
    const double left = nodes_[2 * i];
    if (target < left) {
      i = 2 * i;
    } else {
      target -= left;
      i = 2 * i + 1;
    }
  }
  return std::min(i - leaves_, size_ ? size_ - 1 : 0);
}

// ---------------------------------------------------------------- ParticleState

ParticleState::ParticleState(const RateGraph& graph, std::vector<std::uint64_t> occupation,
                             DynamicsParams params, std::uint64_t seed)
    : graph_(&graph), params_(params), rng_(seed), eta_(std::move(occupation)), tree_(graph.num_sites()) {
  if (!(params_.scale >= 1.0)) throw ParameterError("scale N must be >= 1");
  if (!(params_.birth >= 0.0) || !(params_.death >= 0.0))
    throw ParameterError("birth and death rates must be non-negative");
  if (eta_.size() != graph.num_sites()) throw ParameterError("occupation size differs from site count");
  const double speed = params_.scale * params_.scale;
  site_rate_.resize(eta_.size());
  for (std::size_t x = 0; x < eta_.size(); ++x)
    site_rate_[x] = speed * graph.total_rate(x) + params_.birth + params_.death;
  if (params_.ghosts) ghosts_.assign(eta_.size(), 0);
  refresh();
}

void ParticleState::refresh() {
  // Rebuild bottom-up; internal nodes are plain sums of children as in set().
  alive_ = 0;
  for (std::size_t x = 0; x < eta_.size(); ++x) {
    tree_.set(x, static_cast<double>(eta_[x]) * site_rate_[x]);
    alive_ += eta_[x];
  }
  since_refresh_ = 0;
}

double ParticleState::recompute_total_weight() const {
  double w = 0.0;
  for (std::size_t x = 0; x < eta_.size(); ++x) w += static_cast<double>(eta_[x]) * site_rate_[x];
  return w;
}

void ParticleState::set_site(std::size_t x, std::uint64_t count) {
  eta_[x] = count;
  tree_.set(x, static_cast<double>(count) * site_rate_[x]);
}

EventRecord ParticleState::draw_event() {
  EventRecord ev;
  const double total = tree_.total();
  if (!(total > 0.0)) {
    ev.kind = EventKind::absorbed;
    ev.time = std::numeric_limits<double>::infinity();
    return ev;
  }
  ev.time = time_ + exponential(rng_, total);
  std::size_t x = 0;
  for (int attempt = 0;; ++attempt) {
    x = tree_.find(uniform01(rng_) * total);
    if (eta_[x] > 0 && tree_.get(x) > 0.0) break;
    if (attempt > 64) {
      // Rounding pushed every draw onto empty leaves; fall back to a linear scan.
      x = static_cast<std::size_t>(std::find_if(eta_.begin(), eta_.end(), [](auto c) { return c > 0; }) -
                                   eta_.begin());
      break;
    }
  }
  ev.site = x;
  const double jump_rate = params_.scale * params_.scale * graph_->total_rate(x);
  const double u = uniform01(rng_) * site_rate_[x];
  if (u < jump_rate && graph_->degree(x) > 0) {
    ev.kind = EventKind::jump;
    const std::size_t k = graph_->sample_neighbor(x, uniform01(rng_));
    ev.destination = graph_->neighbors(x)[k];
  } else if (u < jump_rate + params_.birth) {
    ev.kind = EventKind::birth;
  } else {
    ev.kind = EventKind::death;
  }
  return ev;
}

void ParticleState::apply(const EventRecord& ev) {
  if (ev.kind == EventKind::absorbed) return;
  time_ = ev.time;
  const std::size_t x = ev.site;
  switch (ev.kind) {
    case EventKind::jump:
      set_site(x, eta_[x] - 1);
      set_site(ev.destination, eta_[ev.destination] + 1);
      ++jumps_;
      if (params_.ghosts) {
        ++ghosts_[x];
        ++ghost_total_;
      }
      break;
    case EventKind::birth:
      set_site(x, eta_[x] + 1);
      ++alive_;
      ++births_;
      break;
    case EventKind::death:
      set_site(x, eta_[x] - 1);
      --alive_;
      ++deaths_;
      break;
    default: break;
  }
  if (++since_refresh_ >= kRefreshInterval) refresh();
}

EventRecord ParticleState::step() {
  EventRecord ev = draw_event();
  apply(ev);
  return ev;
}

std::vector<std::uint64_t> sample_occupation(const RateGraph& graph, const InitialCondition& ic,
                                             double scale, std::uint64_t seed) {
  const std::size_t n = graph.num_sites();
  std::vector<std::uint64_t> eta(n, 0);
  Rng rng(seed);
  auto draw = [&](double mean) -> std::uint64_t {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::uint64_t> pois(mean);
    return pois(rng);
  };
  switch (ic.kind) {
    case InitialCondition::Kind::constant:
      std::fill(eta.begin(), eta.end(), ic.count);
      break;
    case InitialCondition::Kind::poisson:
      for (auto& e : eta) e = draw(ic.rho);
      break;
    case InitialCondition::Kind::profile: {
      if (!std::isfinite(ic.profile.amplitude) || ic.profile.amplitude < 0.0)
        throw ParameterError("initial profile must be bounded and non-negative");
      const auto rho0 = sample_on_sites(graph, scale, ic.profile);
      for (std::size_t x = 0; x < n; ++x) eta[x] = draw(rho0[x]);
      break;
    }
  }
  return eta;
}

ParticleState init_particles(const RateGraph& graph, const InitialCondition& ic,
                             const DynamicsParams& params, std::uint64_t seed) {
  if (!(params.birth >= 0.0) || !(params.death >= 0.0))
    throw ParameterError("birth and death rates must be non-negative");
  if (!(params.scale >= 1.0)) throw ParameterError("scale N must be >= 1");
  return ParticleState(graph, sample_occupation(graph, ic, params.scale, stream_seed(seed, 0)), params,
                       stream_seed(seed, 1));
}

// ---------------------------------------------------------------- observables

SiteObservable make_observable(const RateGraph& graph, const DynamicsParams& params,
                               std::vector<double> values, std::string id) {
  if (values.size() != graph.num_sites()) throw ParameterError("observable needs one value per site");
  SiteObservable obs;
  obs.id = std::move(id);
  obs.drift = apply_generator(graph, params.scale, values);
  const double net = params.birth - params.death;
  for (std::size_t x = 0; x < values.size(); ++x) obs.drift[x] += net * values[x];
  obs.values = std::move(values);
  return obs;
}

SiteObservable make_observable(const RateGraph& graph, const DynamicsParams& params,
                               const TestFunction& g, std::string id) {
  return make_observable(graph, params, sample_on_sites(graph, params.scale, g), std::move(id));
}

double observe(const ParticleState& state, std::span<const double> site_values) {
  const auto eta = state.occupation();
  double s = 0.0;
  for (std::size_t x = 0; x < eta.size(); ++x)
    if (eta[x]) s += static_cast<double>(eta[x]) * site_values[x];
  return s / std::pow(state.params().scale, state.graph().cloud().dim);
}

double observe(const ParticleState& state, const TestFunction& g) {
  return observe(state, sample_on_sites(state.graph(), state.params().scale, g));
}

TrajectoryRecord run(ParticleState& state, double horizon, std::span<const SiteObservable> observables,
                     std::span<const double> grid) {
  if (!(horizon > state.time())) throw ParameterError("horizon must exceed the current time");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < state.time() || grid[i] > horizon)
      throw ParameterError("observation times must lie within [t0, T]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ParameterError("observation times must be strictly increasing");
  }
  const std::size_t nobs = observables.size();
  const double inv_volume = std::pow(state.params().scale, -state.graph().cloud().dim);

  TrajectoryRecord rec;
  rec.times.assign(grid.begin(), grid.end());
  rec.values.assign(nobs, {});
  rec.compensator.assign(nobs, {});
  rec.running_sup.assign(nobs, {});
  rec.residual_sup_sq.assign(nobs, {});
  std::vector<double> value(nobs), drift(nobs), comp(nobs, 0.0), sup(nobs), sup_m2(nobs, 0.0);
  auto recompute = [&] {
    for (std::size_t k = 0; k < nobs; ++k) {
      value[k] = observe(state, observables[k].values);
      drift[k] = observe(state, observables[k].drift);
    }
  };
  recompute();
  for (std::size_t k = 0; k < nobs; ++k) {
    rec.ids.push_back(observables[k].id);
    rec.initial.push_back(value[k]);
    sup[k] = value[k];
  }
  auto track_residual = [&] {
    for (std::size_t k = 0; k < nobs; ++k) {
      const double m = value[k] - rec.initial[k] - comp[k];
      sup_m2[k] = std::max(sup_m2[k], m * m);
    }
  };
  auto record = [&] {
    for (std::size_t k = 0; k < nobs; ++k) {
      rec.values[k].push_back(value[k]);
      rec.compensator[k].push_back(comp[k]);
      rec.running_sup[k].push_back(sup[k]);
      rec.residual_sup_sq[k].push_back(sup_m2[k]);
    }
    rec.alive.push_back(state.total_alive());
    rec.jumps.push_back(state.jumps());
    rec.births.push_back(state.births());
    rec.deaths.push_back(state.deaths());
  };
  auto integrate_to = [&](double t_from, double t_to) {
    for (std::size_t k = 0; k < nobs; ++k) comp[k] += drift[k] * (t_to - t_from);
  };

  double t = state.time();
  std::size_t gi = 0;
  std::uint64_t events = 0;
  while (true) {
    const EventRecord ev = state.draw_event();
    const double t_next = ev.time;
    while (gi < grid.size() && grid[gi] < t_next) {
      integrate_to(t, grid[gi]);
      t = grid[gi];
      track_residual();
      record();
      ++gi;
    }
    if (t_next > horizon) {
      integrate_to(t, horizon);
      t = horizon;
      track_residual();
      state.advance_to(horizon);
      break;
    }
    integrate_to(t, t_next);
    t = t_next;
    track_residual();
    state.apply(ev);
    const auto& obs = observables;
    switch (ev.kind) {
      case EventKind::jump:
        for (std::size_t k = 0; k < nobs; ++k) {
          value[k] += (obs[k].values[ev.destination] - obs[k].values[ev.site]) * inv_volume;
          drift[k] += (obs[k].drift[ev.destination] - obs[k].drift[ev.site]) * inv_volume;
        }
        break;
      case EventKind::birth:
        for (std::size_t k = 0; k < nobs; ++k) {
          value[k] += obs[k].values[ev.site] * inv_volume;
          drift[k] += obs[k].drift[ev.site] * inv_volume;
        }
        break;
      case EventKind::death:
        for (std::size_t k = 0; k < nobs; ++k) {
          value[k] -= obs[k].values[ev.site] * inv_volume;
          drift[k] -= obs[k].drift[ev.site] * inv_volume;
        }
        break;
      default: break;
    }
    if (++events % kRefreshInterval == 0) recompute();
    for (std::size_t k = 0; k < nobs; ++k) sup[k] = std::max(sup[k], value[k]);
    track_residual();
  }
  return rec;
}

std::vector<double> dynkin_residual(const TrajectoryRecord& record, std::size_t observable) {
  const auto& v = record.values.at(observable);
  const auto& c = record.compensator.at(observable);
  std::vector<double> m(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i] - record.initial[observable] - c[i];
  return m;
}

// ---------------------------------------------------------------- diagnostics

bool ProbeBox::contains(std::span<const double> u) const {
  for (std::size_t k = 0; k < u.size(); ++k)
    if (u[k] < lower[k] || u[k] > upper[k]) return false;
  return true;
}

GhostBound ghost_bound_check(std::span<const ParticleState> finals, const ProbeBox& box, double m,
                             double horizon) {
  if (finals.empty()) throw ParameterError("ghost bound needs at least one replica");
  for (const auto& s : finals)
    if (!s.params().ghosts) throw UsageError("ghost bound check requires ghost mode");
  const RateGraph& graph = finals.front().graph();
  const DynamicsParams& p = finals.front().params();
  const PointCloud& cloud = graph.cloud();
  std::vector<std::size_t> inside;
  std::vector<double> u(static_cast<std::size_t>(cloud.dim));
  for (std::size_t x = 0; x < cloud.size(); ++x) {
    auto pt = cloud.point(x);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = pt[k] / p.scale;
    if (box.contains(u)) inside.push_back(x);
  }
  GhostBound out;
  out.sites_in_box = inside.size();
  const double speed = p.scale * p.scale;
  double rate_sum = 0.0;
  for (std::size_t x : inside) rate_sum += speed * graph.total_rate(x);
  if (p.birth > 0.0) {
    out.c_k = rate_sum / p.birth + static_cast<double>(inside.size());
    out.rhs = out.c_k * m * std::exp(p.birth * horizon);
  } else {
    out.c_k = rate_sum + 1.0;
    out.rhs = m * out.c_k * std::max(horizon, 1.0);
  }
  std::vector<double> counts;
  counts.reserve(finals.size());
  for (const auto& s : finals) {
    double c = 0.0;
    for (std::size_t x : inside) c += static_cast<double>(s.occupation()[x] + s.ghosts()[x]);
    counts.push_back(c);
  }
  const auto ms = mean_stderr(counts);
  out.lhs = ms.mean;
  out.lhs_stderr = ms.stderr_;
  return out;
}

KvTail kv_supremum_check(std::span<const double> suprema, std::span<const double> a_grid,
                         double triple_norm) {
  KvTail out;
  out.a_grid.assign(a_grid.begin(), a_grid.end());
  out.triple_norm = triple_norm;
  const double count = static_cast<double>(std::max<std::size_t>(suprema.size(), 1));
  std::vector<double> lx, ly;
  for (double a : a_grid) {
    const auto above = std::count_if(suprema.begin(), suprema.end(), [&](double s) { return s > a; });
    const double tail = static_cast<double>(above) / count;
    out.tail.push_back(tail);
    out.fitted_c = std::max(out.fitted_c, a * tail);
    if (a > 0.0 && tail >= 0.05 && tail <= 0.5) {
      lx.push_back(std::log(a));
      ly.push_back(std::log(tail));
    }
  }
  out.fit_points = lx.size();
  out.fitted_slope = lx.size() >= 2 ? linear_fit(lx, ly).slope : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace brw
