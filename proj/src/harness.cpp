#include "brw/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "brw/errors.hpp"
#include "brw/format.hpp"
#include "brw/homogenize.hpp"
#include "brw/parallel.hpp"
#include "brw/pde.hpp"
#include "brw/random.hpp"
#include "brw/stats.hpp"

#ifndef BRW_VERSION
#define BRW_VERSION "0.0.0"
#endif

namespace brw {

namespace {

constexpr double kMargin = 5.0;

// Stream tags for the root seed split.
constexpr std::uint64_t kSigmaCloud = 0x51;
constexpr std::uint64_t kSigmaPercolation = 0x52;
constexpr std::uint64_t kSigmaWalkers = 0x53;
constexpr std::uint64_t kScaleCloud = 0x1000;
constexpr std::uint64_t kScalePercolation = 0x2000;
constexpr std::uint64_t kScaleReplicas = 0x3000;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

class Reader {
 public:
  explicit Reader(std::vector<std::string>& problems) : problems_(problems) {}

  void real(const boost::property_tree::ptree& sec, const std::string& name, const std::string& key,
            double& out) {
    if (auto v = sec.get_optional<std::string>(key)) {
      try {
        std::size_t used = 0;
        const std::string t = trim(*v);
        const double d = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument("trailing");
        out = d;
      } catch (const std::exception&) {
        problems_.push_back(name + "." + key + ": cannot parse '" + *v + "' as a number");
      }
    }
  }

  template <class Int>
  void integer(const boost::property_tree::ptree& sec, const std::string& name, const std::string& key,
               Int& out) {
    if (auto v = sec.get_optional<std::string>(key)) {
      try {
        std::size_t used = 0;
        const std::string t = trim(*v);
        const long long i = std::stoll(t, &used);
        if (used != t.size() || i < 0) throw std::invalid_argument("bad");
        out = static_cast<Int>(i);
      } catch (const std::exception&) {
        problems_.push_back(name + "." + key + ": cannot parse '" + *v + "' as a non-negative integer");
      }
    }
  }

  void reals(const boost::property_tree::ptree& sec, const std::string& name, const std::string& key,
             std::vector<double>& out) {
    if (auto v = sec.get_optional<std::string>(key)) {
      out.clear();
      for (const auto& item : split_list(*v)) {
        try {
          std::size_t used = 0;
          const double d = std::stod(item, &used);
          if (used != item.size()) throw std::invalid_argument("trailing");
          out.push_back(d);
        } catch (const std::exception&) {
          problems_.push_back(name + "." + key + ": cannot parse list entry '" + item + "'");
        }
      }
    }
  }

  void boolean(const boost::property_tree::ptree& sec, const std::string& name, const std::string& key,
               bool& out) {
    if (auto v = sec.get_optional<std::string>(key)) {
      const std::string t = trim(*v);
      if (t == "true" || t == "1" || t == "yes") out = true;
      else if (t == "false" || t == "0" || t == "no") out = false;
      else problems_.push_back(name + "." + key + ": expected true or false, got '" + *v + "'");
    }
  }

  template <class Fn>
  void custom(const boost::property_tree::ptree& sec, const std::string& name, const std::string& key,
              Fn&& fn) {
    if (auto v = sec.get_optional<std::string>(key)) {
      try {
        fn(trim(*v));
      } catch (const std::exception& e) {
        problems_.push_back(name + "." + key + ": " + e.what());
      }
    }
  }

 private:
  std::vector<std::string>& problems_;
};

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"geometry", {"gamma", "side", "dim", "cutoff", "topology", "percolation", "alpha", "beta", "tau"}},
      {"dynamics", {"birth", "death", "T", "initial", "scales", "replicas", "obs_times", "ghosts"}},
      {"homogenization",
       {"method", "sigma2", "tol", "t_max", "walkers", "side", "topology", "resolvent_lambda"}},
      {"observables", {}},
      {"seeds", {"root"}},
      {"output", {"dir", "formats"}},
  };
  return s;
}

std::vector<double> window_center(const ExperimentConfig& c) {
  return std::vector<double>(static_cast<std::size_t>(c.geometry.dim), 0.5 * c.geometry.side);
}

std::shared_ptr<const RateGraph> make_graph(std::shared_ptr<const PointCloud> cloud, const GeometryConfig& g,
                                            std::uint64_t perc_seed) {
  auto graph = std::make_shared<RateGraph>(build_graph(std::move(cloud), g.cutoff));
  switch (g.percolation) {
    case PercolationKind::none: break;
    case PercolationKind::long_range:
      graph = std::make_shared<RateGraph>(percolate_long_range(*graph, g.alpha, g.beta, perc_seed));
      break;
    case PercolationKind::scale_free:
      graph = std::make_shared<RateGraph>(percolate_scale_free(*graph, g.alpha, g.beta, g.tau, perc_seed));
      break;
  }
  return graph;
}

}  // namespace

// ---------------------------------------------------------------- config

std::vector<double> ExperimentConfig::observation_grid() const {
  std::vector<double> grid = dynamics.obs_times;
  grid.push_back(dynamics.horizon);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  const auto& g = geometry;
  out << "geometry.gamma=" << format_double(g.gamma) << "\n"
      << "geometry.side=" << format_double(g.side) << "\n"
      << "geometry.dim=" << g.dim << "\n"
      << "geometry.cutoff=" << format_double(g.cutoff) << "\n"
      << "geometry.topology=" << to_string(g.topology) << "\n"
      << "geometry.percolation=" << to_string(g.percolation) << "\n"
      << "geometry.alpha=" << format_double(g.alpha) << "\n"
      << "geometry.beta=" << format_double(g.beta) << "\n"
      << "geometry.tau=" << format_double(g.tau) << "\n";
  const auto& d = dynamics;
  out << "dynamics.birth=" << format_double(d.birth) << "\n"
      << "dynamics.death=" << format_double(d.death) << "\n"
      << "dynamics.T=" << format_double(d.horizon) << "\n"
      << "dynamics.initial=" << d.initial.to_spec() << "\n"
      << "dynamics.scales=" << join_doubles(d.scales) << "\n"
      << "dynamics.replicas=" << d.replicas << "\n"
      << "dynamics.obs_times=" << join_doubles(d.obs_times) << "\n"
      << "dynamics.ghosts=" << (d.ghosts ? "true" : "false") << "\n";
  const auto& h = homogenization;
  out << "homogenization.method=" << h.method << "\n"
      << "homogenization.sigma2=" << format_double(h.sigma2) << "\n"
      << "homogenization.tol=" << format_double(h.tol) << "\n"
      << "homogenization.t_max=" << format_double(h.t_max) << "\n"
      << "homogenization.walkers=" << h.walkers << "\n"
      << "homogenization.side=" << format_double(h.side) << "\n"
      << "homogenization.topology=" << to_string(h.topology) << "\n"
      << "homogenization.resolvent_lambda=" << format_double(h.resolvent_lambda) << "\n";
  for (const auto& o : observables) out << "observables." << o.id << "=" << o.fn.to_spec() << "\n";
  out << "seeds.root=" << root_seed << "\n";
  out << "output.dir=" << output.dir << "\n";
  out << "output.formats=";
  for (std::size_t i = 0; i < output.formats.size(); ++i) out << (i ? "," : "") << output.formats[i];
  out << "\n";
  out << "run.fixed_cloud=" << (fixed_cloud ? "true" : "false") << "\n";
  return out.str();
}

std::string ExperimentConfig::hash() const {
  const std::string text = canonical();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({"line " + std::to_string(e.line()) + ": " + e.message()});
  }
  // The ini reader keeps trailing comments as part of the value.
  for (auto& [section, body] : tree)
    for (auto& kv : body) {
      std::string v = kv.second.data();
      for (std::size_t i = 1; i < v.size(); ++i)
        if ((v[i] == '#' || v[i] == ';') && std::isspace(static_cast<unsigned char>(v[i - 1]))) {
          v = trim(v.substr(0, i));
          break;
        }
      kv.second.data() = v;
    }

  std::vector<std::string> problems;
  for (const auto& [section, body] : tree) {
    auto it = schema().find(section);
    if (it == schema().end()) {
      problems.push_back("unknown section [" + section + "]");
      continue;
    }
    if (body.empty() && !body.data().empty()) {
      problems.push_back("key '" + section + "' outside any section");
      continue;
    }
    if (section == "observables") continue;
    for (const auto& kv : body)
      if (!it->second.count(kv.first)) problems.push_back("unknown key '" + kv.first + "' in [" + section + "]");
  }

  ExperimentConfig c;
  Reader r(problems);
  const pt::ptree empty;
  auto sec = [&](const char* name) -> const pt::ptree& {
    auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };

  const auto& geo = sec("geometry");
  r.real(geo, "geometry", "gamma", c.geometry.gamma);
  r.real(geo, "geometry", "side", c.geometry.side);
  r.integer(geo, "geometry", "dim", c.geometry.dim);
  r.real(geo, "geometry", "cutoff", c.geometry.cutoff);
  r.custom(geo, "geometry", "topology", [&](const std::string& v) { c.geometry.topology = parse_topology(v); });
  r.custom(geo, "geometry", "percolation",
           [&](const std::string& v) { c.geometry.percolation = parse_percolation(v); });
  r.real(geo, "geometry", "alpha", c.geometry.alpha);
  r.real(geo, "geometry", "beta", c.geometry.beta);
  r.real(geo, "geometry", "tau", c.geometry.tau);

  const auto& dyn = sec("dynamics");
  r.real(dyn, "dynamics", "birth", c.dynamics.birth);
  r.real(dyn, "dynamics", "death", c.dynamics.death);
  r.real(dyn, "dynamics", "T", c.dynamics.horizon);
  r.custom(dyn, "dynamics", "initial",
           [&](const std::string& v) { c.dynamics.initial = InitialCondition::parse(v); });
  r.reals(dyn, "dynamics", "scales", c.dynamics.scales);
  r.integer(dyn, "dynamics", "replicas", c.dynamics.replicas);
  r.reals(dyn, "dynamics", "obs_times", c.dynamics.obs_times);
  r.boolean(dyn, "dynamics", "ghosts", c.dynamics.ghosts);

  const auto& hom = sec("homogenization");
  r.custom(hom, "homogenization", "method", [&](const std::string& v) { c.homogenization.method = v; });
  r.real(hom, "homogenization", "sigma2", c.homogenization.sigma2);
  r.real(hom, "homogenization", "tol", c.homogenization.tol);
  r.real(hom, "homogenization", "t_max", c.homogenization.t_max);
  r.integer(hom, "homogenization", "walkers", c.homogenization.walkers);
  r.real(hom, "homogenization", "side", c.homogenization.side);
  r.custom(hom, "homogenization", "topology",
           [&](const std::string& v) { c.homogenization.topology = parse_topology(v); });
  r.real(hom, "homogenization", "resolvent_lambda", c.homogenization.resolvent_lambda);

  for (const auto& [id, value] : sec("observables")) {
    try {
      c.observables.push_back({id, TestFunction::parse(trim(value.data()))});
    } catch (const std::exception& e) {
      problems.push_back("observables." + id + ": " + e.what());
    }
  }

  r.integer(sec("seeds"), "seeds", "root", c.root_seed);

  const auto& outp = sec("output");
  r.custom(outp, "output", "dir", [&](const std::string& v) { c.output.dir = v; });
  r.custom(outp, "output", "formats", [&](const std::string& v) { c.output.formats = split_list(v); });

  if (problems.empty()) {
    auto more = validate(c);
    problems.insert(problems.end(), more.begin(), more.end());
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  return parse_config(in);
}

double observable_margin(const ExperimentConfig& config, const TestFunction& g, double scale) {
  if (g.kind == TestFunction::Kind::constant) return std::numeric_limits<double>::infinity();
  const auto fallback = window_center(config);
  const TestFunction fn = g.resolved(config.geometry.dim, fallback);
  const double r = fn.support_radius();
  double margin = std::numeric_limits<double>::infinity();
  for (double c : fn.center) margin = std::min({margin, c - r, config.geometry.side - c - r});
  return margin - config.geometry.cutoff / scale;
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> p;
  const auto& g = c.geometry;
  if (!(g.gamma > 0.0)) p.push_back("geometry.gamma must be positive");
  if (!(g.side > 0.0)) p.push_back("geometry.side must be positive");
  if (g.dim < 2) p.push_back("geometry.dim must be at least 2");
  if (!(g.cutoff > 0.0)) p.push_back("geometry.cutoff must be positive");
  if (g.percolation != PercolationKind::none) {
    if (!(g.alpha > 0.0)) p.push_back("geometry.alpha must be positive");
    if (!(g.beta > 0.0)) p.push_back("geometry.beta must be positive");
    if (g.percolation == PercolationKind::scale_free && !(g.tau > 1.0))
      p.push_back("geometry.tau must exceed 1");
  }

  const auto& d = c.dynamics;
  if (!(d.birth >= 0.0)) p.push_back("dynamics.birth must be non-negative");
  if (!(d.death >= 0.0)) p.push_back("dynamics.death must be non-negative");
  if (!(d.horizon > 0.0)) p.push_back("dynamics.T must be positive");
  if (d.replicas < 1) p.push_back("dynamics.replicas must be at least 1");
  for (double t : d.obs_times)
    if (!(t >= 0.0) || t > d.horizon) p.push_back("dynamics.obs_times entry " + format_double(t) + " outside [0, T]");

  const auto& h = c.homogenization;
  if (h.method != "corrector" && h.method != "msd" && h.method != "fixed")
    p.push_back("homogenization.method must be corrector, msd or fixed");
  if (h.method == "fixed" && !(h.sigma2 > 0.0)) p.push_back("homogenization.sigma2 must be positive for method fixed");
  if (!(h.tol > 0.0)) p.push_back("homogenization.tol must be positive");
  if (!(h.t_max > 0.0)) p.push_back("homogenization.t_max must be positive");
  if (h.walkers < 1) p.push_back("homogenization.walkers must be at least 1");
  if (!(h.side > 0.0)) p.push_back("homogenization.side must be positive");
  if (h.method == "corrector" && h.topology != Topology::periodic)
    p.push_back("homogenization.topology must be periodic for the corrector");
  if (h.topology == Topology::periodic && g.cutoff > 0.5 * h.side)
    p.push_back("homogenization.side must be at least twice geometry.cutoff");
  if (!(h.resolvent_lambda >= 0.0)) p.push_back("homogenization.resolvent_lambda must be non-negative");

  if (c.observables.empty()) p.push_back("at least one observable is required");
  std::set<std::string> ids;
  for (const auto& o : c.observables)
    if (!ids.insert(o.id).second) p.push_back("duplicate observable id '" + o.id + "'");

  for (double n : d.scales) {
    if (!(n >= 1.0)) {
      p.push_back("dynamics.scales entry " + format_double(n) + " must be >= 1");
      continue;
    }
    if (g.topology == Topology::periodic && g.cutoff > 0.5 * g.side * n)
      p.push_back("scale N=" + format_double(n) + ": cutoff exceeds half the periodic box side");
    for (const auto& o : c.observables) {
      const double m = observable_margin(c, o.fn, n);
      if (m < kMargin)
        p.push_back("scale N=" + format_double(n) + ": observable '" + o.id + "' has margin " + format_double(m) +
                    " < " + format_double(kMargin));
    }
  }
  for (const auto& f : c.output.formats)
    if (f != "csv" && f != "json") p.push_back("output.formats entry '" + f + "' is not csv or json");
  return p;
}

// ---------------------------------------------------------------- PDE reference

double pde_reference(const ExperimentConfig& config, double sigma2, const TestFunction& g_in) {
  const int dim = config.geometry.dim;
  const double gamma = config.geometry.gamma;
  const double horizon = config.dynamics.horizon;
  const double r_net = config.dynamics.birth - config.dynamics.death;
  const PdeProblem problem{sigma2, r_net, dim};
  const auto center = window_center(config);
  const TestFunction g = g_in.resolved(dim, center);
  const double box_volume = std::pow(config.geometry.side, dim);
  auto integral_of_g = [&] { return g.kind == TestFunction::Kind::constant ? g.amplitude * box_volume : g.integral(dim); };

  const InitialCondition& ic = config.dynamics.initial;
  double uniform_density = -1.0;
  if (ic.kind == InitialCondition::Kind::constant) uniform_density = static_cast<double>(ic.count);
  if (ic.kind == InitialCondition::Kind::poisson) uniform_density = ic.rho;
  if (ic.kind == InitialCondition::Kind::profile && ic.profile.kind == TestFunction::Kind::constant)
    uniform_density = ic.profile.amplitude;
  if (uniform_density >= 0.0) return gamma * uniform_density * std::exp(r_net * horizon) * integral_of_g();

  // Sampling Poisson(rho0(x/N)) on an intensity-gamma cloud gives limiting density gamma rho0.
  TestFunction rho0 = ic.profile.resolved(dim, center);
  rho0.amplitude *= gamma;

  if (rho0.kind == TestFunction::Kind::gaussian) {
    const TestFunction rho_t = evolve_gaussian(problem, rho0, horizon);
    if (g.kind == TestFunction::Kind::gaussian) return gaussian_overlap(rho_t, g, dim);
    if (g.kind == TestFunction::Kind::constant) return g.amplitude * rho_t.integral(dim);
    const double h = g.width / (dim == 2 ? 200.0 : 40.0);
    return integrate_against(gaussian_field(problem, rho0, horizon, GridSpec::centered(g.center, g.width, h)), g);
  }

  // Compactly supported data: explicit finite differences on a padded box.
  const double spread = std::sqrt(2.0 * sigma2 * horizon);
  const double half = rho0.width + 6.0 * spread + 1.0;
  const double h = std::min(rho0.width / 20.0, half / 100.0);
  const GridSpec grid = GridSpec::centered(rho0.center, half, h);
  const DensityField field = fd_solve(problem, sample_field(grid, rho0), horizon, 0.5 * max_stable_dt(problem, h));
  if (g.kind == TestFunction::Kind::constant) return g.amplitude * integrate(field);
  return integrate_against(field, g);
}

// ---------------------------------------------------------------- experiment

ConvergenceReport run_hydro_experiment(const ExperimentConfig& config, const RunOptions& options) {
  ConvergenceReport rep;
  rep.config = config;
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  std::string stage;
  auto fail = [&](const std::string& what) {
    rep.complete = false;
    rep.failed_stage = stage;
    rep.error = what;
    throw StageError(stage, what, rep);
  };

  stage = "validate";
  if (auto problems = validate(config); !problems.empty()) fail(ConfigError(problems).what());

  const auto& geo = config.geometry;
  const auto& hom = config.homogenization;
  const auto& dyn = config.dynamics;
  const std::uint64_t root = config.root_seed;

  try {
    stage = "sigma2";
    SigmaProvenance& s = rep.sigma2;
    s.method = hom.method;
    if (hom.method == "fixed") {
      s.value = hom.sigma2;
    } else {
      s.sample_side = hom.side;
      s.seed = stream_seed(root, kSigmaCloud);
      auto cloud = std::make_shared<const PointCloud>(
          sample_poisson_cloud(geo.gamma, hom.side, geo.dim, hom.topology, s.seed));
      auto graph = make_graph(cloud, geo, stream_seed(root, kSigmaPercolation));
      s.num_points = graph->num_sites();
      log("sigma2: " + hom.method + " on " + std::to_string(s.num_points) + " points");
      if (hom.method == "corrector") {
        const auto sol = solve_corrector(*graph, {}, hom.tol);
        s.value = sol.sigma2;
        s.residual = sol.residual;
        s.iterations = sol.iterations;
        if (sol.degenerate) log("warning: corrector sigma2 is near zero (degenerate diffusion)");
      } else {
        const auto est = msd_diffusivity(*graph, hom.t_max, hom.walkers, stream_seed(root, kSigmaWalkers),
                                         options.jobs);
        s.value = est.sigma2;
        s.stderr_ = est.stderr_;
      }
    }
    log("sigma2 = " + format_double(s.value));

    stage = "pde";
    for (const auto& o : config.observables) {
      rep.observable_ids.push_back(o.id);
      rep.pde_ref.push_back(pde_reference(config, s.value, o.fn));
    }
    if (hom.resolvent_lambda > 0.0) {
      for (std::size_t k = 0; k < config.observables.size(); ++k) {
        rep.observable_ids.push_back(config.observables[k].id + "@resolvent");
        rep.pde_ref.push_back(rep.pde_ref[k]);
      }
    }

    stage = "simulate";
    const std::vector<double> grid = config.observation_grid();
    std::shared_ptr<const PointCloud> master;
    if (config.fixed_cloud && !dyn.scales.empty()) {
      const double nmax = *std::max_element(dyn.scales.begin(), dyn.scales.end());
      master = std::make_shared<const PointCloud>(
          sample_poisson_cloud(geo.gamma, geo.side * nmax, geo.dim, geo.topology, stream_seed(root, kScaleCloud)));
    }
    for (std::size_t i = 0; i < dyn.scales.size(); ++i) {
      const double n = dyn.scales[i];
      std::shared_ptr<const PointCloud> cloud;
      if (master) {
        cloud = master->side == geo.side * n ? master
                                             : std::make_shared<const PointCloud>(restrict_cloud(*master, geo.side * n));
      } else {
        cloud = std::make_shared<const PointCloud>(
            sample_poisson_cloud(geo.gamma, geo.side * n, geo.dim, geo.topology, stream_seed(root, kScaleCloud + 1 + i)));
      }
      const auto graph =
          make_graph(cloud, geo, stream_seed(root, master ? kScalePercolation : kScalePercolation + 1 + i));
      const DynamicsParams params{n, dyn.birth, dyn.death, dyn.ghosts};

      std::vector<SiteObservable> observables;
      for (const auto& o : config.observables) observables.push_back(make_observable(*graph, params, o.fn, o.id));
      if (hom.resolvent_lambda > 0.0) {
        for (const auto& o : config.observables) {
          auto sol = solve_resolvent(*graph, n, hom.resolvent_lambda, o.fn, s.value, hom.tol);
          observables.push_back(make_observable(*graph, params, std::move(sol.values), o.id + "@resolvent"));
        }
      }
      log("N=" + format_double(n) + ": " + std::to_string(graph->num_sites()) + " points, " +
          std::to_string(graph->num_directed_edges()) + " directed edges");

      ScaleResult res;
      res.scale = n;
      res.num_points = graph->num_sites();
      res.num_edges = graph->num_directed_edges();
      res.replicas.resize(dyn.replicas);
      const std::uint64_t scale_seed = stream_seed(root, kScaleReplicas + i);
      parallel_for(dyn.replicas, options.jobs, [&](std::size_t r) {
        ParticleState state = init_particles(*graph, dyn.initial, params, stream_seed(scale_seed, r));
        res.replicas[r] = run(state, dyn.horizon, observables, grid);
      });

      const double volume_factor = std::pow(n, geo.dim);
      for (std::size_t k = 0; k < observables.size(); ++k) {
        std::vector<double> finals, residuals;
        for (const auto& rec : res.replicas) {
          finals.push_back(rec.values[k].back());
          residuals.push_back(dynkin_residual(rec, k).back());
        }
        ObservableStats st;
        st.id = observables[k].id;
        const auto fm = mean_stderr(finals);
        const auto dm = mean_stderr(residuals);
        st.mean = fm.mean;
        st.stderr_ = fm.stderr_;
        st.pde_ref = rep.pde_ref[k];
        st.rel_error = std::abs(st.mean - st.pde_ref) / std::max(std::abs(st.pde_ref), 1e-12);
        st.dynkin_mean = dm.mean;
        st.dynkin_stderr = dm.stderr_;
        st.scaled_variance = volume_factor * dm.stderr_ * dm.stderr_ * static_cast<double>(residuals.size());
        res.observables.push_back(st);
      }
      log("N=" + format_double(n) + ": mean " + format_double(res.observables.front().mean) + " vs " +
          format_double(res.observables.front().pde_ref));
      rep.scales.push_back(std::move(res));
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail(e.what());
  }
  rep.complete = true;
  return rep;
}

// ---------------------------------------------------------------- output

void emit_report(const ConvergenceReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + dir + "'");

  auto open = [&](const std::string& name) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + (fs::path(dir) / name).string() + "'");
    return out;
  };
  const auto& formats = report.config.output.formats;
  const bool csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
  const bool json = std::find(formats.begin(), formats.end(), "json") != formats.end();
  std::vector<std::string> files;

  if (json) {
    nlohmann::ordered_json j;
    j["complete"] = report.complete;
    if (!report.complete) {
      j["failed_stage"] = report.failed_stage;
      j["error"] = report.error;
    }
    j["config_hash"] = report.config.hash();
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    std::istringstream lines(report.config.canonical());
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find('=');
      cfg[line.substr(0, eq)] = line.substr(eq + 1);
    }
    j["config"] = cfg;
    const auto& s = report.sigma2;
    j["sigma2"] = {{"value", s.value},        {"stderr", s.stderr_},       {"method", s.method},
                   {"sample_side", s.sample_side}, {"num_points", s.num_points}, {"seed", s.seed},
                   {"residual", s.residual},  {"iterations", s.iterations}};
    j["observables"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < report.observable_ids.size(); ++k)
      j["observables"].push_back({{"id", report.observable_ids[k]}, {"pde_ref", report.pde_ref[k]}});
    j["scales"] = nlohmann::ordered_json::array();
    for (const auto& sc : report.scales) {
      nlohmann::ordered_json e{{"N", sc.scale},
                               {"num_points", sc.num_points},
                               {"num_directed_edges", sc.num_edges},
                               {"replicas", sc.replicas.size()}};
      e["observables"] = nlohmann::ordered_json::array();
      for (const auto& st : sc.observables)
        e["observables"].push_back({{"id", st.id},
                                    {"mean", st.mean},
                                    {"stderr", st.stderr_},
                                    {"pde_ref", st.pde_ref},
                                    {"rel_error", st.rel_error},
                                    {"dynkin_mean", st.dynkin_mean},
                                    {"dynkin_stderr", st.dynkin_stderr},
                                    {"scaled_variance", st.scaled_variance}});
      j["scales"].push_back(e);
    }
    open("report.json") << j.dump(2) << "\n";
    files.push_back("report.json");
  }

  if (csv) {
    auto traj = open("trajectories.csv");
    traj << "N,replica,time,observable_id,value,compensator,dynkin_residual,total_alive,jumps,births,deaths\n";
    for (const auto& sc : report.scales) {
      for (std::size_t r = 0; r < sc.replicas.size(); ++r) {
        const auto& rec = sc.replicas[r];
        for (std::size_t ti = 0; ti < rec.times.size(); ++ti) {
          for (std::size_t k = 0; k < rec.ids.size(); ++k) {
            const double m = rec.values[k][ti] - rec.initial[k] - rec.compensator[k][ti];
            traj << format_double(sc.scale) << ',' << r << ',' << format_double(rec.times[ti]) << ',' << rec.ids[k]
                 << ',' << format_double(rec.values[k][ti]) << ',' << format_double(rec.compensator[k][ti]) << ','
                 << format_double(m) << ',' << rec.alive[ti] << ',' << rec.jumps[ti] << ',' << rec.births[ti]
                 << ',' << rec.deaths[ti] << '\n';
          }
        }
      }
    }
    files.push_back("trajectories.csv");

    auto err = open("errors.csv");
    err << "N,mean,stderr,pde_ref,rel_error\n";
    for (const auto& sc : report.scales) {
      if (sc.observables.empty()) continue;
      const auto& st = sc.observables.front();
      err << format_double(sc.scale) << ',' << format_double(st.mean) << ',' << format_double(st.stderr_) << ','
          << format_double(st.pde_ref) << ',' << format_double(st.rel_error) << '\n';
    }
    files.push_back("errors.csv");
  }

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  auto manifest = open("MANIFEST");
  manifest << "config_hash=" << report.config.hash() << "\n"
           << "root_seed=" << report.config.root_seed << "\n"
           << "sigma2_seed=" << report.sigma2.seed << "\n"
           << "version=brw " << BRW_VERSION << "\n"
           << "complete=" << (report.complete ? "true" : "false") << "\n";
  if (!report.complete) manifest << "failed_stage=" << report.failed_stage << "\n";
  manifest << "files=";
  for (std::size_t i = 0; i < files.size(); ++i) manifest << (i ? "," : "") << files[i];
  manifest << "\n" << "timestamp=" << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << "\n";
}

}  // namespace brw
