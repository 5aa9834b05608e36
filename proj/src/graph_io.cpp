#include "brw/graph_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "brw/errors.hpp"

namespace brw {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParameterError("graph file line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParameterError("graph file line " + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}

}  // namespace

void write_graph(std::ostream& out, const RateGraph& graph) {
  const PointCloud& c = graph.cloud();
  out << c.dim << ' ' << fmt_double(c.side) << ' ' << fmt_double(c.intensity) << ' '
      << to_string(c.topology) << ' ' << fmt_double(graph.cutoff()) << ' ' << c.seed << '\n';
  const auto& perc = graph.percolation();
  if (perc.kind != PercolationKind::none) {
    out << "# percolation " << to_string(perc.kind) << " alpha=" << fmt_double(perc.alpha)
        << " beta=" << fmt_double(perc.beta);
    if (perc.kind == PercolationKind::scale_free) out << " tau=" << fmt_double(perc.tau);
    out << " seed=" << perc.seed << '\n';
  }
  if (c.palm_index) out << "# palm " << *c.palm_index << '\n';
  std::string line;
  for (std::size_t i = 0; i < c.size(); ++i) {
    line = std::to_string(i);
    for (double v : c.point(i)) {
      line += ' ';
      line += fmt_double(v);
    }
    line += '\n';
    out << line;
  }
  for (std::size_t x = 0; x < graph.num_sites(); ++x) {
    auto nb = graph.neighbors(x);
    auto rt = graph.rates(x);
    for (std::size_t k = 0; k < nb.size(); ++k)
      out << x << ' ' << nb[k] << ' ' << fmt_double(rt[k]) << '\n';
  }
}

void write_graph(const std::string& path, const RateGraph& graph) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_graph(out, graph);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

RateGraph read_graph(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](std::vector<std::string>& fields) {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') {
        if (line.rfind("# palm ", 0) == 0) {
          fields = {"#palm", line.substr(7)};
        } else if (line.rfind("# percolation ", 0) == 0) {
          fields = split_ws(line.substr(14));
          fields.insert(fields.begin(), "#percolation");
        } else {
          continue;
        }
        return true;
      }
      fields = split_ws(line);
      if (!fields.empty()) return true;
    }
    return false;
  };

  std::vector<std::string> f;
  if (!next_line(f) || f.size() != 6) throw ParameterError("graph file: missing or malformed header");
  auto cloud = std::make_shared<PointCloud>();
  cloud->dim = static_cast<int>(to_uint(f[0], lineno));
  if (cloud->dim < 2) throw ParameterError("graph file: dimension must be >= 2");
  cloud->side = to_double(f[1], lineno);
  cloud->intensity = to_double(f[2], lineno);
  cloud->topology = parse_topology(f[3]);
  const double cutoff = to_double(f[4], lineno);
  cloud->seed = to_uint(f[5], lineno);

  const std::size_t dim = static_cast<std::size_t>(cloud->dim);
  std::vector<Edge> edges;
  PercolationDescriptor perc;
  bool in_points = true;
  while (next_line(f)) {
    if (f[0] == "#palm") {
      cloud->palm = true;
      cloud->palm_index = to_uint(f[1], lineno);
      continue;
    }
    if (f[0] == "#percolation") {
      if (f.size() < 2) throw ParameterError("graph file line " + std::to_string(lineno) + ": bad percolation line");
      perc.kind = parse_percolation(f[1]);
      for (std::size_t i = 2; i < f.size(); ++i) {
        const auto eq = f[i].find('=');
        const std::string key = f[i].substr(0, eq), value = eq == std::string::npos ? "" : f[i].substr(eq + 1);
        if (key == "alpha") perc.alpha = to_double(value, lineno);
        else if (key == "beta") perc.beta = to_double(value, lineno);
        else if (key == "tau") perc.tau = to_double(value, lineno);
        else if (key == "seed") perc.seed = to_uint(value, lineno);
      }
      continue;
    }
    if (in_points && to_uint(f[0], lineno) == cloud->size()) {
      if (f.size() != dim + 1)
        throw ParameterError("graph file line " + std::to_string(lineno) + ": expected " +
                             std::to_string(dim + 1) + " fields for a point");
      for (std::size_t k = 1; k <= dim; ++k) cloud->coords.push_back(to_double(f[k], lineno));
      continue;
    }
    in_points = false;
    if (f.size() != 3)
      throw ParameterError("graph file line " + std::to_string(lineno) + ": expected 'src dst rate'");
    edges.push_back({static_cast<std::uint32_t>(to_uint(f[0], lineno)),
                     static_cast<std::uint32_t>(to_uint(f[1], lineno)), to_double(f[2], lineno)});
  }
  return RateGraph(std::move(cloud), cutoff, std::move(edges), std::move(perc));
}

RateGraph read_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file '" + path + "'");
  return read_graph(in);
}

}  // namespace brw
