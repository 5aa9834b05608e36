#include "brw/test_function.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "brw/errors.hpp"

namespace brw {

namespace {

std::vector<double> parse_list(const std::string& s, const std::string& spec) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw ParameterError("bad number '" + tok + "' in test function spec '" + spec + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

double squared_distance(std::span<const double> u, const std::vector<double>& c) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - (k < c.size() ? c[k] : 0.0);
    s += d * d;
  }
  return s;
}

}  // namespace

TestFunction TestFunction::gaussian(double amplitude, double s, std::vector<double> center) {
  if (!(s > 0.0)) throw ParameterError("gaussian width must be positive");
  if (!std::isfinite(amplitude)) throw ParameterError("amplitude must be finite");
  return {Kind::gaussian, amplitude, s, std::move(center)};
}

TestFunction TestFunction::bump(double amplitude, double radius, std::vector<double> center) {
  if (!(radius > 0.0)) throw ParameterError("bump radius must be positive");
  if (!std::isfinite(amplitude)) throw ParameterError("amplitude must be finite");
  return {Kind::bump, amplitude, radius, std::move(center)};
}

TestFunction TestFunction::constant(double amplitude) {
  if (!std::isfinite(amplitude)) throw ParameterError("amplitude must be finite");
  return {Kind::constant, amplitude, 0.0, {}};
}

TestFunction TestFunction::parse(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ParameterError("test function spec '" + spec + "' lacks ':'");
  const std::string kind = spec.substr(0, colon);
  const auto args = parse_list(spec.substr(colon + 1), spec);
  if (kind == "const") {
    if (args.size() != 1) throw ParameterError("const test function takes one argument");
    return constant(args[0]);
  }
  if (kind != "gauss" && kind != "bump")
    throw ParameterError("unknown test function kind '" + kind + "'");
  if (args.size() < 2) throw ParameterError("'" + spec + "' needs amplitude and width");
  std::vector<double> center(args.begin() + 2, args.end());
  return kind == "gauss" ? gaussian(args[0], args[1], std::move(center))
                         : bump(args[0], args[1], std::move(center));
}

std::string TestFunction::to_spec() const {
  std::ostringstream ss;
  ss.precision(17);
  if (kind == Kind::constant) {
    ss << "const:" << amplitude;
    return ss.str();
  }
  ss << (kind == Kind::gaussian ? "gauss:" : "bump:") << amplitude << ',' << width;
  for (double c : center) ss << ',' << c;
  return ss.str();
}

TestFunction TestFunction::resolved(int dim, std::span<const double> fallback) const {
  TestFunction out = *this;
  if (kind == Kind::constant) return out;
  const auto n = static_cast<std::size_t>(dim);
  if (out.center.empty()) {
    out.center.assign(fallback.begin(), fallback.end());
  } else if (out.center.size() == 1 && n > 1) {
    out.center.assign(n, out.center[0]);
  }
  if (out.center.size() != n)
    throw ParameterError("test function center has " + std::to_string(out.center.size()) +
                         " coordinates, expected " + std::to_string(dim));
  return out;
}

double TestFunction::value(std::span<const double> u) const {
  switch (kind) {
    case Kind::constant: return amplitude;
    case Kind::gaussian: return amplitude * std::exp(-squared_distance(u, center) / (2.0 * width * width));
    case Kind::bump: {
      const double q = squared_distance(u, center) / (width * width);
      if (q >= 1.0) return 0.0;
      return amplitude * std::exp(1.0 - 1.0 / (1.0 - q));
    }
  }
  return 0.0;
}

double TestFunction::laplacian(std::span<const double> u) const {
  const double n = static_cast<double>(u.size());
  switch (kind) {
    case Kind::constant: return 0.0;
    case Kind::gaussian: {
      const double s2 = width * width;
      const double r2 = squared_distance(u, center);
      return value(u) * (r2 / (s2 * s2) - n / s2);
    }
    case Kind::bump: {
      const double R2 = width * width;
      const double q = squared_distance(u, center) / R2;
      if (q >= 1.0) return 0.0;
      const double om = 1.0 - q;
      const double d1 = -1.0 / (om * om);        // phi'(q)
      const double d2 = -2.0 / (om * om * om);   // phi''(q)
      // |grad q|^2 = 4q/R^2, lap q = 2n/R^2
      return value(u) * ((d1 * d1 + d2) * 4.0 * q / R2 + d1 * 2.0 * n / R2);
    }
  }
  return 0.0;
}

double TestFunction::support_radius() const {
  switch (kind) {
    case Kind::constant: return std::numeric_limits<double>::infinity();
    case Kind::gaussian: return 3.0 * width;
    case Kind::bump: return width;
  }
  return 0.0;
}

double TestFunction::integral(int dim) const {
  switch (kind) {
    case Kind::constant: return std::numeric_limits<double>::infinity();
    case Kind::gaussian: return amplitude * std::pow(2.0 * std::numbers::pi * width * width, 0.5 * dim);
    case Kind::bump: {
      // Radial quadrature: |S^{n-1}| * int_0^R f(r) r^{n-1} dr.
      const double area = 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
      const int steps = 4000;
      const double h = width / steps;
      double acc = 0.0;
      for (int i = 0; i < steps; ++i) {
        const double r = (i + 0.5) * h;
        const double q = r * r / (width * width);
        acc += std::exp(1.0 - 1.0 / (1.0 - q)) * std::pow(r, dim - 1);
      }
      return amplitude * area * acc * h;
    }
  }
  return 0.0;
}

}  // namespace brw
