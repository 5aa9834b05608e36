#pragma once

#include <span>
#include <string>
#include <vector>

namespace brw {

/// Smooth observable on macroscopic space with an analytic Laplacian.
///   gaussian: A exp(-|u-c|^2 / (2 s^2))
///   bump:     A exp(1 - 1/(1 - |u-c|^2/R^2)) inside |u-c| < R, zero outside
///   constant: A
struct TestFunction {
  enum class Kind { constant, gaussian, bump };

  Kind kind = Kind::gaussian;
  double amplitude = 1.0;
  double width = 1.0;          // s for gaussian, R for bump
  std::vector<double> center;  // empty until resolved against a box

  static TestFunction gaussian(double amplitude, double s, std::vector<double> center = {});
  static TestFunction bump(double amplitude, double radius, std::vector<double> center = {});
  static TestFunction constant(double amplitude);

  /// Parses "gauss:A,s[,c1,...]", "bump:A,R[,c1,...]" or "const:A". A single center
  /// coordinate is replicated across dimensions when resolved.
  static TestFunction parse(const std::string& spec);
  std::string to_spec() const;

  /// Copy with the center filled in (default: `fallback`), sized to `dim`.
  TestFunction resolved(int dim, std::span<const double> fallback) const;

  double value(std::span<const double> u) const;
  double laplacian(std::span<const double> u) const;

  /// Radius outside of which the function is treated as negligible: R for a bump,
  /// 3s for a gaussian, infinity for a constant.
  double support_radius() const;
  bool has_compact_support() const { return kind == Kind::bump; }
  /// Integral over R^dim.
  double integral(int dim) const;
};

}  // namespace brw
