#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace brw {

struct CgResult {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

namespace detail {
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
}  // namespace detail

/// Jacobi-preconditioned conjugate gradient for a symmetric positive (semi)definite
/// operator given matrix-free as apply(in, out). Stops when ||b - A x|| <= tol max(||b||, ref),
/// where `reference_norm` lets callers with a roundoff-level right-hand side measure the
/// residual against the natural scale of the problem instead.
/// For a singular but consistent system the iterates stay in the range of A plus x0.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, std::span<const double> b, std::span<double> x,
                            std::span<const double> diagonal, double tol, std::size_t max_iter,
                            double reference_norm = 0.0) {
  const std::size_t n = b.size();
  CgResult res;
  const double bnorm = std::max(std::sqrt(detail::dot(b, b)), reference_norm);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  std::vector<double> r(n), z(n), p(n), q(n);
  auto true_residual = [&] {
    apply(std::span<const double>(x.data(), n), std::span<double>(q));
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
    return std::sqrt(detail::dot(r, r)) / bnorm;
  };
  auto precondition = [&] {
    for (std::size_t i = 0; i < n; ++i) z[i] = diagonal[i] > 0.0 ? r[i] / diagonal[i] : r[i];
  };
  res.relative_residual = true_residual();
  // Restart from the current iterate when the recursive residual has drifted from the
  // true one; a handful of restarts is plenty in practice.
  for (int restart = 0; restart < 8 && res.relative_residual > tol && res.iterations < max_iter;
       ++restart) {
    precondition();
    p = z;
    double rz = detail::dot(r, z);
    double recursive = res.relative_residual;
    while (recursive > tol && res.iterations < max_iter) {
      apply(std::span<const double>(p), std::span<double>(q));
      const double pq = detail::dot(p, q);
      if (!(pq > 0.0)) break;
      const double alpha = rz / pq;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      ++res.iterations;
      precondition();
      const double rz_next = detail::dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
      recursive = std::sqrt(detail::dot(r, r)) / bnorm;
    }
    res.relative_residual = true_residual();
  }
  res.converged = res.relative_residual <= tol;
  return res;
}

}  // namespace brw
