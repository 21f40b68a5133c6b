#pragma once

// Projected accelerated gradient ascent for smooth concave objectives over a
// box, with backtracking on the Lipschitz estimate and gradient-based
// momentum restart.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace sdeq::detail {

struct FistaOptions {
  std::size_t max_iter = 200000;
  double tol = 1e-9;   // on the sup norm of the gradient mapping
  double L0 = 1.0;
};

struct FistaResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<double> grad;
  std::size_t iterations = 0;
  bool converged = false;
  double L = 1.0;
  double mapping_norm = 0.0;
};

// fg(x, grad) returns f(x) and fills grad.
template <class FG>
FistaResult fista_maximize(FG&& fg, std::vector<double> x, const std::vector<double>& lo,
                           const std::vector<double>& hi, const FistaOptions& opt) {
  const std::size_t n = x.size();
  auto proj = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::min(std::max(v[i], lo[i]), hi[i]);
  };
  proj(x);
  FistaResult r;
  double L = std::max(opt.L0, 1e-12);
  std::vector<double> y = x, gy(n), xn(n), gx(n), prev = x;
  double tk = 1.0;
  double fx = fg(x, gx);
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    const double fy = fg(y, gy);
    double fn = 0.0;
    for (;;) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = y[i] + gy[i] / L;
      proj(xn);
      std::vector<double> dummy(n);
      fn = fg(xn, dummy);
      double lin = fy;
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = xn[i] - y[i];
        lin += gy[i] * d;
        sq += d * d;
      }
      // ascent form of the sufficient-increase test
      if (fn >= lin - 0.5 * L * sq - 1e-14 * std::abs(fy) || L > 1e300) {
        gx = std::move(dummy);
        break;
      }
      L *= 2.0;
    }
    double mapn = 0.0;
    double along = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mapn = std::max(mapn, L * std::abs(xn[i] - y[i]));
      along += gy[i] * (xn[i] - x[i]);
    }
    prev = x;
    x = xn;
    const double fold = fx;
    fx = fn;
    r.iterations = it;
    r.mapping_norm = mapn;
    if (mapn <= opt.tol) {
      r.converged = true;
      break;
    }
    if (fx < fold || along < 0.0) {
      tk = 1.0;
      y = x;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + (tk - 1.0) / tn * (x[i] - prev[i]);
      proj(y);
      tk = tn;
    }
    L *= 0.9;
  }
  r.x = x;
  r.value = fg(x, r.grad);
  r.L = L;
  return r;
}

}  // namespace sdeq::detail
