#pragma once

// Beckmann user equilibrium: minimize Psi(f) = sum_e sigma_e(f_e) over
// route-decomposable flows. Frank-Wolfe in edge-flow space, plus a dual
// route (maximize sum_w d_w T_w(t) - sum_e sigma*_e(t_e)) for stiff barriers.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sdeq/costs.hpp"
#include "sdeq/detail/dual_ascent.hpp"
#include "sdeq/detail/fista.hpp"
#include "sdeq/error.hpp"
#include "sdeq/network.hpp"
#include "sdeq/stable_dynamics.hpp"

namespace sdeq {

struct BeckmannProblem {
  Network net;
  std::vector<OdDemand> demands;
  std::vector<CostFamily> families;  // one per edge, or a single entry for all edges

  const CostFamily& family(std::size_t e) const { return families.size() == 1 ? families[0] : families.at(e); }
};

struct BeckmannOptions {
  double tol_gap = 1e-6;  // relative gap <tau(f), f - y> / |Psi(f)|
  std::size_t max_iter = 100000;
  double line_tol = 1e-12;
  double interior_target = 0.9;  // phase-1 aims at max f/cap below this
};

struct BeckmannResult {
  SolveStatus status = SolveStatus::max_iterations;
  FlowVector f;
  CostVector t;
  double potential = 0.0;
  double relative_gap = 0.0;
  std::vector<double> gap_history;
  std::size_t iterations = 0;
};

namespace detail {

inline void check_beckmann(const BeckmannProblem& p) {
  if (p.families.size() != 1 && p.families.size() != p.net.edge_count())
    throw InputError("need one cost family, or one per edge");
  check_demands(p.net, p.demands);
}

inline bool bounded_family(const CostFamily& f) { return f.kind != FamilyKind::bpr; }

// Largest step keeping f + a (y - f) strictly inside the capacity region of
// bounded families.
inline double max_step(const BeckmannProblem& p, const FlowVector& f, const FlowVector& y) {
  double a = 1.0;
  for (std::size_t e = 0; e < f.size(); ++e) {
    if (!bounded_family(p.family(e)) || y[e] <= f[e]) continue;
    const double cap = p.net.edge(e).cap;
    // keep a relative margin so rounding in f + a d cannot land on the cap
    const double room = cap * (1.0 - 1e-12);
    if (y[e] >= room) a = std::min(a, (room - f[e]) / (y[e] - f[e]));
  }
  return std::max(a, 0.0);
}

// Root of phi'(a) = sum_e g_e(f + a d) d_e on [0, hi] by bisection; phi' is
// nondecreasing.
template <class Slope>
double line_search(const FlowVector& f, const FlowVector& y, double hi, double tol, Slope&& slope) {
  FlowVector d(f.size());
  for (std::size_t e = 0; e < f.size(); ++e) d[e] = y[e] - f[e];
  auto deriv = [&](double a) {
    double s = 0.0;
    for (std::size_t e = 0; e < f.size(); ++e)
      if (d[e] != 0.0) s += slope(e, f[e] + a * d[e]) * d[e];
    return s;
  };
  if (hi >= 1.0 && deriv(1.0) <= 0.0) return 1.0;
  double lo = 0.0;
  double up = hi;
  if (deriv(up) <= 0.0) return up;
  while (up - lo > tol) {
    const double mid = 0.5 * (lo + up);
    if (deriv(mid) > 0.0) up = mid;
    else lo = mid;
  }
  return lo;
}

}  // namespace detail

inline double wardrop_gap(const Network& net, std::span<const double> f, std::span<const double> t,
                          std::span<const OdDemand> demands) {
  check_costs(net, t);
  if (f.size() != net.edge_count()) throw InputError("flow vector does not match the network");
  double ft = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e) ft += f[e] * t[e];
  RouteTable table(net, t);
  double dt = 0.0;
  for (const auto& d : demands)
    if (d.volume > 0.0) dt += d.volume * table.cost(d.od);
  return ft - dt;
}

inline double beckmann_potential(const BeckmannProblem& p, std::span<const double> f) {
  double v = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e) v += sigma(p.family(e), p.net.edge(e).t_free, p.net.edge(e).cap, f[e]);
  return v;
}

inline BeckmannResult beckmann_solve(const BeckmannProblem& p, const BeckmannOptions& opt = {}) {
  detail::check_beckmann(p);
  const Network& net = p.net;
  const std::size_t m = net.edge_count();
  const CostVector tf = net.free_flow_times();
  FlowVector f = aon_assign(net, tf, p.demands);

  bool needs_interior = false;
  for (std::size_t e = 0; e < m; ++e)
    if (detail::bounded_family(p.family(e)) && f[e] >= net.edge(e).cap) needs_interior = true;
  if (needs_interior) {
    // phase 1: Frank-Wolfe on sum_e cap_e (f_e / cap_e)^16 / 16
    auto ratio = [&](const FlowVector& x) {
      double r = 0.0;
      for (std::size_t e = 0; e < m; ++e)
        if (detail::bounded_family(p.family(e))) r = std::max(r, x[e] / net.edge(e).cap);
      return r;
    };
    auto slope = [&](std::size_t e, double x) {
      return detail::bounded_family(p.family(e)) ? std::pow(x / net.edge(e).cap, 15.0) : 0.0;
    };
    double prev = ratio(f);
    for (std::size_t it = 0; it < opt.max_iter && ratio(f) > opt.interior_target; ++it) {
      CostVector g(m);
      for (std::size_t e = 0; e < m; ++e) g[e] = tf[e] * 1e-12 + slope(e, f[e]);
      const FlowVector y = aon_assign(net, g, p.demands);
      const double a = detail::line_search(f, y, 1.0, opt.line_tol, slope);
      if (a <= 0.0) break;
      for (std::size_t e = 0; e < m; ++e) f[e] += a * (y[e] - f[e]);
      if (it % 100 == 99) {
        const double r = ratio(f);
        if (r > prev * (1.0 - 1e-9)) break;
        prev = r;
      }
    }
    if (ratio(f) >= 1.0) throw InfeasibleError("demand exceeds the capacity region of the barrier costs");
  }

  auto tau_at = [&](std::size_t e, double x) { return tau(p.family(e), net.edge(e).t_free, net.edge(e).cap, x); };
  BeckmannResult res;
  CostVector t(m);
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    for (std::size_t e = 0; e < m; ++e) t[e] = tau_at(e, f[e]);
    const FlowVector y = aon_assign(net, t, p.demands);
    double gap = 0.0;
    for (std::size_t e = 0; e < m; ++e) gap += t[e] * (f[e] - y[e]);
    const double psi = beckmann_potential(p, f);
    const double rel = gap / std::max(std::abs(psi), 1e-300);
    res.gap_history.push_back(rel);
    res.iterations = it;
    res.relative_gap = rel;
    if (rel <= opt.tol_gap) {
      res.status = SolveStatus::converged;
      break;
    }
    const double hi = detail::max_step(p, f, y);
    const double a = detail::line_search(f, y, hi, opt.line_tol, tau_at);
    for (std::size_t e = 0; e < m; ++e) f[e] += a * (y[e] - f[e]);
  }
  for (std::size_t e = 0; e < m; ++e) t[e] = tau_at(e, f[e]);
  res.f = f;
  res.t = t;
  res.potential = beckmann_potential(p, f);
  return res;
}

struct BeckmannDualOptions {
  double temperature_min = 1e-6;  // final soft-min temperature, times the time scale
  double temperature_factor = 0.1;
  double tol = 1e-7;  // gradient-mapping tolerance, times the flow scale
  std::size_t max_iter = 200000;  // per temperature stage
  double box_factor = 100.0;
  std::size_t hop_bound = 0;  // 0: default
};

// Dual route: maximize sum_w d_w softmin_T(route costs) - sum_e sigma*_e(t_e)
// over the box, with T lowered geometrically. Flows are inv_flow(t), which
// keeps barrier edges exact even when (t - t_free) / (mu t_free) is large
// enough that primal flows round to the capacity.
inline BeckmannResult beckmann_dual_solve(const BeckmannProblem& p, const BeckmannDualOptions& opt = {}) {
  detail::check_beckmann(p);
  const Network& net = p.net;
  const std::size_t m = net.edge_count();
  for (std::size_t e = 0; e < m; ++e)
    if (p.family(e).kind == FamilyKind::hard_cap) throw InputError("dual Beckmann needs smooth families");
  const CostVector lo = net.free_flow_times();
  const CostVector hi = default_t_max(net, opt.box_factor);
  const std::size_t K = opt.hop_bound ? opt.hop_bound : default_hop_bound(net);
  double Tsc = 0.0;
  for (double v : lo) Tsc = std::max(Tsc, v);
  double F = 0.0;
  for (const auto& d : p.demands) F += d.volume;
  if (!(F > 0.0)) F = 1.0;

  double temp = 0.0;
  auto fg = [&](const std::vector<double>& t, std::vector<double>& g) {
    double v = 0.0;
    g.assign(m, 0.0);
    for (const auto& d : p.demands) {
      if (d.volume == 0.0) continue;
      const SmoothedCost sc = smoothed_cost_grad(net, t, d.od, temp, K);
      if (sc.value == -kInf) throw InfeasibleError("OD " + describe_od(net, d.od) + " is unreachable");
      v -= d.volume * sc.value;
      for (std::size_t e = 0; e < m; ++e) g[e] -= d.volume * sc.grad[e];
    }
    for (std::size_t e = 0; e < m; ++e) {
      const Edge& ed = net.edge(e);
      v -= sigma_star(p.family(e), ed.t_free, ed.cap, t[e]);
      g[e] -= inv_flow(p.family(e), ed.t_free, ed.cap, t[e]);
    }
    return v;
  };

  BeckmannResult res;
  res.status = SolveStatus::converged;
  std::vector<double> t = lo;
  detail::FistaOptions fo;
  fo.max_iter = opt.max_iter;
  fo.tol = opt.tol * F;
  fo.L0 = F / Tsc;
  const double t_end = opt.temperature_min * Tsc;
  for (temp = 0.1 * Tsc;; temp = std::max(temp * opt.temperature_factor, t_end)) {
    const auto r = detail::fista_maximize(fg, t, lo, hi, fo);
    t = r.x;
    res.iterations += r.iterations;
    res.gap_history.push_back(r.mapping_norm / F);
    fo.L0 = r.L;
    if (temp <= t_end) {
      if (!r.converged) res.status = SolveStatus::max_iterations;
      break;
    }
  }
  res.t = t;
  res.f.resize(m);
  for (std::size_t e = 0; e < m; ++e) res.f[e] = inv_flow(p.family(e), net.edge(e).t_free, net.edge(e).cap, t[e]);
  bool inside = true;
  for (std::size_t e = 0; e < m; ++e)
    if (detail::bounded_family(p.family(e)) && res.f[e] >= net.edge(e).cap) inside = false;
  res.potential = inside ? beckmann_potential(p, res.f) : kInf;
  res.relative_gap = res.gap_history.back();
  return res;
}

}  // namespace sdeq
