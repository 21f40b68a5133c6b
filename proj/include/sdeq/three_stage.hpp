#pragma once

// Combined trip distribution, mode split and assignment. The nonsmooth form
// minimizes over edge times t and zone potentials (lambda_L, lambda_W)
//
//   ln sum_ij exp(-beta C_ij(t) - lambda_L_i - lambda_W_j)
//     + <lambda_L, l> + <lambda_W, w> + beta sum_e c_e (t_e - r_e),
//
// C_ij being the cheaper modal route cost between the zones' nodes. The
// smooth form replaces -C_ij by a log-sum-exp path aggregate at temperature T
// (optionally nested by mode). d is kept normalized; linear coefficients are
// capacity shares cap_e / N, and reported flows are scaled back by N.
//
// For fixed t the minimum over lambda is an entropy problem solved exactly
// by balancing, so both solvers work over t alone and read lambda off the
// balancing factors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdeq/demand.hpp"
#include "sdeq/detail/dual_ascent.hpp"
#include "sdeq/detail/fista.hpp"
#include "sdeq/error.hpp"
#include "sdeq/matrix.hpp"
#include "sdeq/network.hpp"
#include "sdeq/stable_dynamics.hpp"

namespace sdeq {

struct ThreeStageProblem {
  Network net;  // car and transit edges together, told apart by mode
  Zones zones;
  double beta = 1.0;
  std::vector<double> t_max;  // empty: default_t_max
  double box_factor = 100.0;
  double jam_factor = 0.0;
  std::vector<PinnedFlow> pins;  // flows in vehicles
  double temperature = 0.0;      // 0: nonsmooth form
  std::optional<double> nesting;  // eta of the nested-logit mode aggregate
  bool freeze_transit = false;    // transit times fixed at t_free
  std::size_t hop_bound = 0;      // smooth form only; 0: node count - 1
};

struct ThreeStageOptions : AscentOptions {
  double balance_tol = 1e-12;
  std::size_t balance_max_iter = 100000;
  double smooth_tol = 1e-9;  // gradient mapping, in trip shares
  std::size_t smooth_max_iter = 200000;
  std::vector<double> warm_lambda_w;  // seeds balancing; warm_t seeds the times
};

struct ThreeStageSolution {
  SolveStatus status = SolveStatus::max_iterations;
  CostVector t;
  std::vector<double> lambda_l;
  std::vector<double> lambda_w;
  Matrix d;     // sums to 1
  FlowVector f;  // vehicles
  FlowVector average_flow;
  double objective = 0.0;
  double row_residual = 0.0;  // ||row sums - l||_1
  double col_residual = 0.0;  // ||col sums - w||_1
  double feasibility = 0.0;
  double complementarity = 0.0;
  double wardrop_gap = 0.0;
  std::size_t iterations = 0;
  std::size_t epochs = 0;
  std::vector<EpochRecord> history;

  // vehicle trips
  Matrix trips(double total) const {
    Matrix m = d;
    for (double& x : m.data()) x *= total;
    return m;
  }
};

struct TsEvaluation {
  double value = 0.0;
  CostVector grad_t;
  std::vector<double> grad_lambda_l;  // l_i - sum_j d_ij
  std::vector<double> grad_lambda_w;  // w_j - sum_i d_ij
  Matrix d;
};

// eta * ln(exp(M_car / eta) + exp(M_transit / eta)); -inf aggregates drop out.
inline double nested_logit_aggregate(double m_car, double m_transit, double T, double eta) {
  if (!(T > 0.0) || !(eta > 0.0)) throw InputError("temperature and nesting parameter must be positive");
  return eta * log_add(m_car / eta, m_transit / eta);
}

// Nested aggregate with its gradient; the pair must admit both modes.
inline SmoothedCost nested_logit_cost(const Network& net, std::span<const double> t, const ODPair& od, double T,
                                      double eta, std::size_t K) {
  validate_od(net, od);
  if (!(eta > 0.0)) throw InputError("nesting parameter must be positive");
  const SmoothedCost a = mode_aggregate(net, t, od.origin, od.destination, EdgeFilter::car, T, K);
  const SmoothedCost b = mode_aggregate(net, t, od.origin, od.destination, EdgeFilter::transit, T, K);
  SmoothedCost out;
  out.value = nested_logit_aggregate(a.value, b.value, T, eta);
  out.grad.assign(net.edge_count(), 0.0);
  if (out.value == -kInf) return out;
  const double pa = a.value == -kInf ? 0.0 : std::exp((a.value - out.value) / eta);
  const double pb = b.value == -kInf ? 0.0 : std::exp((b.value - out.value) / eta);
  for (std::size_t e = 0; e < out.grad.size(); ++e) out.grad[e] = pa * a.grad[e] + pb * b.grad[e];
  return out;
}

// Pins observed flows (vehicles) by edge id.
inline ThreeStageProblem ts_pin_flows(ThreeStageProblem p, std::span<const std::pair<std::int64_t, double>> pins) {
  for (const auto& [id, flow] : pins) {
    const auto e = p.net.find_edge(id);
    if (!e) throw InputError("pinned edge " + std::to_string(id) + " is not in the network");
    if (!(flow >= 0.0) || !std::isfinite(flow))
      throw InputError("pinned flow on edge " + std::to_string(id) + " must be finite and nonnegative");
    auto it = std::find_if(p.pins.begin(), p.pins.end(), [&](const PinnedFlow& q) { return q.edge == *e; });
    if (it != p.pins.end()) it->flow = flow;
    else p.pins.push_back({*e, flow});
  }
  return p;
}

namespace detail {

// Zone pairs whose nodes differ; pairs sharing a node cost 0 and load nothing.
struct ZonePairs {
  std::size_t n = 0;
  std::vector<std::size_t> slot;  // i * n + j -> index into ods, or npos
  std::vector<ODPair> ods;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

inline ZonePairs zone_pairs(const ThreeStageProblem& p) {
  const Zones& z = p.zones;
  ZonePairs zp;
  zp.n = z.size();
  zp.slot.assign(zp.n * zp.n, ZonePairs::npos);
  for (std::size_t i = 0; i < zp.n; ++i)
    for (std::size_t j = 0; j < zp.n; ++j) {
      if (z.origin_nodes[i] == z.dest_nodes[j]) continue;
      zp.slot[i * zp.n + j] = zp.ods.size();
      zp.ods.push_back({z.origin_nodes[i], z.dest_nodes[j], ModeScope::either});
      zp.cells.emplace_back(i, j);
    }
  return zp;
}

inline void check_three_stage(const ThreeStageProblem& p) {
  const Zones& z = p.zones;
  const std::size_t n = z.size();
  if (n == 0) throw InputError("no zones");
  if (z.w.size() != n || z.origin_nodes.size() != n || z.dest_nodes.size() != n)
    throw InputError("zone arrays have inconsistent lengths");
  validate_marginals(z.l, z.w, 1e-9);
  for (std::size_t i = 0; i < n; ++i)
    if (!(z.l[i] > 0.0) || !(z.w[i] > 0.0)) throw InputError("zone marginals must be positive");
  for (std::size_t i = 0; i < n; ++i)
    if (z.origin_nodes[i] >= p.net.node_count() || z.dest_nodes[i] >= p.net.node_count())
      throw InputError("zone attached to a node outside the network");
  if (!(p.beta > 0.0) || !std::isfinite(p.beta)) throw InputError("beta must be positive");
  if (!(z.total_trips > 0.0)) throw InputError("total trips must be positive");
  if (!(p.temperature >= 0.0)) throw InputError("temperature must be nonnegative");
  if (p.nesting && !(*p.nesting > 0.0)) throw InputError("nesting parameter must be positive");
  for (const auto& pin : p.pins) {
    if (pin.edge >= p.net.edge_count()) throw InputError("pinned edge outside the network");
    if (!(pin.flow >= 0.0)) throw InputError("pinned flow must be nonnegative");
  }
}

inline std::vector<EdgeTerm> ts_terms(const ThreeStageProblem& p) {
  SDProblem box;
  box.net = p.net;
  box.t_max = p.t_max;
  box.box_factor = p.box_factor;
  box.jam_factor = p.jam_factor;
  const CostVector hi = problem_t_max(box);
  const double N = p.zones.total_trips;
  std::vector<EdgeTerm> terms(p.net.edge_count());
  for (std::size_t e = 0; e < terms.size(); ++e) {
    const Edge& ed = p.net.edge(e);
    EdgeTerm& tm = terms[e];
    tm.lo = ed.t_free;
    tm.hi = hi[e];
    tm.coef = ed.cap / N;
    tm.ref = ed.t_free;
    tm.t_free = ed.t_free;
    tm.cap = ed.cap / N;
  }
  for (const auto& pin : p.pins) {
    terms[pin.edge].lo = 0.0;
    terms[pin.edge].coef = pin.flow / N;
    terms[pin.edge].ref = 0.0;
  }
  if (p.freeze_transit)
    for (std::size_t e = 0; e < terms.size(); ++e)
      if (p.net.edge(e).mode == Mode::transit) terms[e].lo = terms[e].hi = p.net.edge(e).t_free;
  return terms;
}

inline void check_box(const std::vector<EdgeTerm>& terms, const Network& net, std::span<const double> t) {
  check_costs(net, t);
  for (std::size_t e = 0; e < t.size(); ++e)
    if (t[e] < terms[e].lo || t[e] > terms[e].hi)
      throw InputError("time on edge " + std::to_string(net.edge(e).id) + " is outside its box");
}

// Zone-to-zone value matrix V (the exponent is beta * V - lambda) and, per
// pair, the edge-usage weights of dV/dt = -usage.
struct PairValues {
  Matrix v;
  std::vector<std::vector<std::pair<std::size_t, double>>> usage;  // per od slot
  std::vector<Route> routes;                                        // nonsmooth form only
};

inline PairValues pair_values(const ThreeStageProblem& p, const ZonePairs& zp, std::span<const double> t) {
  PairValues pv;
  pv.v = Matrix(zp.n, zp.n, 0.0);
  pv.usage.resize(zp.ods.size());
  const bool smooth = p.temperature > 0.0;
  if (!smooth) {
    RouteTable table(p.net, t);
    pv.routes.resize(zp.ods.size());
    for (std::size_t k = 0; k < zp.ods.size(); ++k) {
      Route r = table.route(zp.ods[k]);
      if (!std::isfinite(r.cost))
        throw InfeasibleError("zone pair " + describe_od(p.net, zp.ods[k]) + " is unreachable in both modes");
      pv.v(zp.cells[k].first, zp.cells[k].second) = -r.cost;
      for (auto e : r.edges) pv.usage[k].emplace_back(e, 1.0);
      pv.routes[k] = std::move(r);
    }
    return pv;
  }
  const std::size_t K = p.hop_bound ? p.hop_bound : default_hop_bound(p.net);
  for (std::size_t k = 0; k < zp.ods.size(); ++k) {
    const SmoothedCost sc = p.nesting ? nested_logit_cost(p.net, t, zp.ods[k], p.temperature, *p.nesting, K)
                                      : smoothed_cost_grad(p.net, t, zp.ods[k], p.temperature, K);
    if (sc.value == -kInf)
      throw InfeasibleError("zone pair " + describe_od(p.net, zp.ods[k]) + " is unreachable in both modes");
    pv.v(zp.cells[k].first, zp.cells[k].second) = sc.value;
    for (std::size_t e = 0; e < sc.grad.size(); ++e)
      if (sc.grad[e] != 0.0) pv.usage[k].emplace_back(e, -sc.grad[e]);
  }
  return pv;
}

inline TsEvaluation evaluate_objective(const ThreeStageProblem& p, std::span<const double> t,
                                       std::span<const double> lambda_l, std::span<const double> lambda_w) {
  check_three_stage(p);
  const std::vector<EdgeTerm> terms = ts_terms(p);
  check_box(terms, p.net, t);
  const std::size_t n = p.zones.size();
  if (lambda_l.size() != n || lambda_w.size() != n) throw InputError("potential vectors must have one entry per zone");
  const ZonePairs zp = zone_pairs(p);
  const PairValues pv = pair_values(p, zp, t);

  TsEvaluation ev;
  ev.d = Matrix(n, n);
  double peak = -kInf;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = p.beta * pv.v(i, j) - lambda_l[i] - lambda_w[j];
      ev.d(i, j) = x;
      peak = std::max(peak, x);
    }
  if (!std::isfinite(peak)) throw InputError("non-finite exponent in the objective");
  double z = 0.0;
  for (double& x : ev.d.data()) {
    x = std::exp(x - peak);
    z += x;
  }
  for (double& x : ev.d.data()) x /= z;
  ev.value = peak + std::log(z);
  for (std::size_t i = 0; i < n; ++i) ev.value += lambda_l[i] * p.zones.l[i] + lambda_w[i] * p.zones.w[i];

  ev.grad_t.assign(t.size(), 0.0);
  for (std::size_t e = 0; e < t.size(); ++e) {
    if (terms[e].lo == terms[e].hi) continue;  // frozen
    ev.value += p.beta * terms[e].coef * (t[e] - terms[e].ref);
    ev.grad_t[e] = p.beta * terms[e].coef;
  }
  for (std::size_t k = 0; k < zp.ods.size(); ++k) {
    const double dk = ev.d(zp.cells[k].first, zp.cells[k].second);
    for (const auto& [e, u] : pv.usage[k])
      if (terms[e].lo != terms[e].hi) ev.grad_t[e] -= p.beta * dk * u;
  }
  const auto rs = ev.d.row_sums();
  const auto cs = ev.d.col_sums();
  ev.grad_lambda_l.resize(n);
  ev.grad_lambda_w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ev.grad_lambda_l[i] = p.zones.l[i] - rs[i];
    ev.grad_lambda_w[i] = p.zones.w[i] - cs[i];
  }
  return ev;
}

inline void center(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  s /= static_cast<double>(v.size());
  for (double& x : v) x -= s;
}

// Balancing at fixed values V: d maximizes H(d) + beta <d, V> on the
// transport polytope.
struct InnerSolution {
  BalanceResult bal;
  std::vector<double> lambda_l;
  std::vector<double> lambda_w;
  double value = 0.0;  // <d, -V> + (1/beta) sum d ln d
};

inline InnerSolution balance_pairs(const ThreeStageProblem& p, const Matrix& v, std::vector<double>& warm_log_b,
                                   const ThreeStageOptions& opt) {
  const std::size_t n = p.zones.size();
  Matrix C(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) C(i, j) = -v(i, j);
  BalanceOptions bo;
  bo.tol = opt.balance_tol;
  bo.max_iter = opt.balance_max_iter;
  bo.warm_log_b = warm_log_b;
  InnerSolution in;
  in.bal = gravity_balance(p.zones.l, p.zones.w, C, p.beta, bo);
  warm_log_b = in.bal.log_b;
  in.lambda_l.resize(n);
  in.lambda_w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    in.lambda_l[i] = -(in.bal.log_a[i] + std::log(p.zones.l[i]));
    in.lambda_w[i] = -(in.bal.log_b[i] + std::log(p.zones.w[i]));
  }
  center(in.lambda_l);
  center(in.lambda_w);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = in.bal.d(i, j);
      if (x > 0.0) s += x * (C(i, j) + std::log(x) / p.beta);
    }
  in.value = s;
  return in;
}

// Routing term for the ascent: min over the transport polytope of
// <d, C(t)> + (1/beta) sum d ln d, with AON loads d_ij on the pair routes.
class ThreeStageModel {
 public:
  ThreeStageModel(const ThreeStageProblem& p, const ThreeStageOptions& opt)
      : p_(p), opt_(opt), zp_(zone_pairs(p)), terms_(ts_terms(p)) {
    for (const auto& tm : terms_) time_ = std::max(time_, tm.t_free);
    if (opt.warm_lambda_w.size() == p.zones.size()) {
      log_b_.resize(p.zones.size());
      for (std::size_t j = 0; j < log_b_.size(); ++j) log_b_[j] = -opt.warm_lambda_w[j] - std::log(p.zones.w[j]);
    }
  }

  std::size_t od_count() const { return zp_.ods.size(); }
  const std::vector<EdgeTerm>& terms() const { return terms_; }
  double flow_scale() const { return 1.0; }
  double time_scale() const { return time_; }
  const ZonePairs& pairs() const { return zp_; }

  RoutingState evaluate(const std::vector<double>& t) {
    PairValues pv = pair_values(p_, zp_, t);
    const InnerSolution in = balance_pairs(p_, pv.v, log_b_, opt_);
    RoutingState rs;
    rs.demand.resize(zp_.ods.size());
    for (std::size_t k = 0; k < zp_.ods.size(); ++k) rs.demand[k] = in.bal.d(zp_.cells[k].first, zp_.cells[k].second);
    rs.best = std::move(pv.routes);
    rs.value = in.value;
    RouteTable table(p_.net, t);
    for (std::size_t k = 0; k < zp_.ods.size(); ++k) {
      ODPair other = zp_.ods[k];
      if (other.scope != ModeScope::either) continue;
      other.scope = rs.best[k].mode == Mode::car ? ModeScope::transit : ModeScope::car;
      Route r = table.route(other);
      if (std::isfinite(r.cost)) rs.alternatives.push_back({k, std::move(r)});
    }
    return rs;
  }

  void sample(const std::vector<double>& t, std::mt19937_64&, std::vector<RouteLoad>& out) {
    PairValues pv = pair_values(p_, zp_, t);
    const InnerSolution in = balance_pairs(p_, pv.v, log_b_, opt_);
    for (std::size_t k = 0; k < zp_.ods.size(); ++k) {
      const double dk = in.bal.d(zp_.cells[k].first, zp_.cells[k].second);
      if (dk > 0.0) out.push_back({k, dk, std::move(pv.routes[k])});
    }
  }

 private:
  const ThreeStageProblem& p_;
  const ThreeStageOptions& opt_;
  ZonePairs zp_;
  std::vector<EdgeTerm> terms_;
  std::vector<double> log_b_;
  double time_ = 0.0;
};

inline void fill_marginals(const ThreeStageProblem& p, ThreeStageSolution& s, const InnerSolution& in) {
  s.d = in.bal.d;
  s.lambda_l = in.lambda_l;
  s.lambda_w = in.lambda_w;
  const auto rs = s.d.row_sums();
  const auto cs = s.d.col_sums();
  s.row_residual = 0.0;
  s.col_residual = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    s.row_residual += std::abs(rs[i] - p.zones.l[i]);
    s.col_residual += std::abs(cs[i] - p.zones.w[i]);
  }
}

}  // namespace detail

// Nonsmooth form; value, subgradients and the softmax d at (t, lambda).
inline TsEvaluation ts_objective(ThreeStageProblem p, std::span<const double> t, std::span<const double> lambda_l,
                                 std::span<const double> lambda_w) {
  p.temperature = 0.0;
  return detail::evaluate_objective(p, t, lambda_l, lambda_w);
}

// Smooth form at temperature p.temperature > 0; the gradient is exact.
inline TsEvaluation s3c_objective(const ThreeStageProblem& p, std::span<const double> t,
                                  std::span<const double> lambda_l, std::span<const double> lambda_w) {
  if (!(p.temperature > 0.0)) throw InputError("smooth form needs a positive temperature");
  return detail::evaluate_objective(p, t, lambda_l, lambda_w);
}

inline ThreeStageSolution ts_solve(ThreeStageProblem p, const ThreeStageOptions& opt = {}) {
  p.temperature = 0.0;
  detail::check_three_stage(p);
  detail::ThreeStageModel model(p, opt);
  AscentResult r = dual_ascent(model, static_cast<const AscentOptions&>(opt));

  ThreeStageSolution s;
  s.status = r.status;
  s.t = std::move(r.t);
  const double N = p.zones.total_trips;
  s.f.resize(r.flow.size());
  s.average_flow.resize(r.flow.size());
  for (std::size_t e = 0; e < r.flow.size(); ++e) {
    s.f[e] = N * r.flow[e];
    s.average_flow[e] = N * r.average_flow[e];
  }
  s.feasibility = N * r.feasibility;
  s.complementarity = N * r.complementarity;
  s.wardrop_gap = N * r.wardrop_gap;
  s.iterations = r.iterations;
  s.epochs = r.epochs;
  s.history = std::move(r.history);

  std::vector<double> log_b;
  const detail::PairValues pv = detail::pair_values(p, model.pairs(), s.t);
  detail::fill_marginals(p, s, detail::balance_pairs(p, pv.v, log_b, opt));
  s.objective = ts_objective(p, s.t, s.lambda_l, s.lambda_w).value;
  return s;
}

// Smooth form by accelerated projected gradient over t; lambda exact inside.
inline ThreeStageSolution s3c_solve(const ThreeStageProblem& p, const ThreeStageOptions& opt = {}) {
  if (!(p.temperature > 0.0)) throw InputError("smooth form needs a positive temperature");
  detail::check_three_stage(p);
  const std::vector<EdgeTerm> terms = detail::ts_terms(p);
  const detail::ZonePairs zp = detail::zone_pairs(p);
  const std::size_t m = p.net.edge_count();
  std::vector<double> lo(m), hi(m), t0(m);
  double Tsc = 0.0;
  for (std::size_t e = 0; e < m; ++e) {
    lo[e] = terms[e].lo;
    hi[e] = terms[e].hi;
    Tsc = std::max(Tsc, terms[e].t_free);
  }
  const bool warm = opt.warm_t.size() == m;
  for (std::size_t e = 0; e < m; ++e) t0[e] = std::clamp(warm ? opt.warm_t[e] : lo[e], lo[e], hi[e]);
  std::vector<double> log_b;
  if (opt.warm_lambda_w.size() == p.zones.size()) {
    log_b.resize(p.zones.size());
    for (std::size_t j = 0; j < log_b.size(); ++j) log_b[j] = -opt.warm_lambda_w[j] - std::log(p.zones.w[j]);
  }

  // maximize -(1/beta) min_lambda objective
  auto fg = [&](const std::vector<double>& t, std::vector<double>& g) {
    const detail::PairValues pv = detail::pair_values(p, zp, t);
    const detail::InnerSolution in = detail::balance_pairs(p, pv.v, log_b, opt);
    g.assign(m, 0.0);
    double v = in.value;
    for (std::size_t e = 0; e < m; ++e) {
      v -= terms[e].coef * (t[e] - terms[e].ref);
      g[e] = -terms[e].coef;
    }
    for (std::size_t k = 0; k < zp.ods.size(); ++k) {
      const double dk = in.bal.d(zp.cells[k].first, zp.cells[k].second);
      for (const auto& [e, u] : pv.usage[k]) g[e] += dk * u;
    }
    for (std::size_t e = 0; e < m; ++e)
      if (lo[e] == hi[e]) g[e] = 0.0;
    return v;
  };
  detail::FistaOptions fo;
  fo.max_iter = opt.smooth_max_iter;
  fo.tol = opt.smooth_tol;
  fo.L0 = 1.0 / std::max(p.temperature, 1e-300);
  const auto r = detail::fista_maximize(fg, t0, lo, hi, fo);

  ThreeStageSolution s;
  s.status = r.converged ? SolveStatus::converged : SolveStatus::max_iterations;
  s.t = r.x;
  s.iterations = r.iterations;
  const detail::PairValues pv = detail::pair_values(p, zp, s.t);
  const detail::InnerSolution in = detail::balance_pairs(p, pv.v, log_b, opt);
  detail::fill_marginals(p, s, in);
  const double N = p.zones.total_trips;
  s.f.assign(m, 0.0);
  for (std::size_t k = 0; k < zp.ods.size(); ++k) {
    const double dk = in.bal.d(zp.cells[k].first, zp.cells[k].second);
    for (const auto& [e, u] : pv.usage[k]) s.f[e] += N * dk * u;
  }
  s.average_flow = s.f;
  // projected-gradient residuals, in vehicles
  for (std::size_t e = 0; e < m; ++e) {
    const double g = r.grad[e] * N;
    const double viol = s.t[e] <= lo[e] ? std::max(-g, 0.0) : (s.t[e] >= hi[e] ? std::max(g, 0.0) : std::abs(g));
    if (lo[e] == hi[e]) continue;
    s.feasibility = std::max(s.feasibility, viol);
    s.complementarity += std::abs(g * (s.t[e] - lo[e]));
  }
  s.objective = detail::evaluate_objective(p, s.t, s.lambda_l, s.lambda_w).value;
  return s;
}

}  // namespace sdeq
