#pragma once

// Stable-dynamics equilibrium: maximize  sum_w d_w T_w(t) - <cap, t - t_free>
// over t_free <= t <= t_max. Flows are recovered from the all-or-nothing
// loads seen by the ascent; queue delays t - t_free are the optimal tolls.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdeq/costs.hpp"
#include "sdeq/detail/dual_ascent.hpp"
#include "sdeq/detail/random.hpp"
#include "sdeq/detail/simplex.hpp"
#include "sdeq/error.hpp"
#include "sdeq/network.hpp"

namespace sdeq {

struct PinnedFlow {
  std::size_t edge = 0;  // edge index
  double flow = 0.0;     // observed flow; the edge gets lower bound 0 and this coefficient
};

struct SDProblem {
  Network net;
  std::vector<OdDemand> demands;
  std::vector<double> t_max;  // empty: default_t_max
  double box_factor = 100.0;
  double jam_factor = 0.0;  // > 0 enables the geometric bound on edges with length and lanes
  std::vector<PinnedFlow> pins;
};

using SDOptions = AscentOptions;

struct SDSolution {
  SolveStatus status = SolveStatus::max_iterations;
  CostVector t;
  FlowVector f;
  FlowVector s;  // max(cap - f, 0)
  FlowVector average_flow;
  double objective = 0.0;
  double feasibility = 0.0;
  double smooth_residual = 0.0;
  double complementarity = 0.0;
  double wardrop_gap = 0.0;
  std::size_t iterations = 0;
  std::size_t epochs = 0;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> violated;
  std::vector<std::pair<std::size_t, std::pair<std::vector<std::size_t>, double>>> route_flows;
};

// t_free * box_factor, or t_free + length * lanes * jam_factor / cap when the
// edge carries geometry and jam_factor > 0.
inline CostVector default_t_max(const Network& net, double box_factor = 100.0, double jam_factor = 0.0) {
  if (!(box_factor > 1.0)) throw InputError("box factor must exceed 1");
  CostVector hi(net.edge_count());
  for (std::size_t e = 0; e < hi.size(); ++e) {
    const Edge& ed = net.edge(e);
    if (jam_factor > 0.0 && ed.length && ed.lanes && *ed.length > 0.0)
      hi[e] = ed.t_free + *ed.length * *ed.lanes * jam_factor / ed.cap;
    else
      hi[e] = ed.t_free * box_factor;
  }
  return hi;
}

inline CostVector problem_t_max(const SDProblem& p) {
  if (p.t_max.empty()) return default_t_max(p.net, p.box_factor, p.jam_factor);
  if (p.t_max.size() != p.net.edge_count()) throw InputError("t_max length does not match the edge count");
  for (std::size_t e = 0; e < p.t_max.size(); ++e)
    if (!(p.t_max[e] >= p.net.edge(e).t_free))
      throw InputError("t_max below t_free on edge " + std::to_string(p.net.edge(e).id));
  return p.t_max;
}

namespace detail {

inline void check_demands(const Network& net, std::span<const OdDemand> demands) {
  for (const auto& d : demands) {
    validate_od(net, d.od);
    if (!(d.volume >= 0.0) || !std::isfinite(d.volume))
      throw InputError("invalid demand on " + describe_od(net, d.od));
  }
}

inline void check_lower(const Network& net, std::span<const double> t) {
  check_costs(net, t);
  for (std::size_t e = 0; e < t.size(); ++e)
    if (t[e] < net.edge(e).t_free)
      throw InputError("time below t_free on edge " + std::to_string(net.edge(e).id));
}

}  // namespace detail

// Draws one OD: a destination with probability d_{*j}/d, then an OD within
// that destination with probability d_w/d_{*j}.
class OdSampler {
 public:
  OdSampler(std::span<const OdDemand> demands) {
    std::map<std::size_t, std::vector<std::size_t>> by_dest;
    for (std::size_t w = 0; w < demands.size(); ++w)
      if (demands[w].volume > 0.0) by_dest[demands[w].od.destination].push_back(w);
    for (auto& [dest, ods] : by_dest) {
      Group g;
      double acc = 0.0;
      for (auto w : ods) {
        acc += demands[w].volume;
        g.cum.push_back(acc);
        g.ods.push_back(w);
      }
      total_ += acc;
      dest_cum_.push_back(total_);
      groups_.push_back(std::move(g));
    }
    if (!(total_ > 0.0)) throw InputError("sampling needs positive total demand");
  }

  double total() const { return total_; }

  std::size_t draw(std::mt19937_64& rng) const {
    const std::size_t j = pick(dest_cum_, detail::uniform01(rng) * total_);
    const Group& g = groups_[j];
    return g.ods[pick(g.cum, detail::uniform01(rng) * g.cum.back())];
  }

 private:
  struct Group {
    std::vector<double> cum;
    std::vector<std::size_t> ods;
  };

  static std::size_t pick(const std::vector<double>& cum, double x) {
    auto it = std::upper_bound(cum.begin(), cum.end(), x);
    if (it == cum.end()) --it;
    return static_cast<std::size_t>(it - cum.begin());
  }

  std::vector<Group> groups_;
  std::vector<double> dest_cum_;
  double total_ = 0.0;
};

namespace detail {

// Routing term sum_w d_w T_w(t) with AON supergradients (all ODs, or one
// sampled OD carrying the whole demand).
class AonModel {
 public:
  AonModel(const Network& net, std::vector<OdDemand> demands, std::vector<EdgeTerm> terms, bool stochastic)
      : net_(net), dem_(std::move(demands)), terms_(std::move(terms)) {
    for (const auto& d : dem_) flow_ += d.volume;
    if (!(flow_ > 0.0))
      for (const auto& tm : terms_) flow_ = std::max(flow_, tm.smooth ? tm.cap : tm.coef);
    if (!(flow_ > 0.0)) flow_ = 1.0;
    for (const auto& tm : terms_) time_ = std::max(time_, tm.t_free);
    if (stochastic) sampler_.emplace(dem_);
  }

  std::size_t od_count() const { return dem_.size(); }
  const std::vector<EdgeTerm>& terms() const { return terms_; }
  double flow_scale() const { return flow_; }
  double time_scale() const { return time_; }

  RoutingState evaluate(const std::vector<double>& t) {
    RouteTable table(net_, t);
    RoutingState rs;
    rs.demand.resize(dem_.size());
    rs.best.resize(dem_.size());
    for (std::size_t w = 0; w < dem_.size(); ++w) {
      rs.demand[w] = dem_[w].volume;
      rs.best[w] = table.route(dem_[w].od);
      if (dem_[w].volume == 0.0) continue;
      if (!std::isfinite(rs.best[w].cost))
        throw InfeasibleError("OD " + describe_od(net_, dem_[w].od) + " is unreachable");
      rs.value += dem_[w].volume * rs.best[w].cost;
      // a mode tie is invisible to AON, which always picks the car
      if (dem_[w].od.scope == ModeScope::either) {
        ODPair other = dem_[w].od;
        other.scope = rs.best[w].mode == Mode::car ? ModeScope::transit : ModeScope::car;
        Route r = table.route(other);
        if (std::isfinite(r.cost)) rs.alternatives.push_back({w, std::move(r)});
      }
    }
    return rs;
  }

  void sample(const std::vector<double>& t, std::mt19937_64& rng, std::vector<RouteLoad>& out) {
    RouteTable table(net_, t);
    auto load = [&](std::size_t w, double vol) {
      Route r = table.route(dem_[w].od);
      if (!std::isfinite(r.cost)) throw InfeasibleError("OD " + describe_od(net_, dem_[w].od) + " is unreachable");
      out.push_back({w, vol, std::move(r)});
    };
    if (sampler_) {
      load(sampler_->draw(rng), sampler_->total());
      return;
    }
    for (std::size_t w = 0; w < dem_.size(); ++w)
      if (dem_[w].volume > 0.0) load(w, dem_[w].volume);
  }

 private:
  const Network& net_;
  std::vector<OdDemand> dem_;
  std::vector<EdgeTerm> terms_;
  std::optional<OdSampler> sampler_;
  double flow_ = 0.0;
  double time_ = 0.0;
};

inline std::vector<EdgeTerm> sd_terms(const SDProblem& p, const std::optional<CostFamily>& transit_smooth = {}) {
  const CostVector hi = problem_t_max(p);
  std::vector<EdgeTerm> terms(p.net.edge_count());
  for (std::size_t e = 0; e < terms.size(); ++e) {
    const Edge& ed = p.net.edge(e);
    EdgeTerm& tm = terms[e];
    tm.lo = ed.t_free;
    tm.hi = hi[e];
    tm.coef = ed.cap;
    tm.ref = ed.t_free;
    tm.t_free = ed.t_free;
    tm.cap = ed.cap;
    if (transit_smooth && ed.mode == Mode::transit) tm.smooth = transit_smooth;
  }
  for (const auto& pin : p.pins) {
    if (pin.edge >= terms.size()) throw InputError("pinned edge outside the network");
    if (!(pin.flow >= 0.0)) throw InputError("pinned flow must be nonnegative");
    terms[pin.edge].lo = 0.0;
    terms[pin.edge].coef = pin.flow;
    terms[pin.edge].ref = 0.0;
    terms[pin.edge].smooth.reset();
  }
  return terms;
}

inline SDSolution to_sd_solution(const Network& net, AscentResult r) {
  SDSolution s;
  s.status = r.status;
  s.t = std::move(r.t);
  s.f = std::move(r.flow);
  s.s.resize(s.f.size());
  for (std::size_t e = 0; e < s.f.size(); ++e) s.s[e] = std::max(net.edge(e).cap - s.f[e], 0.0);
  s.average_flow = std::move(r.average_flow);
  s.objective = r.objective;
  s.feasibility = r.feasibility;
  s.smooth_residual = r.smooth_residual;
  s.complementarity = r.complementarity;
  s.wardrop_gap = r.wardrop_gap;
  s.iterations = r.iterations;
  s.epochs = r.epochs;
  s.history = std::move(r.history);
  s.violated = std::move(r.violated);
  s.route_flows = std::move(r.route_flows);
  return s;
}

inline SDSolution run_sd(const SDProblem& p, const SDOptions& opt, bool stochastic,
                         const std::optional<CostFamily>& transit_smooth = {}) {
  check_demands(p.net, p.demands);
  AonModel model(p.net, p.demands, sd_terms(p, transit_smooth), stochastic);
  return to_sd_solution(p.net, dual_ascent(model, opt));
}

}  // namespace detail

// sum_w d_w T_w(t) - <cap, t - t_free>
inline double sd_objective(const Network& net, std::span<const OdDemand> demands, std::span<const double> t) {
  detail::check_demands(net, demands);
  detail::check_lower(net, t);
  RouteTable table(net, t);
  double v = 0.0;
  for (const auto& d : demands) {
    if (d.volume == 0.0) continue;
    const double c = table.cost(d.od);
    if (!std::isfinite(c)) throw InfeasibleError("OD " + describe_od(net, d.od) + " is unreachable");
    v += d.volume * c;
  }
  for (std::size_t e = 0; e < t.size(); ++e) v -= net.edge(e).cap * (t[e] - net.edge(e).t_free);
  return v;
}

inline CostVector sd_supergradient(const Network& net, std::span<const OdDemand> demands, std::span<const double> t) {
  detail::check_demands(net, demands);
  detail::check_lower(net, t);
  CostVector g = aon_assign(net, t, demands);
  for (std::size_t e = 0; e < g.size(); ++e) g[e] -= net.edge(e).cap;
  return g;
}

inline SDSolution sd_solve(const SDProblem& p, const SDOptions& opt = {}) { return detail::run_sd(p, opt, false); }

// One sampled OD per iteration, carrying the whole demand.
inline SDSolution sd_solve_stochastic(const SDProblem& p, const SDOptions& opt = {}) {
  return detail::run_sd(p, opt, true);
}

// Each OD may use either mode; the cheaper mode's route takes all of d_w,
// with the car winning ties.
inline SDSolution sd_modesplit_solve(SDProblem p, const SDOptions& opt = {}) {
  for (auto& d : p.demands) d.od.scope = ModeScope::either;
  return detail::run_sd(p, opt, false);
}

// Car edges keep the hard-capacity term; transit edges use the conjugate of
// a smooth family (hyperbolic by default), whose flows are inv_flow(t).
inline SDSolution sd_mixed_solve(SDProblem p, const CostFamily& transit_family, const SDOptions& opt = {}) {
  if (transit_family.kind == FamilyKind::hard_cap) throw InputError("mixed model needs a smooth transit family");
  for (auto& d : p.demands) d.od.scope = ModeScope::either;
  return detail::run_sd(p, opt, false, transit_family);
}

// eta = t - t_free
inline CostVector compute_tolls(const Network& net, const SDSolution& s) {
  if (s.t.size() != net.edge_count()) throw InputError("solution does not match the network");
  CostVector eta(s.t.size());
  for (std::size_t e = 0; e < eta.size(); ++e) eta[e] = std::max(s.t[e] - net.edge(e).t_free, 0.0);
  return eta;
}

struct LpOracleResult {
  FlowVector f;
  double objective = 0.0;  // sum t_free * f
  CostVector eta;          // capacity multipliers, >= 0
  std::vector<double> od_cost;  // multipliers of the demand rows (T_w at t_free + eta)
  std::size_t paths = 0;
};

// min sum_e t_free_e f_e over path flows meeting demand with f <= cap, solved
// exactly over enumerated simple paths.
inline LpOracleResult lp_oracle(const Network& net, std::span<const OdDemand> demands, std::size_t path_limit = 2000) {
  detail::check_demands(net, demands);
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::size_t> owner;
  for (std::size_t w = 0; w < demands.size(); ++w) {
    const ODPair& od = demands[w].od;
    auto add = [&](EdgeFilter f) {
      const std::size_t left = path_limit >= paths.size() ? path_limit - paths.size() : 0;
      for (auto& p : enumerate_simple_paths(net, od.origin, od.destination, f, left)) {
        paths.push_back(std::move(p));
        owner.push_back(w);
      }
    };
    if (od.scope != ModeScope::transit) add(EdgeFilter::car);
    if (od.scope != ModeScope::car) add(EdgeFilter::transit);
  }
  const std::size_t P = paths.size();
  const std::size_t m = net.edge_count();
  std::vector<double> c(P, 0.0);
  std::vector<std::vector<double>> Aeq(demands.size(), std::vector<double>(P, 0.0));
  std::vector<std::vector<double>> Ale(m, std::vector<double>(P, 0.0));
  for (std::size_t p = 0; p < P; ++p) {
    Aeq[owner[p]][p] = 1.0;
    for (auto e : paths[p]) {
      c[p] += net.edge(e).t_free;
      Ale[e][p] += 1.0;
    }
  }
  std::vector<double> beq(demands.size());
  for (std::size_t w = 0; w < demands.size(); ++w) beq[w] = demands[w].volume;
  const auto sol = detail::solve_lp(c, Aeq, beq, Ale, net.capacities());
  if (sol.status != detail::LpStatus::optimal) throw InfeasibleError("capacities cannot carry the demand");
  LpOracleResult out;
  out.paths = P;
  out.f.assign(m, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (auto e : paths[p]) out.f[e] += sol.x[p];
  for (std::size_t e = 0; e < m; ++e) out.objective += net.edge(e).t_free * out.f[e];
  out.eta.resize(m);
  for (std::size_t e = 0; e < m; ++e) out.eta[e] = std::max(-sol.dual_le[e], 0.0);
  out.od_cost = sol.dual_eq;
  return out;
}

}  // namespace sdeq
