#pragma once

// Projected dual ascent over edge times t in a box, shared by the
// stable-dynamics, mode-split, mixed, Beckmann-dual and three-stage solvers.
//
// The maximized function is  R(t) - sum_e h_e(t_e)  where R(t) is a routing
// term whose supergradient is a flow made of whole-route loads (AON), and
// h_e is either linear, coef_e * (t_e - ref_e), or a smooth conjugate
// sigma*_e(t_e). Primal flows are recovered from the loads observed in the
// last epoch: their uniform average, then (optionally) a reweighting of the
// observed routes that best meets the stationarity conditions implied by t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sdeq/costs.hpp"
#include "sdeq/error.hpp"
#include "sdeq/network.hpp"

namespace sdeq {

enum class StepPolicy {
  restarted,       // constant-step dual averaging per epoch; step doubles or halves between epochs
  dual_averaging,  // one run with weights ~ 1/sqrt(k)
};

enum class SolveStatus { converged, max_iterations, infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    default: return "infeasible";
  }
}

struct AscentOptions {
  std::size_t max_iter = 400000;
  std::size_t epoch_length = 400;
  StepPolicy policy = StepPolicy::restarted;
  double feas_tol = 1e-8;  // times the flow scale
  double comp_tol = 1e-8;  // times flow scale * time scale
  double gap_tol = 1e-8;   // times flow scale * time scale
  double initial_radius = 0.0;  // time units; 0 picks the time scale
  double warm_radius = 1e-3;    // times the time scale, used with warm_t
  bool warm_probe = true;       // line search for the first warm step; see dual_ascent
  bool refine = true;
  double drift_threshold = 0.5;  // step doubles when displacement > drift_threshold * travel / sqrt(K)
  double stall_ratio = 0.9;      // step is held while the certificate score falls below this factor
  double steady_cosine = 0.9;    // ... or while consecutive epoch displacements align this closely
  std::uint64_t seed = 1;
  std::vector<double> warm_t;
};

struct EdgeTerm {
  double lo = 0.0;
  double hi = kInf;
  double coef = 0.0;  // linear coefficient (capacity or pinned flow)
  double ref = 0.0;   // linear term is coef * (t - ref)
  std::optional<CostFamily> smooth;  // when set: sigma*(t) of this family instead
  double t_free = 1.0;
  double cap = 1.0;

  double value(double t) const { return smooth ? sigma_star(*smooth, t_free, cap, t) : coef * (t - ref); }
  double slope(double t) const { return smooth ? inv_flow(*smooth, t_free, cap, t) : coef; }
};

struct RouteLoad {
  std::size_t od = 0;
  double volume = 0.0;
  Route route;
};

// Deterministic view of the routing term at t.
struct RoutingState {
  std::vector<double> demand;  // per OD
  std::vector<Route> best;     // per OD cheapest route at t
  std::vector<std::pair<std::size_t, Route>> alternatives;  // (od, route) also offered to the primal recovery
  double value = 0.0;          // routing term at t; edge terms are subtracted by the engine
};

struct EpochRecord {
  std::size_t iteration = 0;
  double step = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  double wardrop_gap = 0.0;
  double objective = 0.0;
};

struct AscentResult {
  SolveStatus status = SolveStatus::max_iterations;
  std::vector<double> t;
  std::vector<double> flow;       // reported flow; smooth edges use inv_flow(t)
  std::vector<double> path_flow;  // the route-consistent recovered flow
  std::vector<double> average_flow;  // plain uniform average of the last epoch's loads
  std::vector<std::pair<std::size_t, std::pair<std::vector<std::size_t>, double>>> route_flows;
  double objective = 0.0;
  double feasibility = 0.0;
  double smooth_residual = 0.0;
  double complementarity = 0.0;
  double wardrop_gap = 0.0;
  std::size_t iterations = 0;
  std::size_t epochs = 0;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> violated;  // edges flagged by the infeasibility test
};

namespace detail {

enum class Target : std::uint8_t { eq, le, ge, free };

struct Candidate {
  std::size_t od;
  std::vector<std::size_t> edges;
  double weight;  // observed load in the epoch
  double excess;  // route cost minus OD minimum at the certificate point
};

inline void project_capped_simplex(std::vector<double>& x, double total) {
  // Euclidean projection onto {x >= 0, sum x = total}.
  if (x.empty()) return;
  std::vector<double> s = x;
  std::sort(s.begin(), s.end(), std::greater<>());
  double acc = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    acc += s[i];
    const double th = (acc - total) / static_cast<double>(i + 1);
    if (i + 1 == s.size() || s[i + 1] <= th) {
      theta = th;
      break;
    }
  }
  for (double& v : x) v = std::max(v - theta, 0.0);
}

// Reweights candidate routes (per OD, summing to the OD demand) to minimize
// sum_e pen_e(f_e); pen is a squared distance to the target set of edge e.
inline std::vector<double> reweight_routes(const std::vector<Candidate>& cands, const std::vector<double>& demand,
                                           const std::vector<Target>& kind, const std::vector<double>& target,
                                           std::size_t edges) {
  const std::size_t P = cands.size();
  std::vector<std::vector<std::size_t>> by_od(demand.size());
  for (std::size_t p = 0; p < P; ++p) by_od[cands[p].od].push_back(p);
  std::vector<double> x(P, 0.0);
  for (std::size_t w = 0; w < demand.size(); ++w) {
    double tot = 0.0;
    for (auto p : by_od[w]) tot += cands[p].weight;
    for (auto p : by_od[w]) x[p] = tot > 0.0 ? demand[w] * cands[p].weight / tot : demand[w] / by_od[w].size();
  }
  double lip = 0.0;
  for (const auto& c : cands) lip += static_cast<double>(c.edges.size());
  lip = 2.0 * std::max(lip, 1.0);
  auto flows = [&](const std::vector<double>& xs) {
    std::vector<double> f(edges, 0.0);
    for (std::size_t p = 0; p < P; ++p)
      for (auto e : cands[p].edges) f[e] += xs[p];
    return f;
  };
  auto penalty_grad = [&](const std::vector<double>& f, std::vector<double>& g) {
    double val = 0.0;
    g.assign(edges, 0.0);
    for (std::size_t e = 0; e < edges; ++e) {
      double r = f[e] - target[e];
      if (kind[e] == Target::le) r = std::max(r, 0.0);
      else if (kind[e] == Target::ge) r = std::min(r, 0.0);
      else if (kind[e] == Target::free) r = 0.0;
      val += r * r;
      g[e] = 2.0 * r;
    }
    return val;
  };
  std::vector<double> y = x, prev = x, ge, gx(P);
  double tk = 1.0;
  double scale = 0.0;
  for (double d : demand) scale = std::max(scale, d);
  const double stop = 1e-15 * std::max(scale, 1e-300);
  for (int it = 0; it < 20000; ++it) {
    const double val = penalty_grad(flows(y), ge);
    if (val == 0.0 && it > 0) {
      x = y;
      break;
    }
    for (std::size_t p = 0; p < P; ++p) {
      double s = 0.0;
      for (auto e : cands[p].edges) s += ge[e];
      gx[p] = y[p] - s / lip;
    }
    for (std::size_t w = 0; w < demand.size(); ++w) {
      std::vector<double> part;
      for (auto p : by_od[w]) part.push_back(gx[p]);
      project_capped_simplex(part, demand[w]);
      for (std::size_t i = 0; i < by_od[w].size(); ++i) gx[by_od[w][i]] = part[i];
    }
    double move = 0.0;
    double along = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      move = std::max(move, std::abs(gx[p] - x[p]));
      along += (y[p] - gx[p]) * (gx[p] - x[p]);
    }
    prev = x;
    x = gx;
    if (move <= stop) break;
    if (along > 0.0) {  // momentum restart
      tk = 1.0;
      y = x;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    for (std::size_t p = 0; p < P; ++p) y[p] = x[p] + (tk - 1.0) / tn * (x[p] - prev[p]);
    tk = tn;
  }
  return x;
}

}  // namespace detail

// Model concept:
//   std::size_t od_count() const;
//   const std::vector<EdgeTerm>& terms() const;
//   double flow_scale() const;  double time_scale() const;
//   RoutingState evaluate(const std::vector<double>& t);
//   void sample(const std::vector<double>& t, std::mt19937_64& rng, std::vector<RouteLoad>& out);
template <class Model>
AscentResult dual_ascent(Model& model, const AscentOptions& opt) {
  const auto& terms = model.terms();
  const std::size_t m = terms.size();
  if (opt.epoch_length < 2) throw InputError("epoch length must be at least 2");
  const double F = model.flow_scale();
  const double Tsc = model.time_scale();
  const double feas_abs = opt.feas_tol * F;
  const double comp_abs = opt.comp_tol * F * Tsc;
  const double gap_abs = opt.gap_tol * F * Tsc;

  auto clip = [&](std::size_t e, double v) { return std::min(std::max(v, terms[e].lo), terms[e].hi); };

  std::vector<double> t(m);
  const bool warm = opt.warm_t.size() == m;
  for (std::size_t e = 0; e < m; ++e) t[e] = clip(e, warm ? opt.warm_t[e] : terms[e].lo);

  std::mt19937_64 rng(opt.seed);
  std::vector<RouteLoad> loads;
  std::vector<double> g(m);
  auto oracle = [&](const std::vector<double>& at) {
    loads.clear();
    model.sample(at, rng, loads);
    for (std::size_t e = 0; e < m; ++e) g[e] = -terms[e].slope(at[e]);
    for (const auto& ld : loads)
      for (auto e : ld.route.edges) g[e] += ld.volume;
  };

  AscentResult res;
  oracle(t);
  double G = 0.0;
  for (double v : g) G += v * v;
  G = std::sqrt(G);
  if (!(G > 0.0)) G = std::max(F, 1e-300);
  const double R0 = opt.initial_radius > 0.0 ? opt.initial_radius : (warm ? opt.warm_radius * Tsc : Tsc);
  const std::size_t K = opt.epoch_length;
  double gamma = R0 / (G * static_cast<double>(K));
  std::size_t iter = 0;

  if (warm && opt.warm_probe && opt.initial_radius <= 0.0) {
    // The warm point says nothing about how far the patched optimum is, and
    // the doubling schedule pays an epoch per factor of two. Measure it:
    // double a step along g while the dual value rises, and let the first
    // iteration take that step. Probe evaluations count as iterations.
    auto dual_value = [&](const std::vector<double>& at) {
      double v = model.evaluate(at).value;
      for (std::size_t e = 0; e < m; ++e) v -= terms[e].value(at[e]);
      ++iter;
      return v;
    };
    double best = dual_value(t);
    double s = R0 / G;
    double s_best = 0.0;
    std::vector<double> trial(m);
    for (int j = 0; j < 60; ++j, s *= 2.0) {
      for (std::size_t e = 0; e < m; ++e) trial[e] = clip(e, t[e] + s * g[e]);
      const double v = dual_value(trial);
      if (!(v > best)) break;
      best = v;
      s_best = s;
    }
    gamma = std::max(gamma, s_best);
  }

  std::vector<double> z(m, 0.0), center = t, tsum(m), tmin(m), tmax(m), fsum(m);
  std::map<std::pair<std::size_t, std::vector<std::size_t>>, double> bundle;
  std::size_t violated_since = 0;
  bool violating = false;
  std::size_t da_k = 0;  // dual_averaging iteration counter
  double prev_score = kInf;
  std::vector<double> prev_disp(m, 0.0);
  bool fresh_stage = true;  // false: the next epoch continues the current dual-averaging run

  for (;;) {
    // --- one epoch
    if (opt.policy == StepPolicy::restarted && fresh_stage) {
      center = t;
      std::fill(z.begin(), z.end(), 0.0);
    }
    fresh_stage = true;
    std::fill(tsum.begin(), tsum.end(), 0.0);
    std::fill(fsum.begin(), fsum.end(), 0.0);
    tmin = t;
    tmax = t;
    bundle.clear();
    double travel = 0.0;
    std::size_t tcount = 0;
    double wsum = 0.0;
    const std::vector<double> start = t;
    for (std::size_t k = 0; k < K; ++k) {
      oracle(t);
      const bool late = 2 * k >= K;
      if (late) {
        for (const auto& ld : loads) {
          bundle[{ld.od, ld.route.edges}] += ld.volume;
          for (auto e : ld.route.edges) fsum[e] += ld.volume;
        }
        wsum += 1.0;
      }
      for (std::size_t e = 0; e < m; ++e) z[e] += g[e];
      double step = gamma;
      if (opt.policy == StepPolicy::dual_averaging) step = gamma * static_cast<double>(K) / std::sqrt(static_cast<double>(++da_k));
      double moved = 0.0;
      for (std::size_t e = 0; e < m; ++e) {
        const double nt = clip(e, center[e] + step * z[e]);
        moved += (nt - t[e]) * (nt - t[e]);
        t[e] = nt;
      }
      travel += std::sqrt(moved);
      if (late) {
        for (std::size_t e = 0; e < m; ++e) {
          tsum[e] += t[e];
          tmin[e] = std::min(tmin[e], t[e]);
          tmax[e] = std::max(tmax[e], t[e]);
        }
        ++tcount;
      }
      ++iter;
    }
    ++res.epochs;
    double disp = 0.0;
    for (std::size_t e = 0; e < m; ++e) disp += (t[e] - start[e]) * (t[e] - start[e]);
    disp = std::sqrt(disp);

    // --- certificate at the late-epoch average
    std::vector<double> trep(m);
    for (std::size_t e = 0; e < m; ++e) trep[e] = clip(e, tsum[e] / static_cast<double>(tcount));
    RoutingState rs = model.evaluate(trep);
    std::vector<double> avg(m);
    for (std::size_t e = 0; e < m; ++e) avg[e] = wsum > 0.0 ? fsum[e] / wsum : 0.0;

    std::vector<detail::Target> kind(m);
    std::vector<double> target(m);
    for (std::size_t e = 0; e < m; ++e) {
      const bool at_lo = tmin[e] <= terms[e].lo;
      const bool at_hi = tmax[e] >= terms[e].hi;
      if (terms[e].smooth) {
        kind[e] = at_hi ? detail::Target::ge : detail::Target::eq;
        target[e] = terms[e].slope(trep[e]);
      } else {
        target[e] = terms[e].coef;
        kind[e] = at_lo && at_hi ? detail::Target::free
                  : at_lo        ? detail::Target::le
                  : at_hi        ? detail::Target::ge
                                 : detail::Target::eq;
      }
    }

    struct Cert {
      std::vector<double> f;
      std::vector<std::pair<std::size_t, std::pair<std::vector<std::size_t>, double>>> routes;
      double feas = 0.0, smooth = 0.0, comp = 0.0, gap = 0.0;
      double score = kInf;
    };
    auto certify = [&](std::vector<detail::Candidate> cands, bool reweight) {
      Cert c;
      std::vector<double> x(cands.size());
      if (reweight) {
        x = detail::reweight_routes(cands, rs.demand, kind, target, m);
      } else {
        std::vector<double> tot(rs.demand.size(), 0.0);
        for (const auto& cd : cands) tot[cd.od] += cd.weight;
        for (std::size_t p = 0; p < cands.size(); ++p)
          x[p] = tot[cands[p].od] > 0.0 ? rs.demand[cands[p].od] * cands[p].weight / tot[cands[p].od]
                                        : (cands[p].excess == 0.0 ? rs.demand[cands[p].od] : 0.0);
      }
      c.f.assign(m, 0.0);
      for (std::size_t p = 0; p < cands.size(); ++p) {
        if (x[p] <= 0.0) continue;
        for (auto e : cands[p].edges) c.f[e] += x[p];
        c.gap += x[p] * cands[p].excess;
        c.routes.push_back({cands[p].od, {cands[p].edges, x[p]}});
      }
      for (std::size_t e = 0; e < m; ++e) {
        if (terms[e].smooth) {
          c.smooth = std::max(c.smooth, std::abs(c.f[e] - target[e]));
        } else {
          c.feas = std::max(c.feas, c.f[e] - terms[e].coef);
          c.comp += (trep[e] - terms[e].lo) * std::abs(terms[e].coef - c.f[e]);
        }
      }
      c.feas = std::max(c.feas, 0.0);
      c.score = std::max({c.feas / feas_abs, c.smooth / feas_abs, c.comp / comp_abs, c.gap / gap_abs});
      return c;
    };

    std::vector<detail::Candidate> all;
    {
      std::vector<char> seen_best(rs.demand.size(), 0);
      for (const auto& [key, wgt] : bundle) {
        double cost = 0.0;
        for (auto e : key.second) cost += trep[e];
        const double ex = std::max(cost - rs.best[key.first].cost, 0.0);
        if (key.second == rs.best[key.first].edges) seen_best[key.first] = 1;
        all.push_back({key.first, key.second, wgt, ex});
      }
      for (std::size_t w = 0; w < rs.demand.size(); ++w)
        if (!seen_best[w] && rs.demand[w] > 0.0) all.push_back({w, rs.best[w].edges, 0.0, 0.0});
      for (const auto& [w, r] : rs.alternatives) {
        if (!(rs.demand[w] > 0.0) || bundle.count({w, r.edges}) || r.edges == rs.best[w].edges) continue;
        all.push_back({w, r.edges, 0.0, std::max(r.cost - rs.best[w].cost, 0.0)});
      }
    }
    Cert best = certify(all, false);
    if (opt.refine) {
      const double levels[] = {1e-12 * Tsc, gap_abs / std::max(F, 1e-300), kInf};
      for (double lv : levels) {
        std::vector<detail::Candidate> sub;
        for (const auto& cd : all)
          if (cd.excess <= lv) sub.push_back(cd);
        Cert c = certify(sub, true);
        if (c.score < best.score) best = std::move(c);
        if (best.score <= 1.0) break;
      }
    }
    double objective = rs.value;
    for (std::size_t e = 0; e < m; ++e) objective -= terms[e].value(trep[e]);

    res.t = trep;
    res.path_flow = best.f;
    res.average_flow = avg;
    res.route_flows = best.routes;
    res.flow = best.f;
    for (std::size_t e = 0; e < m; ++e)
      if (terms[e].smooth) res.flow[e] = terms[e].slope(trep[e]);
    res.objective = objective;
    res.feasibility = best.feas;
    res.smooth_residual = best.smooth;
    res.complementarity = best.comp;
    res.wardrop_gap = best.gap;
    res.iterations = iter;
    res.history.push_back({iter, gamma, best.feas, best.comp, best.gap, objective});

    if (best.score <= 1.0) {
      res.status = SolveStatus::converged;
      res.violated.clear();
      return res;
    }

    std::vector<std::size_t> viol;
    for (std::size_t e = 0; e < m; ++e) {
      const double cap_e = terms[e].smooth ? target[e] : terms[e].coef;
      if (tmax[e] >= terms[e].hi && best.f[e] > cap_e + feas_abs) viol.push_back(e);
    }
    if (!viol.empty()) {
      if (!violating) violated_since = iter - K;
      violating = true;
    } else {
      violating = false;
    }
    res.violated = viol;
    if (violating && res.epochs >= 4 && (iter - violated_since) * 4 >= iter && (iter - violated_since) >= 3 * K) {
      res.status = SolveStatus::infeasible;
      return res;
    }
    if (iter >= opt.max_iter) {
      res.status = SolveStatus::max_iterations;
      return res;
    }

    if (opt.policy == StepPolicy::restarted) {
      // Double on visible drift. Otherwise hold the step while the
      // certificate keeps improving (a weak drift under route oscillation
      // needs a constant step to cover its distance) and halve on a plateau.
      const bool drift = disp > opt.drift_threshold * travel / std::sqrt(static_cast<double>(K));
      const bool improving = best.score < opt.stall_ratio * prev_score;
      prev_score = best.score;
      // Smooth terms converge along directions the route oscillation hides;
      // an epoch displacement aligned with the previous one means t is still
      // travelling, so the step is held rather than halved.
      double dd = 0.0, dp = 0.0, pp = 0.0;
      for (std::size_t e = 0; e < m; ++e) {
        const double d = t[e] - start[e];
        dd += d * d;
        dp += d * prev_disp[e];
        pp += prev_disp[e] * prev_disp[e];
        prev_disp[e] = d;
      }
      const bool steady = dp > opt.steady_cosine * std::sqrt(dd * pp);
      if (drift) {
        gamma *= 2.0;
      } else if (improving || steady) {
        fresh_stage = false;
      } else {
        gamma *= 0.5;
        t = trep;
      }
    }
  }
}

}  // namespace sdeq
