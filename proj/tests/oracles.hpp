#pragma once

// Reference computations for the tests. Nothing here calls the library's
// solvers: paths are enumerated by a separate DFS, aggregates are summed
// over that enumeration directly.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sdeq/network.hpp"

namespace oracle {

using sdeq::EdgeRecord;
using sdeq::Mode;
using sdeq::Network;

inline EdgeRecord edge(std::int64_t id, const std::string& tail, const std::string& head, double t_free, double cap,
                       Mode mode = Mode::car) {
  EdgeRecord r;
  r.id = id;
  r.tail = tail;
  r.head = head;
  r.t_free = t_free;
  r.cap = cap;
  r.mode = mode;
  return r;
}

inline bool mode_ok(const Network& net, std::size_t e, int mode) {
  // mode: -1 any, 0 car, 1 transit
  if (mode < 0) return true;
  return static_cast<int>(net.edge(e).mode) == mode;
}

// Every simple path o -> d using edges of one mode (or any when mode < 0).
inline std::vector<std::vector<std::size_t>> simple_paths(const Network& net, std::size_t o, std::size_t d,
                                                          int mode = -1) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> path;
  std::vector<bool> seen(net.node_count(), false);
  std::function<void(std::size_t)> go = [&](std::size_t u) {
    if (u == d) {
      out.push_back(path);
      return;
    }
    seen[u] = true;
    for (std::size_t e = 0; e < net.edge_count(); ++e) {
      if (net.edge(e).tail != u || !mode_ok(net, e, mode) || seen[net.edge(e).head]) continue;
      path.push_back(e);
      go(net.edge(e).head);
      path.pop_back();
    }
    seen[u] = false;
  };
  go(o);
  return out;
}

// Paths for scope `either`: car paths then transit paths, never mixed.
inline std::vector<std::vector<std::size_t>> modal_paths(const Network& net, std::size_t o, std::size_t d) {
  auto car = simple_paths(net, o, d, 0);
  auto tr = simple_paths(net, o, d, 1);
  car.insert(car.end(), tr.begin(), tr.end());
  return car;
}

inline double path_cost(const std::vector<std::size_t>& p, const std::vector<double>& t) {
  double c = 0.0;
  for (auto e : p) c += t[e];
  return c;
}

inline double min_over(const std::vector<std::vector<std::size_t>>& paths, const std::vector<double>& t) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : paths) best = std::min(best, path_cost(p, t));
  return best;
}

// T * ln sum_p exp(-c_p / T), summed path by path.
inline double lse(const std::vector<std::vector<std::size_t>>& paths, const std::vector<double>& t, double T) {
  const double lo = min_over(paths, t);
  double s = 0.0;
  for (const auto& p : paths) s += std::exp(-(path_cost(p, t) - lo) / T);
  return -lo + T * std::log(s);
}

// Gibbs edge-usage probabilities of the path measure exp(-c_p / T).
inline std::vector<double> usage(const Network& net, const std::vector<std::vector<std::size_t>>& paths,
                                 const std::vector<double>& t, double T) {
  const double lo = min_over(paths, t);
  std::vector<double> u(net.edge_count(), 0.0);
  double z = 0.0;
  for (const auto& p : paths) {
    const double w = std::exp(-(path_cost(p, t) - lo) / T);
    z += w;
    for (auto e : p) u[e] += w;
  }
  for (double& x : u) x /= z;
  return u;
}

inline double central_diff(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                           std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double dn = f(x);
  return (up - dn) / (2.0 * h);
}

// Random DAG on nodes "0".."n-1" (edges only from lower to higher label),
// always containing the chain 0 -> 1 -> ... -> n-1 so that every node is
// reachable from 0.
inline std::vector<EdgeRecord> random_dag(std::mt19937_64& rng, int n, int extra, double cap_lo = 1.0,
                                          double cap_hi = 10.0) {
  std::uniform_real_distribution<double> tf(0.5, 3.0);
  std::uniform_real_distribution<double> cp(cap_lo, cap_hi);
  std::vector<EdgeRecord> recs;
  std::int64_t id = 1;
  for (int v = 0; v + 1 < n; ++v) recs.push_back(edge(id++, std::to_string(v), std::to_string(v + 1), tf(rng), cp(rng)));
  std::uniform_int_distribution<int> node(0, n - 1);
  for (int k = 0; k < extra; ++k) {
    int a = node(rng), b = node(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    recs.push_back(edge(id++, std::to_string(a), std::to_string(b), tf(rng), cp(rng)));
  }
  return recs;
}

}  // namespace oracle
