#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdeq/error.hpp"

namespace sdeq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Mode : std::uint8_t { car, transit };

// Which edges a shortest-path search may use.
enum class EdgeFilter : std::uint8_t { all, car, transit };

// Which modes an OD pair may travel by. `either` means the cheaper of the
// two single-mode routes; routes never mix modes.
enum class ModeScope : std::uint8_t { car, transit, either };

using CostVector = std::vector<double>;
using FlowVector = std::vector<double>;

inline const char* to_string(Mode m) { return m == Mode::car ? "car" : "transit"; }

inline const char* to_string(ModeScope s) {
  switch (s) {
    case ModeScope::car: return "car";
    case ModeScope::transit: return "transit";
    default: return "either";
  }
}

struct EdgeRecord {
  std::int64_t id = 0;
  std::string tail;
  std::string head;
  Mode mode = Mode::car;
  double t_free = 1.0;
  double cap = 1.0;
  std::optional<double> length;
  std::optional<int> lanes;

  bool operator==(const EdgeRecord&) const = default;
};

struct Edge {
  std::int64_t id = 0;
  std::size_t tail = 0;
  std::size_t head = 0;
  Mode mode = Mode::car;
  double t_free = 1.0;
  double cap = 1.0;
  std::optional<double> length;
  std::optional<int> lanes;
};

class Network;
Network build_network(std::vector<EdgeRecord> records, std::span<const std::string> declared_nodes = {});

// Directed multigraph. Edges are stored sorted by id; the position in that
// order is the edge index used by every cost and flow vector.
class Network {
 public:
  Network() = default;

  std::size_t node_count() const { return labels_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const Edge& edge(std::size_t e) const { return edges_.at(e); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& out_edges(std::size_t v) const { return out_.at(v); }
  const std::vector<std::size_t>& mode_edges(Mode m) const { return m == Mode::car ? car_ : transit_; }
  const std::string& node_label(std::size_t v) const { return labels_.at(v); }
  const std::vector<std::string>& node_labels() const { return labels_; }

  std::optional<std::size_t> find_node(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t node(const std::string& label) const {
    auto v = find_node(label);
    if (!v) throw InputError("unknown node '" + label + "'");
    return *v;
  }

  std::optional<std::size_t> find_edge(std::int64_t id) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), id,
                               [](const Edge& e, std::int64_t x) { return e.id < x; });
    if (it == edges_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - edges_.begin());
  }

  bool admits(std::size_t e, EdgeFilter f) const {
    switch (f) {
      case EdgeFilter::car: return edges_[e].mode == Mode::car;
      case EdgeFilter::transit: return edges_[e].mode == Mode::transit;
      default: return true;
    }
  }

  CostVector free_flow_times() const {
    CostVector t(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) t[e] = edges_[e].t_free;
    return t;
  }

  FlowVector capacities() const {
    FlowVector c(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) c[e] = edges_[e].cap;
    return c;
  }

  std::vector<EdgeRecord> records() const {
    std::vector<EdgeRecord> out;
    out.reserve(edges_.size());
    for (const auto& e : edges_)
      out.push_back({e.id, labels_[e.tail], labels_[e.head], e.mode, e.t_free, e.cap, e.length, e.lanes});
    return out;
  }

 private:
  friend Network build_network(std::vector<EdgeRecord>, std::span<const std::string>);

  std::vector<Edge> edges_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::size_t> car_;
  std::vector<std::size_t> transit_;
};

inline std::string describe_edge(const EdgeRecord& r) {
  return "edge " + std::to_string(r.id) + " (" + r.tail + "->" + r.head + ")";
}

// Nodes are indexed in declaration order when `declared_nodes` is given,
// otherwise in order of first appearance along the id-sorted edge list.
inline Network build_network(std::vector<EdgeRecord> records, std::span<const std::string> declared_nodes) {
  if (records.empty()) throw InputError("network has no edges");
  std::sort(records.begin(), records.end(), [](const EdgeRecord& a, const EdgeRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].id == records[i - 1].id) throw InputError("duplicate edge id " + std::to_string(records[i].id));

  Network net;
  auto add_node = [&net](const std::string& label) {
    auto [it, fresh] = net.index_.emplace(label, net.labels_.size());
    if (fresh) net.labels_.push_back(label);
    return it->second;
  };
  for (const auto& label : declared_nodes) {
    if (net.index_.count(label)) throw InputError("duplicate node '" + label + "'");
    add_node(label);
  }

  for (const auto& r : records) {
    if (!(r.t_free > 0.0) || !std::isfinite(r.t_free))
      throw InputError(describe_edge(r) + ": t_free must be positive and finite");
    if (!(r.cap > 0.0) || !std::isfinite(r.cap))
      throw InputError(describe_edge(r) + ": cap must be positive and finite");
    if (r.tail == r.head) throw InputError(describe_edge(r) + ": tail equals head");
    if (r.length && (!(*r.length >= 0.0) || !std::isfinite(*r.length)))
      throw InputError(describe_edge(r) + ": length must be nonnegative");
    if (r.lanes && *r.lanes <= 0) throw InputError(describe_edge(r) + ": lanes must be positive");
    Edge e;
    e.id = r.id;
    if (!declared_nodes.empty()) {
      auto t = net.find_node(r.tail);
      auto h = net.find_node(r.head);
      if (!t || !h)
        throw InputError(describe_edge(r) + ": dangling node reference '" + (t ? r.head : r.tail) + "'");
      e.tail = *t;
      e.head = *h;
    } else {
      e.tail = add_node(r.tail);
      e.head = add_node(r.head);
    }
    e.mode = r.mode;
    e.t_free = r.t_free;
    e.cap = r.cap;
    e.length = r.length;
    e.lanes = r.lanes;
    net.edges_.push_back(e);
  }

  net.out_.assign(net.labels_.size(), {});
  for (std::size_t e = 0; e < net.edges_.size(); ++e) {
    net.out_[net.edges_[e].tail].push_back(e);
    (net.edges_[e].mode == Mode::car ? net.car_ : net.transit_).push_back(e);
  }
  return net;
}

struct ODPair {
  std::size_t origin = 0;
  std::size_t destination = 0;
  ModeScope scope = ModeScope::either;
};

struct OdDemand {
  ODPair od;
  double volume = 0.0;
};

inline void validate_od(const Network& net, const ODPair& od) {
  if (od.origin >= net.node_count() || od.destination >= net.node_count())
    throw InputError("OD pair references a node outside the network");
  if (od.origin == od.destination)
    throw InputError("OD pair has origin equal to destination (" + net.node_label(od.origin) + ")");
}

inline void check_costs(const Network& net, std::span<const double> t) {
  if (t.size() != net.edge_count())
    throw InputError("cost vector has " + std::to_string(t.size()) + " entries, network has " +
                     std::to_string(net.edge_count()) + " edges");
  for (std::size_t e = 0; e < t.size(); ++e)
    if (!(t[e] >= 0.0)) throw InputError("negative cost entry on edge " + std::to_string(net.edge(e).id));
}

inline constexpr std::size_t kNoEdge = static_cast<std::size_t>(-1);

struct ShortestPathTree {
  std::size_t origin = 0;
  std::vector<double> labels;
  std::vector<std::size_t> pred;  // kNoEdge for the origin and unreachable nodes
};

// Dijkstra. Among equal-cost candidates discovered before a node is settled,
// the smallest edge index (= smallest id) becomes its predecessor.
inline ShortestPathTree shortest_paths(const Network& net, std::span<const double> t, std::size_t origin,
                                       EdgeFilter filter = EdgeFilter::all) {
  check_costs(net, t);
  if (origin >= net.node_count()) throw InputError("origin outside the network");
  const std::size_t n = net.node_count();
  ShortestPathTree tree{origin, std::vector<double>(n, kInf), std::vector<std::size_t>(n, kNoEdge)};
  std::vector<char> settled(n, 0);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  tree.labels[origin] = 0.0;
  heap.emplace(0.0, origin);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (settled[u] || d > tree.labels[u]) continue;
    settled[u] = 1;
    for (std::size_t e : net.out_edges(u)) {
      if (!net.admits(e, filter)) continue;
      const std::size_t v = net.edge(e).head;
      if (settled[v]) continue;
      const double cand = d + t[e];
      if (cand < tree.labels[v]) {
        tree.labels[v] = cand;
        tree.pred[v] = e;
        heap.emplace(cand, v);
      } else if (cand == tree.labels[v] && e < tree.pred[v]) {
        tree.pred[v] = e;
      }
    }
  }
  return tree;
}

// Edge indices from the tree's origin to `dest`, in travel order. Empty if
// unreachable or dest is the origin.
inline std::vector<std::size_t> tree_path(const Network& net, const ShortestPathTree& tree, std::size_t dest) {
  std::vector<std::size_t> path;
  if (!std::isfinite(tree.labels.at(dest))) return path;
  for (std::size_t v = dest; v != tree.origin;) {
    const std::size_t e = tree.pred[v];
    path.push_back(e);
    v = net.edge(e).tail;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

struct Route {
  double cost = kInf;
  Mode mode = Mode::car;
  std::vector<std::size_t> edges;
};

// Caches one shortest-path tree per (origin, filter) for a fixed cost vector.
class RouteTable {
 public:
  RouteTable(const Network& net, std::span<const double> t) : net_(net), t_(t) { check_costs(net, t); }

  const ShortestPathTree& tree(std::size_t origin, EdgeFilter filter) {
    auto key = std::make_pair(origin, static_cast<int>(filter));
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, shortest_paths(net_, t_, origin, filter)).first;
    return it->second;
  }

  // Cheapest single-mode route; on a cost tie between modes the car wins.
  Route route(const ODPair& od) {
    Route best;
    auto consider = [&](Mode m) {
      const auto& tr = tree(od.origin, m == Mode::car ? EdgeFilter::car : EdgeFilter::transit);
      const double c = tr.labels[od.destination];
      if (c < best.cost) {
        best.cost = c;
        best.mode = m;
        best.edges = tree_path(net_, tr, od.destination);
      }
    };
    if (od.scope != ModeScope::transit) consider(Mode::car);
    if (od.scope != ModeScope::car) consider(Mode::transit);
    return best;
  }

  double cost(const ODPair& od) {
    double c = kInf;
    if (od.scope != ModeScope::transit) c = tree(od.origin, EdgeFilter::car).labels[od.destination];
    if (od.scope != ModeScope::car) c = std::min(c, tree(od.origin, EdgeFilter::transit).labels[od.destination]);
    return c;
  }

 private:
  const Network& net_;
  std::span<const double> t_;
  std::map<std::pair<std::size_t, int>, ShortestPathTree> cache_;
};

// T_w(t): cheapest admissible route cost, +inf when unreachable.
inline double min_cost(const Network& net, std::span<const double> t, const ODPair& od) {
  validate_od(net, od);
  return RouteTable(net, t).cost(od);
}

inline std::string describe_od(const Network& net, const ODPair& od) {
  return net.node_label(od.origin) + "->" + net.node_label(od.destination);
}

// Each demand goes wholly onto its tie-broken cheapest route.
inline FlowVector aon_assign(const Network& net, std::span<const double> t, std::span<const OdDemand> demands) {
  RouteTable table(net, t);
  FlowVector f(net.edge_count(), 0.0);
  for (const auto& dm : demands) {
    validate_od(net, dm.od);
    if (!(dm.volume >= 0.0)) throw InputError("negative demand on " + describe_od(net, dm.od));
    if (dm.volume == 0.0) continue;
    Route r = table.route(dm.od);
    if (!std::isfinite(r.cost)) throw InfeasibleError("OD " + describe_od(net, dm.od) + " is unreachable");
    for (std::size_t e : r.edges) f[e] += dm.volume;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Log-sum-exp path aggregation.

inline double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct SmoothedCost {
  double value = -kInf;  // T * psi(t / T); -inf when no admissible walk exists
  CostVector grad;       // d value / d t, entries in [-1, 0] on acyclic graphs
};

inline std::size_t default_hop_bound(const Network& net) {
  return net.node_count() > 1 ? net.node_count() - 1 : 1;
}

// T * ln sum over walks origin->dest with at most K edges of exp(-cost/T),
// by K rounds of log-domain value iteration and one reverse sweep.
inline SmoothedCost mode_aggregate(const Network& net, std::span<const double> t, std::size_t origin,
                                   std::size_t dest, EdgeFilter filter, double T, std::size_t K) {
  if (!(T > 0.0)) throw InputError("temperature must be positive");
  if (K < 1) throw InputError("hop bound must be at least 1");
  check_costs(net, t);
  const std::size_t n = net.node_count();
  const std::size_t m = net.edge_count();
  std::vector<std::vector<double>> la(K + 1, std::vector<double>(n, -kInf));
  la[0][origin] = 0.0;
  std::vector<double> peak(n);
  std::vector<double> acc(n);
  for (std::size_t k = 1; k <= K; ++k) {
    std::fill(peak.begin(), peak.end(), -kInf);
    for (std::size_t e = 0; e < m; ++e) {
      if (!net.admits(e, filter)) continue;
      const auto& ed = net.edge(e);
      const double x = la[k - 1][ed.tail] - t[e] / T;
      if (x > peak[ed.head]) peak[ed.head] = x;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t e = 0; e < m; ++e) {
      if (!net.admits(e, filter)) continue;
      const auto& ed = net.edge(e);
      if (peak[ed.head] == -kInf) continue;
      acc[ed.head] += std::exp(la[k - 1][ed.tail] - t[e] / T - peak[ed.head]);
    }
    for (std::size_t v = 0; v < n; ++v)
      if (peak[v] != -kInf) la[k][v] = peak[v] + std::log(acc[v]);
  }

  SmoothedCost out;
  out.grad.assign(m, 0.0);
  double psi = -kInf;
  for (std::size_t k = 1; k <= K; ++k) psi = log_add(psi, la[k][dest]);
  if (psi == -kInf) return out;
  out.value = T * psi;

  std::vector<double> adj(n, 0.0);
  std::vector<double> next(n, 0.0);
  for (std::size_t k = K; k >= 1; --k) {
    if (la[k][dest] != -kInf) adj[dest] += std::exp(la[k][dest] - psi);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t e = 0; e < m; ++e) {
      if (!net.admits(e, filter)) continue;
      const auto& ed = net.edge(e);
      if (adj[ed.head] == 0.0 || la[k - 1][ed.tail] == -kInf) continue;
      const double share = std::exp(la[k - 1][ed.tail] - t[e] / T - la[k][ed.head]);
      const double mass = adj[ed.head] * share;
      next[ed.tail] += mass;
      out.grad[e] -= mass;
    }
    adj.swap(next);
  }
  return out;
}

// Aggregate over the OD's admissible walks; for scope `either` the car and
// transit walk sets are joined in one log-sum-exp.
inline SmoothedCost smoothed_cost_grad(const Network& net, std::span<const double> t, const ODPair& od, double T,
                                       std::size_t K) {
  validate_od(net, od);
  if (od.scope == ModeScope::car) return mode_aggregate(net, t, od.origin, od.destination, EdgeFilter::car, T, K);
  if (od.scope == ModeScope::transit)
    return mode_aggregate(net, t, od.origin, od.destination, EdgeFilter::transit, T, K);
  SmoothedCost a = mode_aggregate(net, t, od.origin, od.destination, EdgeFilter::car, T, K);
  SmoothedCost b = mode_aggregate(net, t, od.origin, od.destination, EdgeFilter::transit, T, K);
  SmoothedCost out;
  out.value = T * log_add(a.value / T, b.value / T);
  out.grad.assign(net.edge_count(), 0.0);
  if (out.value == -kInf) return out;
  const double pa = a.value == -kInf ? 0.0 : std::exp((a.value - out.value) / T);
  const double pb = b.value == -kInf ? 0.0 : std::exp((b.value - out.value) / T);
  for (std::size_t e = 0; e < out.grad.size(); ++e) out.grad[e] = pa * a.grad[e] + pb * b.grad[e];
  return out;
}

inline double smoothed_cost(const Network& net, std::span<const double> t, const ODPair& od, double T, std::size_t K) {
  return smoothed_cost_grad(net, t, od, T, K).value;
}

inline CostVector smoothed_grad(const Network& net, std::span<const double> t, const ODPair& od, double T,
                                std::size_t K) {
  return smoothed_cost_grad(net, t, od, T, K).grad;
}

// ---------------------------------------------------------------------------
// Capacity from signal timing: sum_k share_k * lanes_k * q_max.

struct SignalPhase {
  double share = 1.0;
  double lanes = 1.0;
};

inline double estimate_capacity(std::span<const SignalPhase> phases, double q_max) {
  if (!(q_max > 0.0)) throw InputError("q_max must be positive");
  double total_share = 0.0;
  double cap = 0.0;
  for (const auto& p : phases) {
    if (p.share < 0.0 || p.share > 1.0) throw InputError("phase share outside [0, 1]");
    if (p.lanes < 0.0) throw InputError("negative lane count");
    total_share += p.share;
    cap += p.share * p.lanes * q_max;
  }
  if (total_share > 1.0 + 1e-12) throw InputError("phase shares sum to more than 1");
  return cap;
}

inline double estimate_capacity(double share, double lanes, double q_max) {
  const SignalPhase p{share, lanes};
  return estimate_capacity(std::span<const SignalPhase>(&p, 1), q_max);
}

// Simple paths origin->dest using admitted edges, in depth-first order over
// ascending edge ids. Throws once more than `limit` paths are found.
inline std::vector<std::vector<std::size_t>> enumerate_simple_paths(const Network& net, std::size_t origin,
                                                                    std::size_t dest, EdgeFilter filter,
                                                                    std::size_t limit) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> stack;
  std::vector<char> on_path(net.node_count(), 0);
  std::function<void(std::size_t)> dfs = [&](std::size_t u) {
    if (u == dest) {
      if (out.size() >= limit) throw InputError("path limit " + std::to_string(limit) + " exceeded");
      out.push_back(stack);
      return;
    }
    on_path[u] = 1;
    for (std::size_t e : net.out_edges(u)) {
      if (!net.admits(e, filter)) continue;
      const std::size_t v = net.edge(e).head;
      if (on_path[v]) continue;
      stack.push_back(e);
      dfs(v);
      stack.pop_back();
    }
    on_path[u] = 0;
  };
  dfs(origin);
  return out;
}

}  // namespace sdeq
