#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdeq/error.hpp"
#include "sdeq/matrix.hpp"
#include "sdeq/network.hpp"

namespace sdeq {

// Zone marginals, normalized to sum to one, and where each zone attaches to
// the network. Trips leave from `origin_nodes[i]` and arrive at
// `dest_nodes[j]`; the two coincide unless a zone says otherwise.
struct Zones {
  std::vector<std::string> ids;
  std::vector<double> l;
  std::vector<double> w;
  std::vector<std::size_t> origin_nodes;
  std::vector<std::size_t> dest_nodes;
  double total_trips = 1.0;

  std::size_t size() const { return l.size(); }
};

inline void validate_marginals(const std::vector<double>& l, const std::vector<double>& w, double tol = 1e-12) {
  if (l.empty() || l.size() != w.size()) throw InputError("marginals must be nonempty and of equal length");
  double sl = 0.0;
  double sw = 0.0;
  for (double x : l) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InputError("departure marginal must be finite and nonnegative");
    sl += x;
  }
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InputError("arrival marginal must be finite and nonnegative");
    sw += x;
  }
  if (std::abs(sl - 1.0) > tol || std::abs(sw - 1.0) > tol)
    throw InputError("marginals must sum to 1 (departures " + std::to_string(sl) + ", arrivals " +
                     std::to_string(sw) + ")");
}

using Deterrence = std::function<double(double)>;

struct BalanceOptions {
  double tol = 1e-12;
  std::size_t max_iter = 100000;
  Deterrence deterrence;              // empty: exp(-beta * C)
  std::vector<double> warm_log_b;     // optional starting ln B
};

struct BalanceResult {
  std::vector<double> A;
  std::vector<double> B;
  std::vector<double> log_a;
  std::vector<double> log_b;
  Matrix d;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||row sums - l||_1 + ||col sums - w||_1
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Max flow on the bipartite support graph; the marginals are compatible
// with the support iff the flow saturates every positive marginal.
inline bool support_admits(const std::vector<double>& l, const std::vector<double>& w, const Matrix& lf) {
  const std::size_t n = l.size();
  const std::size_t m = w.size();
  const std::size_t V = n + m + 2;
  const std::size_t s = n + m;
  const std::size_t t = n + m + 1;
  std::vector<std::vector<double>> cap(V, std::vector<double>(V, 0.0));
  double big = 0.0;
  for (double x : l) big += x;
  big = 2.0 * big + 1.0;
  for (std::size_t i = 0; i < n; ++i) cap[s][i] = l[i];
  for (std::size_t j = 0; j < m; ++j) cap[n + j][t] = w[j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (lf(i, j) > -kInf) cap[i][n + j] = big;
  double flow = 0.0;
  const double eps = 1e-14;
  for (;;) {
    std::vector<std::size_t> prev(V, V);
    std::vector<std::size_t> queue{s};
    prev[s] = s;
    for (std::size_t q = 0; q < queue.size() && prev[t] == V; ++q) {
      const std::size_t u = queue[q];
      for (std::size_t v = 0; v < V; ++v)
        if (prev[v] == V && cap[u][v] > eps) {
          prev[v] = u;
          queue.push_back(v);
        }
    }
    if (prev[t] == V) break;
    double push = kInf;
    for (std::size_t v = t; v != s; v = prev[v]) push = std::min(push, cap[prev[v]][v]);
    for (std::size_t v = t; v != s; v = prev[v]) {
      cap[prev[v]][v] -= push;
      cap[v][prev[v]] += push;
    }
    flow += push;
  }
  double total = 0.0;
  for (double x : l) total += x;
  return flow >= total - 1e-10;
}

}  // namespace detail

// Doubly constrained gravity model by alternating row/column scaling:
// d_ij = A_i l_i B_j w_j f(C_ij). Runs in the log domain; rows are updated
// before columns in every sweep. The gauge is fixed by A = 1 on the first
// zone with positive departures.
inline BalanceResult gravity_balance(const std::vector<double>& l, const std::vector<double>& w, const Matrix& C,
                                     double beta, const BalanceOptions& opt = {}) {
  validate_marginals(l, w, 1e-9);
  const std::size_t n = l.size();
  if (C.rows() != n || C.cols() != n) throw InputError("cost matrix shape does not match the zones");
  Matrix lf(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double c = C(i, j);
      double v;
      if (opt.deterrence) {
        const double f = std::isinf(c) && c > 0 ? 0.0 : opt.deterrence(c);
        if (!(f >= 0.0)) throw InputError("deterrence must be nonnegative");
        v = f > 0.0 ? std::log(f) : -kInf;
      } else {
        v = std::isinf(c) && c > 0 ? -kInf : -beta * c;
      }
      if (std::isnan(v)) throw InputError("cost matrix has NaN entries");
      lf(i, j) = v;
    }
  for (std::size_t i = 0; i < n; ++i) {
    bool row_ok = l[i] == 0.0;
    bool col_ok = w[i] == 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row_ok = row_ok || (lf(i, j) > -kInf && w[j] > 0.0);
      col_ok = col_ok || (lf(j, i) > -kInf && l[j] > 0.0);
    }
    if (!row_ok) throw InputError("zone " + std::to_string(i) + " has departures but no reachable destination");
    if (!col_ok) throw InputError("zone " + std::to_string(i) + " has arrivals but no reachable origin");
  }
  if (!detail::support_admits(l, w, lf)) throw InputError("marginals are incompatible with the cost support");

  std::vector<double> ll(n), lw(n);
  for (std::size_t i = 0; i < n; ++i) {
    ll[i] = l[i] > 0.0 ? std::log(l[i]) : -kInf;
    lw[i] = w[i] > 0.0 ? std::log(w[i]) : -kInf;
  }
  BalanceResult out;
  out.log_a.assign(n, 0.0);
  out.log_b = opt.warm_log_b.size() == n ? opt.warm_log_b : std::vector<double>(n, 0.0);
  std::vector<double> buf(n);
  out.d = Matrix(n, n);
  auto fill_d = [&] {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double x = out.log_a[i] + ll[i] + out.log_b[j] + lw[j] + lf(i, j);
        out.d(i, j) = x == -kInf ? 0.0 : std::exp(x);
      }
  };
  for (std::size_t it = 1;; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) buf[j] = out.log_b[j] + lw[j] + lf(i, j);
      const double s = detail::log_sum_exp(buf);
      out.log_a[i] = s == -kInf ? 0.0 : -s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = out.log_a[i] + ll[i] + lf(i, j);
      const double s = detail::log_sum_exp(buf);
      out.log_b[j] = s == -kInf ? 0.0 : -s;
    }
    fill_d();
    const auto rs = out.d.row_sums();
    const auto cs = out.d.col_sums();
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += std::abs(rs[i] - l[i]) + std::abs(cs[i] - w[i]);
    out.residual = res;
    out.iterations = it;
    if (res <= opt.tol) break;
    if (it >= opt.max_iter)
      throw NonConvergenceError("balancing did not reach residual " + std::to_string(opt.tol) + " in " +
                                std::to_string(opt.max_iter) + " sweeps (residual " + std::to_string(res) + ")");
  }
  std::size_t g = 0;
  while (g < n && l[g] == 0.0) ++g;
  const double shift = out.log_a[g];
  for (std::size_t i = 0; i < n; ++i) {
    out.log_a[i] -= shift;
    out.log_b[i] += shift;
  }
  out.A.resize(n);
  out.B.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.A[i] = std::exp(out.log_a[i]);
    out.B[i] = std::exp(out.log_b[i]);
  }
  return out;
}

// -sum d ln d - beta * sum d T, with 0 ln 0 = 0.
inline double entropy_objective(const Matrix& d, const Matrix& T, double beta) {
  if (d.rows() != T.rows() || d.cols() != T.cols()) throw InputError("shape mismatch");
  double h = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j) {
      const double x = d(i, j);
      if (x < 0.0) throw InputError("negative correspondence entry");
      if (x > 0.0) h -= x * std::log(x) + beta * x * T(i, j);
    }
  return h;
}

inline double mean_cost(const Matrix& d, const Matrix& C) {
  if (d.rows() != C.rows() || d.cols() != C.cols()) throw InputError("shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j)
      if (d(i, j) != 0.0) s += d(i, j) * C(i, j);
  return s;
}

// Closed comparison: equal mean costs up to exactly tol pass.
inline bool ko_check(const Matrix& observed, const Matrix& model, const Matrix& C, double tol) {
  return std::abs(mean_cost(observed, C) - mean_cost(model, C)) <= tol;
}

struct HymanOptions {
  double tol = 1e-8;
  std::size_t max_iter = 50;
  double beta_min = 1e-10;
  double beta_max = 1e6;
};

struct HymanResult {
  double beta = 0.0;
  double cost = 0.0;
  std::size_t evaluations = 0;
  std::vector<std::pair<double, double>> history;  // (beta, C(beta))
};

// One secant update from (beta_prev, c_prev), (beta_cur, c_cur).
inline double hyman_secant_step(double beta_prev, double c_prev, double beta_cur, double c_cur, double c_star) {
  if (c_cur == c_prev) throw NonConvergenceError("secant stalled: equal mean costs at consecutive iterates");
  return ((c_star - c_prev) * beta_cur + (c_cur - c_star) * beta_prev) / (c_cur - c_prev);
}

// Secant calibration of the deterrence parameter against an observed mean
// trip cost. The model is opaque: any beta -> mean cost closure.
inline HymanResult hyman_calibrate(const std::function<double(double)>& model, double c_star,
                                   const HymanOptions& opt = {}) {
  if (!(c_star > 0.0) || !std::isfinite(c_star)) throw InputError("target mean cost must be positive");
  HymanResult out;
  auto eval = [&](double beta) {
    if (!(beta >= opt.beta_min && beta <= opt.beta_max))
      throw NonConvergenceError("beta " + std::to_string(beta) + " left the bracket [" +
                                std::to_string(opt.beta_min) + ", " + std::to_string(opt.beta_max) + "]");
    const double c = model(beta);
    if (!std::isfinite(c)) throw NonConvergenceError("model returned a non-finite mean cost");
    out.history.emplace_back(beta, c);
    ++out.evaluations;
    return c;
  };
  auto done = [&](double beta, double c) {
    out.beta = beta;
    out.cost = c;
    return std::abs(c - c_star) <= opt.tol;
  };
  double b_prev = 1.0 / c_star;
  double c_prev = eval(b_prev);
  if (done(b_prev, c_prev)) return out;
  double b_cur = b_prev * c_prev / c_star;
  double c_cur = eval(b_cur);
  if (done(b_cur, c_cur)) return out;
  while (out.evaluations < opt.max_iter) {
    const double b_next = hyman_secant_step(b_prev, c_prev, b_cur, c_cur, c_star);
    const double c_next = eval(b_next);
    b_prev = b_cur;
    c_prev = c_cur;
    b_cur = b_next;
    c_cur = c_next;
    if (done(b_cur, c_cur)) return out;
  }
  throw NonConvergenceError("calibration did not reach tolerance in " + std::to_string(opt.max_iter) +
                            " model evaluations");
}

}  // namespace sdeq
