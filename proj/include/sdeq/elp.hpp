#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sdeq/detail/random.hpp"
#include "sdeq/error.hpp"
#include "sdeq/matrix.hpp"

namespace sdeq {

// min sum x_i ln x_i + <c, x> over the unit simplex subject to A x = b.
// `c` may be empty (pure entropy).
struct ELPProblem {
  std::size_t m = 0;
  Matrix A;  // m_c x m
  std::vector<double> b;
  std::vector<double> c;

  std::size_t constraints() const { return b.size(); }
};

inline void validate(const ELPProblem& p) {
  if (p.m == 0) throw InputError("ELP needs at least one variable");
  if (p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != p.m))
    throw InputError("ELP constraint matrix shape mismatch");
  if (!p.c.empty() && p.c.size() != p.m) throw InputError("ELP cost vector length mismatch");
}

struct ELPDual {
  double value = 0.0;
  std::vector<double> gradient;  // b - A x(lambda)
  std::vector<double> x;         // softmax(-c - A^T lambda)
};

// Dual function <lambda, b> + ln sum exp(-c - A^T lambda); the negated
// minimum equals the primal minimum.
inline ELPDual elp_dual_objective(const ELPProblem& p, const std::vector<double>& lambda) {
  validate(p);
  if (lambda.size() != p.constraints()) throw InputError("dual vector length mismatch");
  ELPDual out;
  std::vector<double> z(p.m, 0.0);
  for (std::size_t i = 0; i < p.m; ++i) {
    double s = p.c.empty() ? 0.0 : p.c[i];
    for (std::size_t k = 0; k < p.constraints(); ++k) s += p.A(k, i) * lambda[k];
    z[i] = -s;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  out.x.resize(p.m);
  for (std::size_t i = 0; i < p.m; ++i) {
    out.x[i] = std::exp(z[i] - zmax);
    sum += out.x[i];
  }
  for (double& v : out.x) v /= sum;
  out.value = zmax + std::log(sum);
  out.gradient.assign(p.constraints(), 0.0);
  for (std::size_t k = 0; k < p.constraints(); ++k) {
    double ax = 0.0;
    for (std::size_t i = 0; i < p.m; ++i) ax += p.A(k, i) * out.x[i];
    out.gradient[k] = p.b[k] - ax;
    out.value += lambda[k] * p.b[k];
  }
  return out;
}

// sum x ln x + <c, x>.
inline double elp_primal_objective(const ELPProblem& p, const std::vector<double>& x) {
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0) f += x[i] * std::log(x[i]);
    if (!p.c.empty()) f += p.c[i] * x[i];
  }
  return f;
}

struct ELPOptions {
  double eps_f = 1e-10;
  double eps_feas = 1e-10;
  std::size_t max_iter = 2000000;
  double perturb_b = 0.0;  // > 0: shift b by this much toward A * softmax(-c)
  std::vector<double> initial_lambda;
};

struct ELPReport {
  std::size_t iterations = 0;
  std::size_t restarts = 0;
  double residual = 0.0;  // ||A x - b||_2
  double gap = 0.0;       // |<lambda, b - A x>|, bounds |f(x) - f_min| from above
  double delta = 0.0;     // final regularization weight
};

struct ELPResult {
  std::vector<double> x;
  std::vector<double> lambda;
  double objective = 0.0;
  ELPReport report;
};

namespace detail {

inline double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// Regularized dual fast gradient: minimize the dual plus (delta/2)|lambda|^2
// with accelerated steps and gradient-based momentum restarts; delta starts
// at L / R0^2 with R0 = 1 and halves whenever the regularized problem is
// solved but the original tolerances are not yet met.
inline ELPResult elp_solve(ELPProblem p, const ELPOptions& opt = {}) {
  validate(p);
  const std::size_t mc = p.constraints();
  if (opt.perturb_b > 0.0 && mc > 0) {
    ELPDual u = elp_dual_objective(p, std::vector<double>(mc, 0.0));
    std::vector<double> dir(mc);
    for (std::size_t k = 0; k < mc; ++k) dir[k] = -u.gradient[k];  // A u - b
    const double len = detail::norm2(dir);
    const double step = len > opt.perturb_b ? opt.perturb_b / len : 1.0;
    for (std::size_t k = 0; k < mc; ++k) p.b[k] += step * dir[k];
  }
  double L = 0.0;
  for (std::size_t i = 0; i < p.m; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < mc; ++k) s += p.A(k, i) * p.A(k, i);
    L = std::max(L, s);
  }
  ELPResult out;
  out.lambda = opt.initial_lambda.size() == mc ? opt.initial_lambda : std::vector<double>(mc, 0.0);
  auto finish = [&](const ELPDual& d) {
    out.x = d.x;
    out.objective = elp_primal_objective(p, d.x);
    out.report.residual = detail::norm2(d.gradient);
    out.report.gap = std::abs(detail::dot(out.lambda, d.gradient));
  };
  if (mc == 0 || L == 0.0) {
    ELPDual d = elp_dual_objective(p, out.lambda);
    finish(d);
    if (out.report.residual > opt.eps_feas) throw InfeasibleError("ELP constraints cannot hold: A = 0 but b != 0");
    return out;
  }

  double delta = L;
  std::vector<double> y = out.lambda;
  std::vector<double> prev = out.lambda;
  std::vector<double> next(mc);
  double momentum_t = 1.0;
  double last_residual = std::numeric_limits<double>::infinity();
  std::size_t plateau = 0;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    ELPDual at = elp_dual_objective(p, out.lambda);
    const double residual = detail::norm2(at.gradient);
    const double gap = std::abs(detail::dot(out.lambda, at.gradient));
    if (residual <= opt.eps_feas && gap <= opt.eps_f) {
      out.report.iterations = it;
      out.report.delta = delta;
      finish(at);
      return out;
    }
    // Regularized gradient norm small: this delta is done, shrink it.
    double reg = 0.0;
    for (std::size_t k = 0; k < mc; ++k) {
      const double g = at.gradient[k] + delta * out.lambda[k];
      reg += g * g;
    }
    // the target covers both stopping tests: residual and |<lambda, residual>|
    const double lam = detail::norm2(out.lambda);
    const double target = std::min(opt.eps_feas, opt.eps_f / (1.0 + lam));
    if (std::sqrt(reg) <= 0.25 * std::max(target, delta * 1e-3 * (1.0 + lam))) {
      if (residual >= 0.999 * last_residual && delta < 1e-8 * L) {
        if (++plateau >= 8)
          throw InfeasibleError("ELP residual stalled at " + std::to_string(residual) +
                                " while the regularized dual converged");
      } else {
        plateau = 0;
      }
      last_residual = residual;
      delta *= 0.5;
      ++out.report.restarts;
      y = out.lambda;
      prev = out.lambda;
      momentum_t = 1.0;
      continue;
    }
    ELPDual ay = elp_dual_objective(p, y);
    const double step = 1.0 / (L + delta);
    for (std::size_t k = 0; k < mc; ++k) next[k] = y[k] - step * (ay.gradient[k] + delta * y[k]);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
    // Restart momentum when the step opposes the gradient at y.
    double cosine = 0.0;
    for (std::size_t k = 0; k < mc; ++k) cosine += (ay.gradient[k] + delta * y[k]) * (next[k] - out.lambda[k]);
    if (cosine > 0.0) {
      momentum_t = 1.0;
      y = out.lambda;
      continue;
    }
    const double beta = (momentum_t - 1.0) / t_next;
    prev = out.lambda;
    out.lambda = next;
    for (std::size_t k = 0; k < mc; ++k) y[k] = next[k] + beta * (next[k] - prev[k]);
    momentum_t = t_next;
  }
  throw NonConvergenceError("ELP solver exhausted " + std::to_string(opt.max_iter) + " iterations");
}

// ---------------------------------------------------------------------------
// Apartment-exchange chain on correspondence counts.

struct ExchangeChainConfig {
  std::size_t n = 0;
  std::int64_t N = 0;
  double rate = 1.0;  // lambda
  double beta = 1.0;
  Matrix T;           // n x n costs
  std::vector<std::int64_t> initial;  // row-major n x n counts
  std::uint64_t steps = 0;            // events; 0 = 10 N ln N
  std::uint64_t seed = 1;
  std::uint64_t record_every = 0;     // 0 = about 200 snapshots
  double burn_in = 0.5;               // fraction of events excluded from the mean
};

struct ExchangeMove {
  std::size_t k = 0, m = 0, p = 0, q = 0;  // agents at (k,m) and (p,q) swap to (p,m) and (k,q)
};

struct ExchangeChainResult {
  std::vector<std::vector<std::int64_t>> trajectory;  // recorded count snapshots
  std::vector<double> times;
  std::vector<double> mean;  // time-weighted mean counts after burn-in
  std::vector<std::int64_t> final_state;
  std::uint64_t events = 0;
};

inline std::uint64_t default_horizon(std::int64_t N) {
  const double n = static_cast<double>(N);
  return static_cast<std::uint64_t>(std::ceil(10.0 * n * std::log(std::max(n, 2.0))));
}

namespace detail {

inline void check_chain(const ExchangeChainConfig& c) {
  if (c.n == 0 || c.T.rows() != c.n || c.T.cols() != c.n) throw InputError("chain cost matrix shape mismatch");
  if (c.N < static_cast<std::int64_t>(c.n)) throw InputError("chain needs at least n agents");
  if (!(c.rate > 0.0) || !(c.beta >= 0.0)) throw InputError("chain rates must be positive");
}

inline void check_state(const ExchangeChainConfig& c, const std::vector<std::int64_t>& s) {
  if (s.size() != c.n * c.n) throw InputError("state has wrong size");
  std::int64_t total = 0;
  for (auto x : s) {
    if (x < 0) throw InputError("negative count in state");
    total += x;
  }
  if (total != c.N) throw InputError("state counts sum to " + std::to_string(total) + ", expected N = " +
                                     std::to_string(c.N));
}

}  // namespace detail

inline double exchange_rate(const ExchangeChainConfig& c, std::size_t k, std::size_t m, std::size_t p, std::size_t q) {
  return c.rate / static_cast<double>(c.N) *
         std::exp(0.5 * c.beta * (c.T(k, m) + c.T(p, q) - c.T(p, m) - c.T(k, q)));
}

// Gillespie simulation. Marginals are conserved by construction.
inline ExchangeChainResult exchange_chain_simulate(const ExchangeChainConfig& c) {
  detail::check_chain(c);
  detail::check_state(c, c.initial);
  const std::size_t n = c.n;
  struct Pair {
    std::size_t a, b, a2, b2;
    double base;
  };
  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < n * n; ++a)
    for (std::size_t b = a + 1; b < n * n; ++b) {
      const std::size_t k = a / n, m = a % n, p = b / n, q = b % n;
      if (k == p || m == q) continue;
      pairs.push_back({a, b, p * n + m, k * n + q, exchange_rate(c, k, m, p, q)});
    }
  const std::uint64_t steps = c.steps ? c.steps : default_horizon(c.N);
  const std::uint64_t every = c.record_every ? c.record_every : std::max<std::uint64_t>(1, steps / 200);
  const std::uint64_t burn = static_cast<std::uint64_t>(c.burn_in * static_cast<double>(steps));

  ExchangeChainResult out;
  std::vector<std::int64_t> s = c.initial;
  out.mean.assign(n * n, 0.0);
  std::mt19937_64 rng(c.seed);
  std::vector<double> rates(pairs.size());
  double clock = 0.0;
  double weight = 0.0;
  out.trajectory.push_back(s);
  out.times.push_back(0.0);
  for (std::uint64_t ev = 0; ev < steps; ++ev) {
    double total = 0.0;
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      rates[r] = static_cast<double>(s[pairs[r].a]) * static_cast<double>(s[pairs[r].b]) * pairs[r].base;
      total += rates[r];
    }
    if (total <= 0.0) break;
    const double hold = -std::log1p(-detail::uniform01(rng)) / total;
    if (ev >= burn) {
      for (std::size_t i = 0; i < s.size(); ++i) out.mean[i] += hold * static_cast<double>(s[i]);
      weight += hold;
    }
    clock += hold;
    double pick = detail::uniform01(rng) * total;
    std::size_t r = 0;
    while (r + 1 < pairs.size() && pick >= rates[r]) pick -= rates[r++];
    while (rates[r] == 0.0) --r;  // guard against round-off landing on an empty slot
    --s[pairs[r].a];
    --s[pairs[r].b];
    ++s[pairs[r].a2];
    ++s[pairs[r].b2];
    ++out.events;
    if (out.events % every == 0) {
      out.trajectory.push_back(s);
      out.times.push_back(clock);
    }
  }
  if (weight > 0.0) {
    for (double& v : out.mean) v /= weight;
  } else {
    for (std::size_t i = 0; i < s.size(); ++i) out.mean[i] = static_cast<double>(s[i]);
  }
  out.final_state = s;
  return out;
}

// ln of the unnormalized product-Poisson weight prod exp(-beta T d) / d!.
inline double stationary_log_weight(const ExchangeChainConfig& c, const std::vector<std::int64_t>& s) {
  double w = 0.0;
  for (std::size_t i = 0; i < c.n; ++i)
    for (std::size_t j = 0; j < c.n; ++j) {
      const double d = static_cast<double>(s[i * c.n + j]);
      w += -c.beta * c.T(i, j) * d - std::lgamma(d + 1.0);
    }
  return w;
}

struct BalanceTerms {
  double log_forward = 0.0;   // ln[(d_km+1)(d_pq+1) p(d') rate(k,m;p,q)]
  double log_backward = 0.0;  // ln[d_pm d_kq p(d) rate(p,m;k,q)]
  double residual = 0.0;      // |forward / backward - 1|
};

// Both sides of the detailed-balance identity between state d and
// d' = d + e_km + e_pq - e_pm - e_kq.
inline BalanceTerms detailed_balance_terms(const ExchangeChainConfig& c, const std::vector<std::int64_t>& s,
                                           const ExchangeMove& mv) {
  detail::check_chain(c);
  detail::check_state(c, s);
  const std::size_t n = c.n;
  if (mv.k >= n || mv.m >= n || mv.p >= n || mv.q >= n) throw InputError("move index out of range");
  if (mv.k == mv.p || mv.m == mv.q) throw InputError("move must involve distinct homes and workplaces");
  const std::size_t km = mv.k * n + mv.m, pq = mv.p * n + mv.q, pm = mv.p * n + mv.m, kq = mv.k * n + mv.q;
  if (s[pm] < 1 || s[kq] < 1) throw InputError("move needs an agent at (p,m) and at (k,q)");
  std::vector<std::int64_t> s2 = s;
  ++s2[km];
  ++s2[pq];
  --s2[pm];
  --s2[kq];
  BalanceTerms bt;
  bt.log_forward = std::log(static_cast<double>(s[km] + 1) * static_cast<double>(s[pq] + 1)) +
                   stationary_log_weight(c, s2) + std::log(exchange_rate(c, mv.k, mv.m, mv.p, mv.q));
  bt.log_backward = std::log(static_cast<double>(s[pm]) * static_cast<double>(s[kq])) +
                    stationary_log_weight(c, s) + std::log(exchange_rate(c, mv.p, mv.m, mv.k, mv.q));
  bt.residual = std::abs(std::expm1(bt.log_forward - bt.log_backward));
  return bt;
}

inline double detailed_balance_check(const ExchangeChainConfig& c, const std::vector<std::int64_t>& s,
                                     const ExchangeMove& mv) {
  return detailed_balance_terms(c, s, mv).residual;
}

// Initial counts with the given integer marginals (north-west corner rule).
inline std::vector<std::int64_t> northwest_corner(const std::vector<std::int64_t>& L, const std::vector<std::int64_t>& W) {
  const std::size_t n = L.size();
  if (W.size() != n) throw InputError("marginal length mismatch");
  std::int64_t sl = 0, sw = 0;
  for (auto x : L) sl += x;
  for (auto x : W) sw += x;
  if (sl != sw) throw InputError("integer marginals differ: " + std::to_string(sl) + " vs " + std::to_string(sw));
  std::vector<std::int64_t> s(n * n, 0);
  std::vector<std::int64_t> r = L, col = W;
  std::size_t i = 0, j = 0;
  while (i < n && j < n) {
    const std::int64_t x = std::min(r[i], col[j]);
    s[i * n + j] += x;
    r[i] -= x;
    col[j] -= x;
    if (r[i] == 0) ++i;
    else ++j;
  }
  return s;
}

}  // namespace sdeq
