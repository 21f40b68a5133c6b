#pragma once

// Dense two-phase tableau simplex with Bland's rule, for the small path-flow
// LPs used as an exact oracle:  min c.x  s.t.  A_eq x = b_eq,  A_le x <= b_le,
// x >= 0, with b_eq, b_le >= 0.

#include <cmath>
#include <cstddef>
#include <vector>

namespace sdeq::detail {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> dual_eq;  // multipliers of the equality rows
  std::vector<double> dual_le;  // multipliers of the <= rows (<= 0 for a minimization)
};

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : r_(rows), c_(cols), a_((rows + 1) * (cols + 1), 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a_[i * (c_ + 1) + j]; }
  double& rhs(std::size_t i) { return a_[i * (c_ + 1) + c_]; }
  double& cost(std::size_t j) { return a_[r_ * (c_ + 1) + j]; }
  double& value() { return a_[r_ * (c_ + 1) + c_]; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double inv = 1.0 / at(pr, pc);
    for (std::size_t j = 0; j <= c_; ++j) at(pr, j) *= inv;
    at(pr, pc) = 1.0;
    for (std::size_t i = 0; i <= r_; ++i) {
      if (i == pr) continue;
      const double k = at(i, pc);
      if (k == 0.0) continue;
      for (std::size_t j = 0; j <= c_; ++j) at(i, j) -= k * at(pr, j);
      at(i, pc) = 0.0;
    }
  }

  std::size_t rows() const { return r_; }
  std::size_t cols() const { return c_; }

 private:
  std::size_t r_, c_;
  std::vector<double> a_;
};

// Bland's rule: entering = lowest index with negative reduced cost.
// Returns false when unbounded.
inline bool run_simplex(Tableau& tb, std::vector<std::size_t>& basis, const std::vector<char>& allowed, double eps) {
  for (;;) {
    std::size_t enter = tb.cols();
    for (std::size_t j = 0; j < tb.cols(); ++j)
      if (allowed[j] && tb.cost(j) < -eps) {
        enter = j;
        break;
      }
    if (enter == tb.cols()) return true;
    std::size_t leave = tb.rows();
    double best = 0.0;
    for (std::size_t i = 0; i < tb.rows(); ++i) {
      const double a = tb.at(i, enter);
      if (a <= eps) continue;
      const double ratio = tb.rhs(i) / a;
      if (leave == tb.rows() || ratio < best - eps || (std::abs(ratio - best) <= eps && basis[i] < basis[leave])) {
        best = ratio;
        leave = i;
      }
    }
    if (leave == tb.rows()) return false;
    tb.pivot(leave, enter);
    basis[leave] = enter;
  }
}

inline LpSolution solve_lp(const std::vector<double>& c, const std::vector<std::vector<double>>& A_eq,
                           const std::vector<double>& b_eq, const std::vector<std::vector<double>>& A_le,
                           const std::vector<double>& b_le) {
  const std::size_t n = c.size();
  const std::size_t me = b_eq.size();
  const std::size_t ml = b_le.size();
  const std::size_t m = me + ml;
  // columns: x (n), slacks (ml), artificials (me)
  const std::size_t cols = n + ml + me;
  Tableau tb(m, cols);
  std::vector<std::size_t> basis(m);
  double scale = 1.0;
  for (double v : b_eq) scale = std::max(scale, std::abs(v));
  for (double v : b_le) scale = std::max(scale, std::abs(v));
  const double eps = 1e-11;

  for (std::size_t i = 0; i < me; ++i) {
    for (std::size_t j = 0; j < n; ++j) tb.at(i, j) = A_eq[i][j];
    tb.at(i, n + ml + i) = 1.0;
    tb.rhs(i) = b_eq[i];
    basis[i] = n + ml + i;
  }
  for (std::size_t k = 0; k < ml; ++k) {
    const std::size_t i = me + k;
    for (std::size_t j = 0; j < n; ++j) tb.at(i, j) = A_le[k][j];
    tb.at(i, n + k) = 1.0;
    tb.rhs(i) = b_le[k];
    basis[i] = n + k;
  }

  // phase 1: minimize the sum of artificials
  for (std::size_t j = 0; j < cols; ++j) tb.cost(j) = 0.0;
  for (std::size_t i = 0; i < me; ++i) {
    for (std::size_t j = 0; j <= cols; ++j) {
      if (j == cols) tb.value() -= tb.rhs(i);
      else if (j < n + ml) tb.cost(j) -= tb.at(i, j);
    }
  }
  std::vector<char> allowed(cols, 1);
  run_simplex(tb, basis, allowed, eps);
  LpSolution out;
  if (-tb.value() > 1e-9 * scale) return out;

  // drive artificials out of the basis where possible
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < n + ml) continue;
    for (std::size_t j = 0; j < n + ml; ++j)
      if (std::abs(tb.at(i, j)) > 1e-9) {
        tb.pivot(i, j);
        basis[i] = j;
        break;
      }
  }
  for (std::size_t j = n + ml; j < cols; ++j) allowed[j] = 0;

  // phase 2
  for (std::size_t j = 0; j < cols; ++j) tb.cost(j) = j < n ? c[j] : 0.0;
  tb.value() = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double cb = basis[i] < n ? c[basis[i]] : 0.0;
    if (cb == 0.0) continue;
    for (std::size_t j = 0; j < cols; ++j) tb.cost(j) -= cb * tb.at(i, j);
    tb.value() -= cb * tb.rhs(i);
  }
  if (!run_simplex(tb, basis, allowed, eps)) {
    out.status = LpStatus::unbounded;
    return out;
  }
  out.status = LpStatus::optimal;
  out.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) out.x[basis[i]] = std::max(tb.rhs(i), 0.0);
  out.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) out.objective += c[j] * out.x[j];
  // y = c_B B^-1; for a unit column e_i with zero cost the reduced cost is -y_i
  out.dual_eq.resize(me);
  for (std::size_t i = 0; i < me; ++i) out.dual_eq[i] = -tb.cost(n + ml + i);
  out.dual_le.resize(ml);
  for (std::size_t k = 0; k < ml; ++k) out.dual_le[k] = -tb.cost(n + k);
  return out;
}

}  // namespace sdeq::detail
