#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sdeq/demand.hpp"

using namespace sdeq;

namespace {

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = u(rng));
  for (auto& x : v) x /= s;
  return v;
}

Matrix random_costs(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  Matrix C(n, n);
  for (auto& x : C.data()) x = u(rng);
  return C;
}

double marginal_residual(const Matrix& d, const std::vector<double>& l, const std::vector<double>& w) {
  const auto rs = d.row_sums();
  const auto cs = d.col_sums();
  double r = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) r += std::abs(rs[i] - l[i]) + std::abs(cs[i] - w[i]);
  return r;
}

}  // namespace

TEST(GravityBalance, SymmetricInstanceIsUniform) {
  const Matrix C(2, 2, 3.0);
  const auto r = gravity_balance({0.5, 0.5}, {0.5, 0.5}, C, 1.0);
  for (double x : r.d.data()) EXPECT_NEAR(x, 0.25, 1e-14);
}

TEST(GravityBalance, RandomInstancesMeetMarginals) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto l = random_simplex(rng, 3), w = random_simplex(rng, 3);
    const Matrix C = random_costs(rng, 3);
    const auto r = gravity_balance(l, w, C, 1.3);
    EXPECT_LE(marginal_residual(r.d, l, w), 1e-10);
    EXPECT_LE(r.residual, 1e-10);
    for (double x : r.d.data()) EXPECT_GT(x, 0.0);
    EXPECT_DOUBLE_EQ(r.A[0], 1.0);
    // d_ij = A_i l_i B_j w_j exp(-beta C_ij)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        EXPECT_NEAR(r.d(i, j), r.A[i] * l[i] * r.B[j] * w[j] * std::exp(-1.3 * C(i, j)), 1e-14);
  }
}

TEST(GravityBalance, LocallyOptimalForEntropyObjective) {
  std::mt19937_64 rng(9);
  const auto l = random_simplex(rng, 3), w = random_simplex(rng, 3);
  const Matrix C = random_costs(rng, 3);
  const double beta = 0.7;
  const auto r = gravity_balance(l, w, C, beta);
  const double best = entropy_objective(r.d, C, beta);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int rep = 0; rep < 200; ++rep) {
    int i = pick(rng), k = pick(rng), j = pick(rng), q = pick(rng);
    if (i == k || j == q) continue;
    Matrix d = r.d;
    const double eps = 1e-3 * std::min({d(i, q), d(k, j)});
    // a 2x2 cycle keeps both marginals
    d(i, j) += eps;
    d(k, q) += eps;
    d(i, q) -= eps;
    d(k, j) -= eps;
    EXPECT_LE(entropy_objective(d, C, beta), best + 1e-15);
  }
}

TEST(GravityBalance, CustomDeterrenceAndInfiniteCosts) {
  Matrix C(2, 2, 1.0);
  C(0, 1) = kInf;
  BalanceOptions opt;
  opt.deterrence = [](double c) { return 1.0 / (1.0 + c * c); };
  const auto r = gravity_balance({0.5, 0.5}, {0.75, 0.25}, C, 1.0, opt);
  EXPECT_EQ(r.d(0, 1), 0.0);
  EXPECT_LE(marginal_residual(r.d, {0.5, 0.5}, {0.75, 0.25}), 1e-10);
}

TEST(GravityBalance, Errors) {
  Matrix C(2, 2, 1.0);
  C(0, 0) = kInf;
  C(0, 1) = kInf;
  EXPECT_THROW(gravity_balance({0.5, 0.5}, {0.5, 0.5}, C, 1.0), InputError);
  EXPECT_THROW(gravity_balance({0.5, 0.6}, {0.5, 0.5}, Matrix(2, 2, 1.0), 1.0), InputError);
  BalanceOptions opt;
  opt.max_iter = 1;
  opt.tol = 0.0;
  std::mt19937_64 rng(1);
  EXPECT_THROW(gravity_balance(random_simplex(rng, 3), random_simplex(rng, 3), random_costs(rng, 3), 5.0, opt),
               NonConvergenceError);
}

TEST(EntropyObjective, Examples) {
  EXPECT_NEAR(entropy_objective(Matrix(2, 2, 0.25), Matrix(2, 2, 0.0), 1.0), std::log(4.0), 1e-15);
  Matrix d(2, 2, 0.0), T(2, 2, 0.0);
  d(0, 0) = 1.0;
  T(0, 0) = 5.0;
  EXPECT_DOUBLE_EQ(entropy_objective(d, T, 2.0), -10.0);
  d(1, 1) = -0.1;
  EXPECT_THROW(entropy_objective(d, T, 2.0), InputError);
}

TEST(MeanCost, Examples) {
  Matrix d(2, 2, 0.0), C = Matrix::from_rows({{7, 2}, {3, 4}});
  d(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(mean_cost(d, C), 7.0);
  EXPECT_DOUBLE_EQ(mean_cost(Matrix(2, 2, 0.25), Matrix::from_rows({{1, 2}, {3, 4}})), 2.5);
  // relabeling
  const Matrix dd = Matrix::from_rows({{0.1, 0.2}, {0.3, 0.4}});
  const Matrix dp = Matrix::from_rows({{0.4, 0.3}, {0.2, 0.1}});
  const Matrix Cp = Matrix::from_rows({{4, 3}, {2, 7}});
  EXPECT_NEAR(mean_cost(dd, C), mean_cost(dp, Cp), 1e-15);
}

TEST(KoCheck, Examples) {
  const Matrix d = Matrix::from_rows({{0.1, 0.2}, {0.3, 0.4}});
  const Matrix C = Matrix::from_rows({{10, 2}, {3, 10.5}});
  EXPECT_TRUE(ko_check(d, d, C, 0.0));
  Matrix a(2, 2, 0.0), b(2, 2, 0.0);
  a(0, 0) = 1.0;  // mean cost 10
  b(1, 1) = 1.0;  // mean cost 10.5
  EXPECT_FALSE(ko_check(a, b, C, 0.1));
  EXPECT_TRUE(ko_check(a, b, C, 0.5));
}

TEST(Hyman, AnalyticClosure) {
  const auto r = hyman_calibrate([](double b) { return 1.0 / b; }, 0.2);
  EXPECT_NEAR(r.beta, 5.0, 1e-8);
  EXPECT_LE(r.evaluations, 3u);
}

TEST(Hyman, FixedPointReturnsImmediately) {
  // the first iterate is 1 / C* = 2, and C(2) = 0.5 = C*
  auto model = [](double b) { return 1.0 / (2.0 * b) + 0.25; };
  const auto r = hyman_calibrate(model, 0.5);
  EXPECT_EQ(r.evaluations, 1u);
  EXPECT_DOUBLE_EQ(r.beta, 2.0);
}

TEST(Hyman, SecantStepFormula) {
  EXPECT_DOUBLE_EQ(hyman_secant_step(1.0, 3.0, 2.0, 1.0, 2.0), 1.5);
  EXPECT_THROW(hyman_secant_step(1.0, 3.0, 2.0, 3.0, 2.0), NonConvergenceError);
}

TEST(Hyman, RecoversGravityBeta) {
  const std::vector<double> l{0.6, 0.4}, w{0.45, 0.55};
  const Matrix C = Matrix::from_rows({{1.0, 3.0}, {2.5, 0.5}});
  auto model = [&](double beta) { return mean_cost(gravity_balance(l, w, C, beta).d, C); };
  const double c_star = model(1.0);
  const auto r = hyman_calibrate(model, c_star);
  EXPECT_NEAR(r.beta, 1.0, 0.01);
  ASSERT_GE(r.history.size(), 3u);
  const std::size_t k = r.history.size();
  EXPECT_NEAR(r.history[k - 1].first, r.history[k - 3].first, 1e-3);
}

TEST(Hyman, MeanCostNonincreasingInBeta) {
  const std::vector<double> l{0.6, 0.4}, w{0.45, 0.55};
  const Matrix C = Matrix::from_rows({{1.0, 3.0}, {2.5, 0.5}});
  double prev = kInf;
  for (double beta = 0.0; beta <= 5.0; beta += 0.25) {
    const double c = mean_cost(gravity_balance(l, w, C, beta).d, C);
    EXPECT_LE(c, prev + 1e-12);
    prev = c;
  }
}

TEST(Hyman, BracketAndTarget) {
  EXPECT_THROW(hyman_calibrate([](double b) { return 1.0 / b; }, -1.0), InputError);
  HymanOptions opt;
  opt.beta_max = 10.0;
  // a cost floor the model never reaches drives beta out of the bracket
  EXPECT_THROW(hyman_calibrate([](double b) { return 1.0 + 1.0 / b; }, 0.5, opt), NonConvergenceError);
}
