#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sdeq/costs.hpp"

using namespace sdeq;

namespace {

struct Case {
  CostFamily fam;
  double t_free;
  double cap;
};

std::vector<Case> families() {
  return {{CostFamily::log_barrier(0.1), 2.0, 10.0},  {CostFamily::log_barrier(0.01), 1.0, 5.0},
          {CostFamily::hyperbolic(0.3), 1.5, 8.0},    {CostFamily::hyperbolic(0.05), 1.0, 1.0},
          {CostFamily::bpr(0.15, 0.25), 3.0, 20.0},   {CostFamily::bpr(1.0, 1.0), 1.0, 4.0},
          {CostFamily::bpr(2.0, 0.5), 0.5, 2.0}};
}

// Times sampled strictly above the conjugate domain's lower end.
std::vector<double> time_grid(const Case& c) {
  std::vector<double> ts;
  const double scale = c.fam.is_barrier() ? c.fam.mu : 0.5;
  for (double r : {0.01, 0.05, 0.2, 0.5, 1.0, 2.5, 6.0}) ts.push_back(c.t_free * (1.0 + r * scale));
  return ts;
}

std::vector<double> flow_grid(const Case& c) {
  std::vector<double> fs;
  for (double r : {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) fs.push_back(r * c.cap);
  return fs;
}

// Five-point central difference; the truncation error of the three-point
// rule (h^2 f'''/6) is too close to the 1e-7 tolerances near steep barriers.
template <class F>
double fd5(F f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

}  // namespace

TEST(Tau, Examples) {
  EXPECT_DOUBLE_EQ(tau(CostFamily::bpr(0.15, 0.25), 2.0, 10.0, 0.0), 2.0);
  EXPECT_NEAR(tau(CostFamily::log_barrier(0.01), 1.0, 10.0, 5.0), 1.0 + 0.01 * std::log(2.0), 1e-15);
  EXPECT_NEAR(tau(CostFamily::log_barrier(0.01), 1.0, 10.0, 5.0), 1.00693, 1e-5);
  EXPECT_DOUBLE_EQ(tau(CostFamily::bpr(1.0, 1.0), 3.0, 10.0, 10.0), 6.0);
  EXPECT_DOUBLE_EQ(tau(CostFamily::hard_cap(), 3.0, 10.0, 9.0), 3.0);
}

TEST(Tau, BprFourthPower) {
  // mu = 0.25 is the usual fourth power
  EXPECT_NEAR(tau(CostFamily::bpr(0.15, 0.25), 1.0, 10.0, 20.0), 1.0 + 0.15 * 16.0, 1e-12);
}

TEST(Tau, DomainErrors) {
  EXPECT_THROW(tau(CostFamily::log_barrier(0.1), 1.0, 10.0, 10.0), InputError);
  EXPECT_THROW(tau(CostFamily::hyperbolic(0.1), 1.0, 10.0, 11.0), InputError);
  EXPECT_THROW(tau(CostFamily::hard_cap(), 1.0, 10.0, 10.0), InputError);
  EXPECT_THROW(tau(CostFamily::bpr(1, 1), 1.0, 10.0, -1.0), InputError);
  EXPECT_THROW(tau(CostFamily::bpr(1, 1), 0.0, 10.0, 1.0), InputError);
  EXPECT_NO_THROW(tau(CostFamily::bpr(1, 1), 1.0, 10.0, 50.0));
  EXPECT_THROW(CostFamily::log_barrier(0.0), InputError);
  EXPECT_THROW(CostFamily::bpr(0.0, 0.25), InputError);
}

TEST(Tau, StrictlyIncreasing) {
  for (const auto& c : families())
    for (double f : flow_grid(c)) EXPECT_LT(tau(c.fam, c.t_free, c.cap, f), tau(c.fam, c.t_free, c.cap, f * 1.001));
}

TEST(Tau, BarrierTendsToFreeFlowAsMuShrinks) {
  double prev = std::numeric_limits<double>::infinity();
  for (double mu : {1.0, 0.1, 0.01, 1e-3, 1e-4}) {
    const double v = tau(CostFamily::log_barrier(mu), 2.0, 10.0, 7.0);
    EXPECT_LT(v, prev);
    EXPECT_GT(v, 2.0);
    prev = v;
  }
  EXPECT_NEAR(prev, 2.0, 1e-3);
}

TEST(Sigma, Examples) {
  for (const auto& c : families()) EXPECT_EQ(sigma(c.fam, c.t_free, c.cap, 0.0), 0.0);
  const auto lin = CostFamily::bpr(1.0, 1.0);
  for (double f : {0.5, 2.0, 7.0}) EXPECT_NEAR(sigma(lin, 2.0, 4.0, f), 2.0 * f + 2.0 * f * f / 8.0, 1e-12);
}

TEST(Sigma, DerivativeIsTau) {
  for (const auto& c : families())
    for (double f : flow_grid(c)) {
      const double h = 1e-6 * c.cap;
      const double fd = fd5([&](double x) { return sigma(c.fam, c.t_free, c.cap, x); }, f, h);
      const double tv = tau(c.fam, c.t_free, c.cap, f);
      EXPECT_NEAR(fd, tv, 1e-8 * tv) << family_name(c.fam.kind) << " f=" << f;
    }
}

TEST(Sigma, Convex) {
  for (const auto& c : families()) {
    const auto fs = flow_grid(c);
    for (std::size_t a = 0; a < fs.size(); ++a)
      for (std::size_t b = a + 1; b < fs.size(); ++b) {
        const double mid = sigma(c.fam, c.t_free, c.cap, 0.5 * (fs[a] + fs[b]));
        EXPECT_LE(mid, 0.5 * (sigma(c.fam, c.t_free, c.cap, fs[a]) + sigma(c.fam, c.t_free, c.cap, fs[b])) + 1e-12);
      }
  }
}

TEST(SigmaStar, ZeroAtFreeFlow) {
  for (const auto& c : families()) EXPECT_NEAR(sigma_star(c.fam, c.t_free, c.cap, c.t_free), 0.0, 1e-12);
  EXPECT_EQ(sigma_star(CostFamily::hard_cap(), 2.0, 3.0, 2.0), 0.0);
}

TEST(SigmaStar, DerivativeIsInverseFlow) {
  for (const auto& c : families())
    for (double t : time_grid(c)) {
      const double h = 1e-6 * t;
      const double fd = fd5([&](double x) { return sigma_star(c.fam, c.t_free, c.cap, x); }, t, h);
      const double g = inv_flow(c.fam, c.t_free, c.cap, t);
      EXPECT_NEAR(fd, g, 1e-7 * g) << family_name(c.fam.kind) << " t=" << t;
    }
}

TEST(SigmaStar, SmallMuLimit) {
  const double t_free = 1.5, cap = 10.0, t = 2.0 * t_free;
  const double v = sigma_star(CostFamily::log_barrier(1e-3), t_free, cap, t);
  const double lim = (t - t_free) * cap;
  // the gap is lim * mu * (1 - e^(-1/mu)), i.e. mu * lim up to rounding
  EXPECT_LE(std::abs(v - lim), 1e-3 * lim * (1 + 1e-12));
}

TEST(SigmaStar, DomainErrors) {
  EXPECT_THROW(sigma_star(CostFamily::log_barrier(0.1), 1.0, 1.0, 0.99), InputError);
  EXPECT_THROW(sigma_star(CostFamily::hyperbolic(0.5), 1.0, 1.0, 0.5), InputError);
  EXPECT_NO_THROW(sigma_star(CostFamily::hyperbolic(0.5), 1.0, 1.0, 0.75));
  EXPECT_THROW(inv_flow(CostFamily::bpr(1, 1), 1.0, 1.0, 0.5), InputError);
}

TEST(FenchelYoung, EqualityAtTau) {
  for (const auto& c : families())
    for (double f : flow_grid(c)) {
      const double t = tau(c.fam, c.t_free, c.cap, f);
      const double lhs = sigma(c.fam, c.t_free, c.cap, f) + sigma_star(c.fam, c.t_free, c.cap, t);
      EXPECT_NEAR(lhs, f * t, 1e-8 * f * t) << family_name(c.fam.kind) << " f=" << f;
    }
}

TEST(FenchelYoung, InequalityOffTau) {
  for (const auto& c : families())
    for (double f : flow_grid(c))
      for (double t : time_grid(c))
        EXPECT_GE(sigma(c.fam, c.t_free, c.cap, f) + sigma_star(c.fam, c.t_free, c.cap, t), f * t - 1e-9 * f * t);
}

TEST(InvFlow, Examples) {
  for (const auto& c : families()) EXPECT_NEAR(inv_flow(c.fam, c.t_free, c.cap, c.t_free), 0.0, 1e-15);
  EXPECT_NEAR(inv_flow(CostFamily::bpr(1.0, 1.0), 2.0, 8.0, 3.0), 4.0, 1e-12);
  EXPECT_EQ(inv_flow(CostFamily::hard_cap(), 2.0, 8.0, 2.0), 0.0);
  EXPECT_EQ(inv_flow(CostFamily::hard_cap(), 2.0, 8.0, 2.5), 8.0);
}

TEST(InvFlow, RoundTrip) {
  for (const auto& c : families())
    for (double t : time_grid(c)) {
      const double f = inv_flow(c.fam, c.t_free, c.cap, t);
      if (c.fam.is_barrier()) {
        EXPECT_GE(f, 0.0);
        EXPECT_LT(f, c.cap);
      }
      EXPECT_NEAR(tau(c.fam, c.t_free, c.cap, f), t, 1e-10 * t) << family_name(c.fam.kind) << " t=" << t;
    }
}

TEST(InvFlow, SlopeMatchesFiniteDifferences) {
  for (const auto& c : families())
    for (double t : time_grid(c)) {
      const double h = 1e-6 * t;
      const double fd = fd5([&](double x) { return inv_flow(c.fam, c.t_free, c.cap, x); }, t, h);
      const double g = inv_flow_slope(c.fam, c.t_free, c.cap, t);
      EXPECT_NEAR(fd, g, 1e-5 * g) << family_name(c.fam.kind) << " t=" << t;
    }
}

TEST(MarginalToll, Examples) {
  for (const auto& c : families()) EXPECT_EQ(marginal_toll(c.fam, c.t_free, c.cap, 0.0), 0.0);
  EXPECT_NEAR(marginal_toll(CostFamily::bpr(1.0, 1.0), 2.0, 8.0, 3.0), 3.0 * 2.0 / 8.0, 1e-12);
  for (const auto& c : families())
    for (double f : flow_grid(c)) {
      const double h = 1e-6 * c.cap;
      const double fd = f * fd5([&](double x) { return tau(c.fam, c.t_free, c.cap, x); }, f, h);
      const double m = marginal_toll(c.fam, c.t_free, c.cap, f);
      EXPECT_NEAR(m, fd, 1e-6 * std::max(1.0, std::abs(fd))) << family_name(c.fam.kind) << " f=" << f;
    }
}
