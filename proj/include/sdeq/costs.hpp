#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "sdeq/error.hpp"

namespace sdeq {

enum class FamilyKind { log_barrier, hyperbolic, bpr, hard_cap };

// Link cost family. BPR here is t_free * (1 + gamma * (f/cap)^(1/mu)), so
// that mu = 0.25 gives the usual fourth power and mu -> 0 tends to a hard
// capacity; its conjugate is f_cap * x^mu * (t - t_free) / (1 + mu) with
// x = (t - t_free) / (t_free * gamma).
struct CostFamily {
  FamilyKind kind = FamilyKind::hard_cap;
  double mu = 0.0;
  double gamma = 0.0;

  static CostFamily log_barrier(double mu) { return checked({FamilyKind::log_barrier, mu, 0.0}); }
  static CostFamily hyperbolic(double mu) { return checked({FamilyKind::hyperbolic, mu, 0.0}); }
  static CostFamily bpr(double gamma, double mu) { return checked({FamilyKind::bpr, mu, gamma}); }
  static CostFamily hard_cap() { return {FamilyKind::hard_cap, 0.0, 0.0}; }

  bool is_barrier() const { return kind == FamilyKind::log_barrier || kind == FamilyKind::hyperbolic; }
  bool operator==(const CostFamily&) const = default;

 private:
  static CostFamily checked(CostFamily f) {
    if (!(f.mu > 0.0) || !std::isfinite(f.mu)) throw InputError("cost family: mu must be positive");
    if (f.kind == FamilyKind::bpr && (!(f.gamma > 0.0) || !std::isfinite(f.gamma)))
      throw InputError("cost family: gamma must be positive");
    return f;
  }
};

inline std::string family_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::log_barrier: return "log_barrier";
    case FamilyKind::hyperbolic: return "hyperbolic";
    case FamilyKind::bpr: return "bpr";
    default: return "hard_cap";
  }
}

namespace detail {

inline void check_link(double t_free, double cap) {
  if (!(t_free > 0.0) || !(cap > 0.0)) throw InputError("link needs positive t_free and cap");
}

inline void check_flow(const CostFamily& fam, double cap, double f, bool allow_cap = false) {
  if (!(f >= 0.0)) throw InputError("negative flow");
  if (fam.kind == FamilyKind::bpr) return;
  if (f > cap || (f == cap && !allow_cap))
    throw InputError(family_name(fam.kind) + ": flow " + std::to_string(f) + " outside domain (cap " +
                     std::to_string(cap) + ")");
}

}  // namespace detail

// Smallest admissible time for the conjugate (open bound for hyperbolic).
inline double conjugate_domain_min(const CostFamily& fam, double t_free) {
  return fam.kind == FamilyKind::hyperbolic ? (1.0 - fam.mu) * t_free : t_free;
}

inline void check_time(const CostFamily& fam, double t_free, double t) {
  const double lo = conjugate_domain_min(fam, t_free);
  const bool ok = fam.kind == FamilyKind::hyperbolic ? t > lo : t >= lo;
  if (!ok || !std::isfinite(t))
    throw InputError(family_name(fam.kind) + ": time " + std::to_string(t) + " outside conjugate domain");
}

inline double tau(const CostFamily& fam, double t_free, double cap, double f) {
  detail::check_link(t_free, cap);
  detail::check_flow(fam, cap, f);
  const double r = f / cap;
  switch (fam.kind) {
    case FamilyKind::log_barrier: return t_free * (1.0 - fam.mu * std::log1p(-r));
    case FamilyKind::hyperbolic: return t_free * (1.0 + fam.mu * f / (cap - f));
    case FamilyKind::bpr: return t_free * (1.0 + fam.gamma * std::pow(r, 1.0 / fam.mu));
    default: return t_free;
  }
}

// d tau / d f.
inline double tau_slope(const CostFamily& fam, double t_free, double cap, double f) {
  detail::check_link(t_free, cap);
  detail::check_flow(fam, cap, f);
  switch (fam.kind) {
    case FamilyKind::log_barrier: return t_free * fam.mu / (cap - f);
    case FamilyKind::hyperbolic: return t_free * fam.mu * cap / ((cap - f) * (cap - f));
    case FamilyKind::bpr: {
      const double p = 1.0 / fam.mu;
      if (f == 0.0) return p > 1.0 ? 0.0 : (p == 1.0 ? t_free * fam.gamma / cap : std::numeric_limits<double>::infinity());
      return t_free * fam.gamma * p * std::pow(f / cap, p - 1.0) / cap;
    }
    default: return 0.0;
  }
}

// sigma(f) = integral of tau from 0 to f.
inline double sigma(const CostFamily& fam, double t_free, double cap, double f) {
  detail::check_link(t_free, cap);
  detail::check_flow(fam, cap, f, fam.kind == FamilyKind::hard_cap);
  const double r = f / cap;
  switch (fam.kind) {
    case FamilyKind::log_barrier:
      return t_free * f + t_free * fam.mu * (f + (cap - f) * std::log1p(-r));
    case FamilyKind::hyperbolic:
      return t_free * f - t_free * fam.mu * f - t_free * cap * fam.mu * std::log1p(-r);
    case FamilyKind::bpr: {
      const double p = 1.0 / fam.mu;
      return t_free * f + t_free * fam.gamma * cap * std::pow(r, p + 1.0) / (p + 1.0);
    }
    default: return t_free * f;
  }
}

inline double sigma_star(const CostFamily& fam, double t_free, double cap, double t) {
  detail::check_link(t_free, cap);
  check_time(fam, t_free, t);
  const double dt = t - t_free;
  switch (fam.kind) {
    case FamilyKind::log_barrier: {
      const double s = dt / (t_free * fam.mu);
      return dt * cap + cap * t_free * fam.mu * std::expm1(-s);
    }
    case FamilyKind::hyperbolic:
      return dt * cap + t_free * cap * fam.mu * std::log(t_free * fam.mu / (t - (1.0 - fam.mu) * t_free));
    case FamilyKind::bpr: {
      const double x = dt / (t_free * fam.gamma);
      return cap * std::pow(x, fam.mu) * dt / (1.0 + fam.mu);
    }
    default: return dt * cap;
  }
}

// The flow at which tau equals t (the derivative of sigma_star). For the
// hard cap this is cap above t_free and 0 at t_free.
inline double inv_flow(const CostFamily& fam, double t_free, double cap, double t) {
  detail::check_link(t_free, cap);
  check_time(fam, t_free, t);
  const double dt = t - t_free;
  switch (fam.kind) {
    case FamilyKind::log_barrier: return -cap * std::expm1(-dt / (t_free * fam.mu));
    case FamilyKind::hyperbolic: return cap * dt / (t - (1.0 - fam.mu) * t_free);
    case FamilyKind::bpr: return cap * std::pow(dt / (t_free * fam.gamma), fam.mu);
    default: return dt > 0.0 ? cap : 0.0;
  }
}

// d inv_flow / d t.
inline double inv_flow_slope(const CostFamily& fam, double t_free, double cap, double t) {
  detail::check_link(t_free, cap);
  check_time(fam, t_free, t);
  const double dt = t - t_free;
  switch (fam.kind) {
    case FamilyKind::log_barrier: {
      const double s = t_free * fam.mu;
      return cap / s * std::exp(-dt / s);
    }
    case FamilyKind::hyperbolic: {
      const double den = t - (1.0 - fam.mu) * t_free;
      return cap * fam.mu * t_free / (den * den);
    }
    case FamilyKind::bpr: {
      const double x = dt / (t_free * fam.gamma);
      if (x == 0.0) return fam.mu < 1.0 ? std::numeric_limits<double>::infinity() : cap / (t_free * fam.gamma);
      return cap * fam.mu * std::pow(x, fam.mu - 1.0) / (t_free * fam.gamma);
    }
    default: return 0.0;
  }
}

// The marginal-cost toll addend f * tau'(f).
inline double marginal_toll(const CostFamily& fam, double t_free, double cap, double f) {
  if (f == 0.0) {
    detail::check_link(t_free, cap);
    return 0.0;
  }
  return f * tau_slope(fam, t_free, cap, f);
}

}  // namespace sdeq
