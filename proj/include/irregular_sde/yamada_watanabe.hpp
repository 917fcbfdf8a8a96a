#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "irregular_sde/normal_dist.hpp"
#include "irregular_sde/philox.hpp"
#include "irregular_sde/quadrature.hpp"

namespace irregular_sde {

// Yamada-Watanabe smoothing triple (psi, phi, Phi) for parameters delta > 1,
// 0 < eps < 1:
//   psi      >= 0, supported on [eps/delta, eps], integrates to 1, and
//            bounded by 2/(z log delta);
//   phi'     the antiderivative of psi from 0 (odd extension);
//   phi      the antiderivative of phi' (so phi'' = psi on (0, inf));
//   Phi(x)   = phi(|x|) on R^d.
//
// Shape choice: in log coordinates u = log z the weight is a trapezoid with
// ramps of width (log delta)/4 and unit plateau, so psi(z) = c w(log z)/z
// with c = 4/(3 log delta) <= 2/log delta. All derivatives have closed
// piecewise forms in z and log z.
class YWFunction {
 public:
  YWFunction(double delta, double eps) : delta_(delta), eps_(eps) {
    if (!(delta > 1.0))
      throw std::invalid_argument("YWFunction: delta must be > 1");
    if (!(eps > 0.0 && eps < 1.0))
      throw std::invalid_argument("YWFunction: eps must lie in (0, 1)");
    log_a_ = std::log(eps / delta);
    log_b_ = std::log(eps);
    ramp_ = (log_b_ - log_a_) / 4.0;
    norm_c_ = 4.0 / (3.0 * (log_b_ - log_a_));
    z_[0] = eps / delta;
    z_[1] = std::exp(log_a_ + ramp_);
    z_[2] = std::exp(log_b_ - ramp_);
    z_[3] = eps;
    phi_cum_[0] = 0.0;
    for (int seg = 0; seg < 3; ++seg)
      phi_cum_[seg + 1] =
          phi_cum_[seg] + antiderivative(seg, z_[seg + 1]) -
          antiderivative(seg, z_[seg]);
  }

  double delta() const { return delta_; }
  double eps() const { return eps_; }
  double support_lo() const { return z_[0]; }
  double support_hi() const { return z_[3]; }

  double psi(double z) const {
    if (z <= z_[0] || z >= z_[3]) return 0.0;
    const double v = std::log(z);
    double w;
    if (v < log_a_ + ramp_)
      w = (v - log_a_) / ramp_;
    else if (v <= log_b_ - ramp_)
      w = 1.0;
    else
      w = (log_b_ - v) / ramp_;
    return norm_c_ * w / z;
  }

  double phi_prime(double x) const {
    const double ax = std::fabs(x);
    double value;
    if (ax <= z_[0]) {
      value = 0.0;
    } else if (ax >= z_[3]) {
      value = 1.0;
    } else {
      const double v = std::log(ax);
      if (v < log_a_ + ramp_) {
        const double t = v - log_a_;
        value = norm_c_ * t * t / (2.0 * ramp_);
      } else if (v <= log_b_ - ramp_) {
        value = norm_c_ * (0.5 * ramp_ + (v - log_a_ - ramp_));
      } else {
        const double t = log_b_ - v;
        value = norm_c_ * (2.5 * ramp_ + (ramp_ * ramp_ - t * t) / (2.0 * ramp_));
      }
    }
    return x < 0.0 ? -value : value;
  }

  double phi(double x) const {
    const double ax = std::fabs(x);
    if (ax <= z_[0]) return 0.0;
    if (ax >= z_[3]) return phi_cum_[3] + (ax - z_[3]);
    int seg = 0;
    while (seg < 2 && ax > z_[seg + 1]) ++seg;
    return phi_cum_[seg] + antiderivative(seg, ax) - antiderivative(seg, z_[seg]);
  }

  double phi_double_prime(double x) const { return psi(std::fabs(x)); }

  // Phi on R^d.
  double big_phi(std::span<const double> x) const {
    double r2 = 0.0;
    for (double c : x) r2 += c * c;
    return phi(std::sqrt(r2));
  }

 private:
  // On segment seg the derivative is phi'(y) = c * P(log y) with quadratic
  // P(v) = p2 v^2 + p1 v + p0; the antiderivative in y is elementary.
  std::array<double, 3> segment_poly(int seg) const {
    switch (seg) {
      case 0:
        return {log_a_ * log_a_ / (2.0 * ramp_), -log_a_ / ramp_,
                1.0 / (2.0 * ramp_)};
      case 1:
        return {-(log_a_ + 0.5 * ramp_), 1.0, 0.0};
      default:
        return {3.0 * ramp_ - log_b_ * log_b_ / (2.0 * ramp_), log_b_ / ramp_,
                -1.0 / (2.0 * ramp_)};
    }
  }

  double antiderivative(int seg, double y) const {
    const auto [p0, p1, p2] = segment_poly(seg);
    const double ly = std::log(y);
    return norm_c_ * y *
           (p2 * (ly * ly - 2.0 * ly + 2.0) + p1 * (ly - 1.0) + p0);
  }

  double delta_, eps_;
  double log_a_, log_b_, ramp_, norm_c_;
  std::array<double, 4> z_;
  std::array<double, 4> phi_cum_;
};

inline YWFunction build_yw(double delta, double eps) {
  return YWFunction(delta, eps);
}

struct YWGridSpec {
  double lo = 1e-6;
  double hi = 10.0;
  std::int64_t points = 10000;
  bool log_spaced = true;
  int vector_dims = 3;       // sampled |x| checks run for d = 2..vector_dims
  int vectors_per_dim = 64;
};

// Pointwise verification of the four properties the smoothing relies on:
//   envelope:   |x| <= eps + phi(|x|)
//   slope:      0 <= |phi'| <= 1
//   ratio:      phi'(|x|)/|x| <= delta/eps
//   curvature:  0 <= psi(|x|) <= 2/(|x| log delta) on [eps/delta, eps],
//               psi = 0 outside.
struct YWPropertyReport {
  double envelope_max_violation = 0.0;
  double slope_max_violation = 0.0;
  double ratio_max_violation = 0.0;
  double curvature_max_violation = 0.0;
  std::int64_t envelope_violations = 0;
  std::int64_t slope_violations = 0;
  std::int64_t ratio_violations = 0;
  std::int64_t curvature_violations = 0;
  double psi_integral = 0.0;
  double psi_integral_error = 0.0;  // |integral - 1|
  std::int64_t grid_points = 0;

  std::int64_t total_violations() const {
    return envelope_violations + slope_violations + ratio_violations +
           curvature_violations;
  }
};

inline std::vector<double> yw_default_grid(const YWGridSpec& spec) {
  if (spec.points < 2 || !(spec.lo > 0.0) || !(spec.hi > spec.lo))
    throw std::invalid_argument("yw grid: need points >= 2 and 0 < lo < hi");
  std::vector<double> grid(static_cast<std::size_t>(spec.points));
  for (std::int64_t i = 0; i < spec.points; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(spec.points - 1);
    grid[static_cast<std::size_t>(i)] =
        spec.log_spaced
            ? spec.lo * std::pow(spec.hi / spec.lo, f)
            : spec.lo + f * (spec.hi - spec.lo);
  }
  return grid;
}

inline YWPropertyReport check_properties(const YWFunction& f,
                                         const YWGridSpec& spec = {}) {
  const auto grid = yw_default_grid(spec);
  if (spec.lo >= f.support_lo() || spec.hi <= f.support_hi())
    throw std::invalid_argument(
        "check_properties: grid must bracket [eps/delta, eps]");
  const double tol = 1e-12;
  YWPropertyReport rep;
  rep.grid_points = static_cast<std::int64_t>(grid.size());

  auto check = [&](double x) {
    const double ax = std::fabs(x);
    const double envelope = ax - (f.eps() + f.phi(ax));
    if (envelope > tol) {
      ++rep.envelope_violations;
      rep.envelope_max_violation = std::max(rep.envelope_max_violation, envelope);
    }
    const double slope = std::fabs(f.phi_prime(x)) - 1.0;
    if (slope > tol) {
      ++rep.slope_violations;
      rep.slope_max_violation = std::max(rep.slope_max_violation, slope);
    }
    if (ax > 0.0) {
      const double ratio = f.phi_prime(ax) / ax - f.delta() / f.eps();
      if (ratio > tol) {
        ++rep.ratio_violations;
        rep.ratio_max_violation = std::max(rep.ratio_max_violation, ratio);
      }
      const double psi = f.phi_double_prime(x);
      const bool in_support = ax >= f.support_lo() && ax <= f.support_hi();
      const double bound =
          in_support ? 2.0 / (ax * std::log(f.delta())) : 0.0;
      const double curvature = std::max(psi - bound, -psi);
      if (curvature > tol) {
        ++rep.curvature_violations;
        rep.curvature_max_violation =
            std::max(rep.curvature_max_violation, curvature);
      }
    }
  };

  for (double x : grid) {
    check(x);
    check(-x);
  }

  // Multi-dimensional envelope check Phi(x) = phi(|x|) on sampled vectors.
  for (int d = 2; d <= spec.vector_dims; ++d) {
    std::vector<double> x(d);
    for (int v = 0; v < spec.vectors_per_dim; ++v) {
      double norm = 0.0;
      for (int j = 0; j < d; ++j) {
        x[static_cast<std::size_t>(j)] = normal_quantile(counter_uniform(
            0x5957u, static_cast<std::uint64_t>(d),
            static_cast<std::uint64_t>(v) * d + static_cast<std::uint64_t>(j)));
        norm += x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
      }
      norm = std::sqrt(norm);
      const double radius = grid[static_cast<std::size_t>(
          (static_cast<std::size_t>(v) * grid.size()) /
          static_cast<std::size_t>(spec.vectors_per_dim))];
      double r2 = 0.0;
      for (int j = 0; j < d; ++j) {
        x[static_cast<std::size_t>(j)] *= radius / norm;
        r2 += x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
      }
      const double envelope =
          std::sqrt(r2) - (f.eps() + f.big_phi(x));
      if (envelope > tol) {
        ++rep.envelope_violations;
        rep.envelope_max_violation =
            std::max(rep.envelope_max_violation, envelope);
      }
    }
  }

  rep.psi_integral = integrate([&](double z) { return f.psi(z); },
                               f.support_lo(), f.support_hi(), 1e-12);
  rep.psi_integral_error = std::fabs(rep.psi_integral - 1.0);
  return rep;
}

}  // namespace irregular_sde
