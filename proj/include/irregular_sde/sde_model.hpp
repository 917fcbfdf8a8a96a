#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "irregular_sde/errors.hpp"
#include "irregular_sde/normal_dist.hpp"
#include "irregular_sde/philox.hpp"

namespace irregular_sde {

// Regularity constants attached to a problem: K is the one-sided Lipschitz
// constant of the drift, lambda0 the two-sided ellipticity constant of the
// diffusion, alpha the extra space-Hoelder exponent of sigma beyond 1/2,
// beta the time-Hoelder exponent of both coefficients.
struct CoeffMeta {
  double one_sided_lipschitz_K = 0.0;
  double ellipticity_lambda0 = 1.0;  // >= 1
  double holder_alpha = 0.5;         // in [0, 1/2]
  double holder_beta_time = 0.5;     // >= 1/2
  double drift_bound = 0.0;          // sup |b|

  void validate() const {
    if (!(one_sided_lipschitz_K >= 0.0))
      throw std::invalid_argument("CoeffMeta: K must be >= 0");
    if (!(ellipticity_lambda0 >= 1.0))
      throw std::invalid_argument("CoeffMeta: lambda0 must be >= 1");
    if (!(holder_alpha >= 0.0 && holder_alpha <= 0.5))
      throw std::invalid_argument("CoeffMeta: alpha must be in [0, 1/2]");
    if (!(holder_beta_time >= 0.5))
      throw std::invalid_argument("CoeffMeta: beta must be >= 1/2");
    if (!(drift_bound >= 0.0))
      throw std::invalid_argument("CoeffMeta: drift bound must be >= 0");
  }
};

// Coefficient callbacks write into caller-provided buffers so the step loop
// never allocates. Both must be pure: all sharing across threads relies on it.
using DriftFn =
    std::function<void(double, std::span<const double>, std::span<double>)>;
using DiffusionFn =
    std::function<void(double, std::span<const double>, std::span<double>)>;

struct SdeProblem {
  std::string name;
  int dim_d = 1;
  double horizon_T = 1.0;
  std::vector<double> x0;
  DriftFn drift;            // out has length d
  DiffusionFn diffusion;    // out is d*d, row-major
  CoeffMeta meta;

  void validate() const {
    meta.validate();
    if (dim_d < 1) throw std::invalid_argument("SdeProblem: dim_d must be >= 1");
    if (!(horizon_T > 0.0))
      throw std::invalid_argument("SdeProblem: horizon_T must be > 0");
    if (static_cast<int>(x0.size()) != dim_d)
      throw std::invalid_argument("SdeProblem: x0 length must equal dim_d");
    if (!drift || !diffusion)
      throw std::invalid_argument("SdeProblem: missing coefficient functions");
  }
};

namespace detail {

inline double sign_drift_1d(double x) { return x <= 0.0 ? 1.0 : -1.0; }

inline SdeProblem make_sign_drift() {
  SdeProblem p;
  p.name = "sign_drift";
  p.dim_d = 1;
  p.horizon_T = 1.0;
  p.x0 = {0.0};
  p.drift = [](double, std::span<const double> x, std::span<double> out) {
    out[0] = sign_drift_1d(x[0]);
  };
  p.diffusion = [](double, std::span<const double>, std::span<double> out) {
    out[0] = 1.0;
  };
  p.meta = {.one_sided_lipschitz_K = 0.0,
            .ellipticity_lambda0 = 1.0,
            .holder_alpha = 0.5,
            .holder_beta_time = 0.5,
            .drift_bound = 1.0};
  return p;
}

inline SdeProblem make_brownian() {
  SdeProblem p;
  p.name = "brownian";
  p.dim_d = 1;
  p.horizon_T = 1.0;
  p.x0 = {0.0};
  p.drift = [](double, std::span<const double>, std::span<double> out) {
    out[0] = 0.0;
  };
  p.diffusion = [](double, std::span<const double>, std::span<double> out) {
    out[0] = 1.0;
  };
  p.meta = {.one_sided_lipschitz_K = 0.0,
            .ellipticity_lambda0 = 1.0,
            .holder_alpha = 0.5,
            .holder_beta_time = 0.5,
            .drift_bound = 0.0};
  return p;
}

// sigma(x) = 1 + min(|x|,1)^(1/2+alpha)/2: bounded in [1, 3/2], uniformly
// elliptic, and (1/2+alpha)-Hoelder with constant 1/2.
inline SdeProblem make_holder_diffusion(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 0.5))
    throw std::invalid_argument(
        "holder_diffusion: alpha must be in [0, 1/2]");
  SdeProblem p;
  p.name = "holder_diffusion(" + std::to_string(alpha) + ")";
  p.dim_d = 1;
  p.horizon_T = 1.0;
  p.x0 = {0.0};
  p.drift = [](double, std::span<const double> x, std::span<double> out) {
    out[0] = sign_drift_1d(x[0]);
  };
  const double exponent = 0.5 + alpha;
  p.diffusion = [exponent](double, std::span<const double> x,
                           std::span<double> out) {
    out[0] = 1.0 + 0.5 * std::pow(std::min(std::fabs(x[0]), 1.0), exponent);
  };
  p.meta = {.one_sided_lipschitz_K = 0.0,
            .ellipticity_lambda0 = 2.25,  // sigma^2 in [1, 9/4]
            .holder_alpha = alpha,
            .holder_beta_time = 0.5,
            .drift_bound = 1.0};
  return p;
}

inline SdeProblem make_monotone_2d() {
  SdeProblem p;
  p.name = "monotone_2d";
  p.dim_d = 2;
  p.horizon_T = 1.0;
  p.x0 = {0.0, 0.0};
  p.drift = [](double, std::span<const double> x, std::span<double> out) {
    out[0] = sign_drift_1d(x[0]);
    out[1] = sign_drift_1d(x[1]);
  };
  p.diffusion = [](double, std::span<const double>, std::span<double> out) {
    out[0] = 1.0;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 1.0;
  };
  p.meta = {.one_sided_lipschitz_K = 0.0,
            .ellipticity_lambda0 = 1.0,
            .holder_alpha = 0.5,
            .holder_beta_time = 0.5,
            .drift_bound = std::sqrt(2.0)};
  return p;
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "sign_drift", "brownian", "holder_diffusion(alpha)", "monotone_2d"};
  return names;
}

// Catalog lookup. "holder_diffusion(0.25)" style names carry the alpha
// parameter inline; everything else is an exact match.
inline SdeProblem preset(const std::string& name) {
  if (name == "sign_drift") return detail::make_sign_drift();
  if (name == "brownian") return detail::make_brownian();
  if (name == "monotone_2d") return detail::make_monotone_2d();
  const std::string family = "holder_diffusion(";
  if (name.rfind(family, 0) == 0 && name.back() == ')') {
    const std::string arg = name.substr(family.size(),
                                        name.size() - family.size() - 1);
    std::size_t used = 0;
    double alpha = 0.0;
    try {
      alpha = std::stod(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size())
      throw catalog_error("preset: bad holder_diffusion parameter '" + arg +
                          "'");
    return detail::make_holder_diffusion(alpha);
  }
  std::string msg = "preset: unknown problem '" + name + "'; valid names:";
  for (const auto& n : preset_names()) msg += " " + n;
  throw catalog_error(msg);
}

// Sampled falsification evidence for the standing assumptions. Hoelder
// continuity of sigma has no declared constant, so only its worst sampled
// quotient is reported (fitted, not pass/fail); the other three checks
// compare against the declared constants.
struct AssumptionReport {
  std::int64_t samples = 0;
  std::int64_t ellipticity_violations = 0;
  double max_ellipticity_violation = 0.0;
  std::int64_t one_sided_lipschitz_violations = 0;
  double max_one_sided_lipschitz_violation = 0.0;
  std::int64_t drift_bound_violations = 0;
  double max_drift_bound_violation = 0.0;
  double fitted_holder_quotient = 0.0;
  std::int64_t holder_pairs_skipped = 0;

  std::int64_t total_violations() const {
    return ellipticity_violations + one_sided_lipschitz_violations +
           drift_bound_violations;
  }
};

// Draws (t, x, y, xi) with x, y uniform on [-5,5]^d, t uniform on [0,T] and
// xi uniform on the unit sphere, then checks ellipticity, the one-sided
// Lipschitz inequality and the drift bound. Tolerance 1e-12 absorbs rounding.
inline AssumptionReport verify_assumptions(const SdeProblem& p,
                                           std::int64_t samples,
                                           std::uint64_t seed) {
  if (samples < 1)
    throw std::invalid_argument("verify_assumptions: samples must be >= 1");
  p.validate();
  const int d = p.dim_d;
  const double tol = 1e-12;
  AssumptionReport rep;
  rep.samples = samples;

  std::vector<double> x(d), y(d), xi(d), bx(d), by(d);
  std::vector<double> sx(d * d), sy(d * d), a(d * d), sxi(d);
  for (std::int64_t s = 0; s < samples; ++s) {
    std::uint64_t cell = 0;
    auto next_u = [&] { return counter_uniform(seed, s, cell++); };
    const double t = p.horizon_T * next_u();
    for (int j = 0; j < d; ++j) x[j] = -5.0 + 10.0 * next_u();
    for (int j = 0; j < d; ++j) y[j] = -5.0 + 10.0 * next_u();
    double norm = 0.0;
    for (int j = 0; j < d; ++j) {
      xi[j] = normal_quantile(next_u());
      norm += xi[j] * xi[j];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) xi[0] = norm = 1.0;
    for (int j = 0; j < d; ++j) xi[j] /= norm;

    // ellipticity of a = sigma sigma^T at (t, x)
    p.diffusion(t, x, sx);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += sx[i * d + k] * sx[j * d + k];
        a[i * d + j] = acc;
      }
    double quad = 0.0;
    for (int i = 0; i < d; ++i) {
      double row = 0.0;
      for (int j = 0; j < d; ++j) row += a[i * d + j] * xi[j];
      quad += xi[i] * row;
    }
    const double lam = p.meta.ellipticity_lambda0;
    const double ell_viol =
        std::max(1.0 / lam - quad, quad - lam);
    if (ell_viol > tol) {
      ++rep.ellipticity_violations;
      rep.max_ellipticity_violation =
          std::max(rep.max_ellipticity_violation, ell_viol);
    }

    // one-sided Lipschitz: <x - y, b(t,x) - b(t,y)> <= K |x - y|^2
    p.drift(t, x, bx);
    p.drift(t, y, by);
    double inner = 0.0, dist2 = 0.0;
    for (int j = 0; j < d; ++j) {
      inner += (x[j] - y[j]) * (bx[j] - by[j]);
      dist2 += (x[j] - y[j]) * (x[j] - y[j]);
    }
    const double osl_viol = inner - p.meta.one_sided_lipschitz_K * dist2;
    if (osl_viol > tol) {
      ++rep.one_sided_lipschitz_violations;
      rep.max_one_sided_lipschitz_violation =
          std::max(rep.max_one_sided_lipschitz_violation, osl_viol);
    }

    // drift bound at (t, x)
    double bnorm = 0.0;
    for (int j = 0; j < d; ++j) bnorm += bx[j] * bx[j];
    bnorm = std::sqrt(bnorm);
    if (bnorm - p.meta.drift_bound > tol) {
      ++rep.drift_bound_violations;
      rep.max_drift_bound_violation = std::max(
          rep.max_drift_bound_violation, bnorm - p.meta.drift_bound);
    }

    // Hoelder quotient of sigma (Frobenius), skipping near-coincident pairs
    const double dist = std::sqrt(dist2);
    if (dist < 1e-9) {
      ++rep.holder_pairs_skipped;
    } else {
      p.diffusion(t, y, sy);
      double diff = 0.0;
      for (int j = 0; j < d * d; ++j)
        diff += (sx[j] - sy[j]) * (sx[j] - sy[j]);
      const double quotient =
          std::sqrt(diff) / std::pow(dist, 0.5 + p.meta.holder_alpha);
      rep.fitted_holder_quotient =
          std::max(rep.fitted_holder_quotient, quotient);
    }
  }
  return rep;
}

}  // namespace irregular_sde
