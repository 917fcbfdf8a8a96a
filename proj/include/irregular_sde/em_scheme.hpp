#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "irregular_sde/brownian.hpp"
#include "irregular_sde/parallel.hpp"
#include "irregular_sde/sde_model.hpp"
#include "irregular_sde/stats.hpp"

namespace irregular_sde {

// The three one-step rules differ only in where the coefficients read time:
//   standard:  b and sigma frozen at the left grid point,
//   polygonal: b and sigma keep the running time (midpoint rule per step),
//   mixed:     b keeps the running time, sigma is frozen.
// The state argument is frozen at the left grid point for all three, so for
// time-homogeneous coefficients they produce identical trajectories.
enum class SchemeKind { standard, polygonal, mixed };

inline const char* to_string(SchemeKind s) {
  switch (s) {
    case SchemeKind::standard: return "standard";
    case SchemeKind::polygonal: return "polygonal";
    case SchemeKind::mixed: return "mixed";
  }
  return "?";
}

inline SchemeKind scheme_from_string(const std::string& s) {
  if (s == "standard") return SchemeKind::standard;
  if (s == "polygonal") return SchemeKind::polygonal;
  if (s == "mixed") return SchemeKind::mixed;
  throw std::invalid_argument("unknown scheme '" + s +
                              "' (standard|polygonal|mixed)");
}

struct StoppingTimeSpec {
  enum class Kind { deterministic, first_exit, horizon };
  Kind kind = Kind::horizon;
  double value = 0.0;  // the time for deterministic, the radius for first_exit

  static StoppingTimeSpec horizon() { return {Kind::horizon, 0.0}; }
  static StoppingTimeSpec deterministic(double t) {
    return {Kind::deterministic, t};
  }
  static StoppingTimeSpec first_exit(double radius) {
    return {Kind::first_exit, radius};
  }

  std::string label() const {
    switch (kind) {
      case Kind::horizon: return "horizon";
      case Kind::deterministic:
        return "deterministic:" + std::to_string(value);
      case Kind::first_exit: return "first_exit:" + std::to_string(value);
    }
    return "?";
  }
};

inline int exact_log2(std::int64_t n) {
  if (n < 1 || (n & (n - 1)) != 0)
    throw std::invalid_argument("n must be a positive power of 2, got " +
                                std::to_string(n));
  int level = 0;
  while ((std::int64_t{1} << level) < n) ++level;
  return level;
}

// Left endpoint of the grid interval containing s, with eta(T) = T.
// The relative nudge keeps k stable when s*n/T lands a rounding error below
// an exact grid multiple.
inline double eta(std::int64_t n, double horizon_T, double s) {
  if (n < 1) throw std::invalid_argument("eta: n must be >= 1");
  if (!(s >= 0.0 && s <= horizon_T))
    throw std::invalid_argument("eta: s must lie in [0, T]");
  const double ratio = s * static_cast<double>(n) / horizon_T;
  auto k = static_cast<std::int64_t>(
      std::floor(ratio * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())));
  if (k > n) k = n;
  return static_cast<double>(k) * horizon_T / static_cast<double>(n);
}

struct GridPath {
  std::int64_t n_steps = 1;  // power of 2
  int dim_d = 1;
  double horizon_T = 1.0;
  SchemeKind scheme = SchemeKind::standard;
  std::vector<double> times;   // n_steps + 1
  std::vector<double> states;  // (n_steps + 1) * dim_d, row-major

  std::span<const double> state(std::int64_t k) const {
    return {states.data() + k * dim_d, static_cast<std::size_t>(dim_d)};
  }
};

// Effective per-step coefficients shared by the stepper and by the
// continuous-time evaluation between grid points, so that interpolating a
// path at its own grid points reproduces the stored states exactly.
inline void step_coefficients(const SdeProblem& p, SchemeKind scheme,
                              double t0, double t1, std::span<const double> x,
                              std::span<double> b_eff,
                              std::span<double> sigma_eff) {
  const double t_mid = 0.5 * (t0 + t1);
  const double t_drift = scheme == SchemeKind::standard ? t0 : t_mid;
  const double t_diff = scheme == SchemeKind::polygonal ? t_mid : t0;
  p.drift(t_drift, x, b_eff);
  p.diffusion(t_diff, x, sigma_eff);
}

inline GridPath simulate(const SdeProblem& p, SchemeKind scheme,
                         std::int64_t n_steps, const BrownianPath& w) {
  p.validate();
  const int level = exact_log2(n_steps);
  if (level != w.level_L)
    throw std::invalid_argument("simulate: path level " +
                                std::to_string(w.level_L) +
                                " does not match n_steps " +
                                std::to_string(n_steps));
  if (w.dim_d != p.dim_d)
    throw std::invalid_argument("simulate: dimension mismatch");
  if (w.horizon_T != p.horizon_T)
    throw std::invalid_argument("simulate: horizon mismatch");

  const int d = p.dim_d;
  const double T = p.horizon_T;
  const double h = T / static_cast<double>(n_steps);
  GridPath g;
  g.n_steps = n_steps;
  g.dim_d = d;
  g.horizon_T = T;
  g.scheme = scheme;
  g.times.resize(static_cast<std::size_t>(n_steps + 1));
  g.states.resize(static_cast<std::size_t>((n_steps + 1) * d));
  for (int j = 0; j < d; ++j) g.states[static_cast<std::size_t>(j)] = p.x0[j];

  std::vector<double> b(d), sigma(d * d);
  for (std::int64_t k = 0; k < n_steps; ++k) {
    const double t0 = static_cast<double>(k) * T / static_cast<double>(n_steps);
    const double t1 =
        static_cast<double>(k + 1) * T / static_cast<double>(n_steps);
    g.times[static_cast<std::size_t>(k)] = t0;
    const auto xk = g.state(k);
    step_coefficients(p, scheme, t0, t1, xk, b, sigma);
    const auto dw = w.step(k);
    double* next = g.states.data() + (k + 1) * d;
    for (int i = 0; i < d; ++i) {
      double acc = xk[i] + h * b[i];
      for (int j = 0; j < d; ++j) acc += sigma[i * d + j] * dw[j];
      next[i] = acc;
    }
  }
  g.times[static_cast<std::size_t>(n_steps)] = T;
  return g;
}

// Deviation Y between a fine trajectory and a coarser one driven by the same
// Brownian path. The coarse trajectory is evaluated at fine grid times
// through its continuous-time form (frozen per-step coefficients plus the
// actual Brownian increment), which is the process the error bounds address.
struct DeviationSample {
  std::vector<double> abs_dev_at_tau;  // |Y_tau| per requested stopping time
  double sup_pow_p = 0.0;              // sup_k |Y_{t_k}|^p over fine times
  double terminal_pow_p = 0.0;         // |Y_T|^p
};

inline DeviationSample deviation_stats(const SdeProblem& p,
                                       const GridPath& fine,
                                       const GridPath& coarse,
                                       const BrownianPath& w_fine,
                                       double p_exponent,
                                       std::span<const StoppingTimeSpec> taus) {
  if (!(p_exponent >= 1.0 && p_exponent <= 8.0))
    throw std::invalid_argument("deviation_stats: p must lie in [1, 8]");
  if (fine.dim_d != coarse.dim_d || fine.dim_d != p.dim_d)
    throw std::invalid_argument("deviation_stats: dimension mismatch");
  if (fine.horizon_T != coarse.horizon_T)
    throw std::invalid_argument("deviation_stats: horizon mismatch");
  if (fine.n_steps % coarse.n_steps != 0)
    throw std::invalid_argument(
        "deviation_stats: coarse grid must divide the fine grid");
  if (w_fine.level_L != exact_log2(fine.n_steps) ||
      w_fine.dim_d != fine.dim_d)
    throw std::invalid_argument(
        "deviation_stats: Brownian path must live on the fine grid");

  const int d = p.dim_d;
  const double T = fine.horizon_T;
  const std::int64_t nf = fine.n_steps;
  const std::int64_t nc = coarse.n_steps;
  const std::int64_t stride = nf / nc;
  const double hc = T / static_cast<double>(nc);

  // Fine-grid indices at which each stopping time fires. first_exit is
  // detected on fine-grid crossings of the fine trajectory, capped at T.
  std::vector<std::int64_t> tau_index(taus.size(), nf);
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    const auto& tau = taus[ti];
    switch (tau.kind) {
      case StoppingTimeSpec::Kind::horizon:
        tau_index[ti] = nf;
        break;
      case StoppingTimeSpec::Kind::deterministic: {
        if (!(tau.value >= 0.0 && tau.value <= T))
          throw std::invalid_argument(
              "deviation_stats: deterministic stopping time outside [0, T]");
        const double t_floor = eta(nf, T, tau.value);
        tau_index[ti] = static_cast<std::int64_t>(
            std::llround(t_floor * static_cast<double>(nf) / T));
        break;
      }
      case StoppingTimeSpec::Kind::first_exit: {
        if (!(tau.value > 0.0))
          throw std::invalid_argument(
              "deviation_stats: exit radius must be > 0");
        std::int64_t hit = nf;
        for (std::int64_t i = 0; i <= nf; ++i) {
          double r2 = 0.0;
          const auto xi = fine.state(i);
          for (int j = 0; j < d; ++j) {
            const double c = xi[j] - p.x0[j];
            r2 += c * c;
          }
          if (r2 >= tau.value * tau.value) {
            hit = i;
            break;
          }
        }
        tau_index[ti] = hit;
        break;
      }
    }
  }

  DeviationSample out;
  out.abs_dev_at_tau.assign(taus.size(), 0.0);

  std::vector<double> b(d), sigma(d * d), w_acc(d), interp(d);
  std::int64_t c_step = -1;
  double max_dev = 0.0;
  double terminal_dev = 0.0;
  for (std::int64_t i = 0; i <= nf; ++i) {
    if (i % stride == 0) {
      const std::int64_t c = i / stride;
      const auto xc = coarse.state(c);
      for (int j = 0; j < d; ++j) interp[j] = xc[j];
      if (c < nc) {
        const double t0 = static_cast<double>(c) * hc;
        const double t1 = static_cast<double>(c + 1) * hc;
        step_coefficients(p, coarse.scheme, t0, t1, xc, b, sigma);
        std::fill(w_acc.begin(), w_acc.end(), 0.0);
        c_step = c;
      }
    } else {
      const double t_i = static_cast<double>(i) * T / static_cast<double>(nf);
      const double t_base = static_cast<double>(c_step) * hc;
      const auto xc = coarse.state(c_step);
      for (int j = 0; j < d; ++j) {
        double acc = xc[j] + (t_i - t_base) * b[j];
        for (int m = 0; m < d; ++m) acc += sigma[j * d + m] * w_acc[m];
        interp[j] = acc;
      }
    }
    double dev2 = 0.0;
    const auto xf = fine.state(i);
    for (int j = 0; j < d; ++j) {
      const double c = xf[j] - interp[j];
      dev2 += c * c;
    }
    const double dev = std::sqrt(dev2);
    max_dev = std::max(max_dev, dev);
    if (i == nf) terminal_dev = dev;
    for (std::size_t ti = 0; ti < taus.size(); ++ti)
      if (tau_index[ti] == i) out.abs_dev_at_tau[ti] = dev;
    if (i < nf) {
      const auto dw = w_fine.step(i);
      for (int j = 0; j < d; ++j) w_acc[j] += dw[j];
    }
  }
  out.sup_pow_p = std::pow(max_dev, p_exponent);
  out.terminal_pow_p = std::pow(terminal_dev, p_exponent);
  return out;
}

// Monte Carlo estimate of max_t E|X_t - X_{eta(t)}|^q over step midpoints,
// with X between grid points following the continuous-time one-step form.
// Midpoints are grid points one dyadic level down, so no resampling happens.
//
// The maximizing midpoint is selected on the first half of the paths and the
// returned mean comes from the second half only. Selecting and estimating on
// the same sample would bias the max upward by roughly sqrt(2 log n) standard
// errors, which would swamp the CLT band the estimate is checked against.
struct IncrementMomentReport {
  double estimate = 0.0;   // held-out mean at the selected midpoint
  double std_error = 0.0;  // standard error of that held-out mean
  std::int64_t argmax_index = 0;
  std::vector<double> midpoint_means;       // full-sample, for diagnostics
  std::vector<double> midpoint_std_errors;
};

inline IncrementMomentReport increment_moment(const SdeProblem& p,
                                              std::int64_t n_steps, double q,
                                              std::int64_t paths,
                                              std::uint64_t seed,
                                              int workers = 0) {
  if (!(q > 0.0)) throw std::invalid_argument("increment_moment: q must be > 0");
  if (paths < 16)
    throw std::invalid_argument("increment_moment: need at least 16 paths");
  p.validate();
  const int level = exact_log2(n_steps);
  const int d = p.dim_d;
  const double T = p.horizon_T;
  const double h = T / static_cast<double>(n_steps);
  const auto cells = static_cast<std::size_t>(n_steps);

  // Per-block partial sums; blocks are whole units of work, so the thread
  // schedule cannot reorder any addition. Even blocks form the selection
  // half, odd blocks the estimation half.
  const std::int64_t block = std::min<std::int64_t>(4096, paths / 8);
  const std::int64_t n_blocks = (paths + block - 1) / block;
  std::vector<std::vector<double>> sums(
      static_cast<std::size_t>(n_blocks), std::vector<double>(cells, 0.0));
  std::vector<std::vector<double>> sq_sums(
      static_cast<std::size_t>(n_blocks), std::vector<double>(cells, 0.0));

  parallel_blocks(n_blocks, workers, [&](std::int64_t b0, std::int64_t b1) {
    std::vector<double> b(d), sigma(d * d);
    for (std::int64_t blk = b0; blk < b1; ++blk) {
      auto& s = sums[static_cast<std::size_t>(blk)];
      auto& s2 = sq_sums[static_cast<std::size_t>(blk)];
      const std::int64_t p0 = blk * block;
      const std::int64_t p1 = std::min(paths, p0 + block);
      for (std::int64_t path = p0; path < p1; ++path) {
        const BrownianPath w_half =
            generate(d, level + 1, T, seed, static_cast<std::uint64_t>(path));
        const BrownianPath w = coarsen(w_half, level);
        const GridPath g = simulate(p, SchemeKind::standard, n_steps, w);
        for (std::int64_t k = 0; k < n_steps; ++k) {
          const double t0 =
              static_cast<double>(k) * T / static_cast<double>(n_steps);
          const auto xk = g.state(k);
          step_coefficients(p, SchemeKind::standard, t0, t0 + h, xk, b, sigma);
          const auto dw_half = w_half.step(2 * k);
          double norm2 = 0.0;
          for (int i = 0; i < d; ++i) {
            double u_i = 0.5 * h * b[i];
            for (int j = 0; j < d; ++j) u_i += sigma[i * d + j] * dw_half[j];
            norm2 += u_i * u_i;
          }
          const double value = std::pow(std::sqrt(norm2), q);
          s[static_cast<std::size_t>(k)] += value;
          s2[static_cast<std::size_t>(k)] += value * value;
        }
      }
    }
  });

  auto block_size = [&](std::int64_t blk) {
    return std::min(paths, (blk + 1) * block) - blk * block;
  };
  auto half_stats = [&](std::size_t k, int parity, MeanStdErr& out) {
    std::vector<double> ps, ps2;
    double count = 0.0;
    for (std::int64_t blk = parity; blk < n_blocks; blk += 2) {
      ps.push_back(sums[static_cast<std::size_t>(blk)][k]);
      ps2.push_back(sq_sums[static_cast<std::size_t>(blk)][k]);
      count += static_cast<double>(block_size(blk));
    }
    out.mean = pairwise_sum(ps) / count;
    const double m2 = pairwise_sum(ps2);
    double var = (m2 - count * out.mean * out.mean) / (count - 1.0);
    if (var < 0.0) var = 0.0;
    out.std_error = std::sqrt(var / count);
  };

  IncrementMomentReport rep;
  rep.midpoint_means.resize(cells);
  rep.midpoint_std_errors.resize(cells);
  double best_selection = -1.0;
  for (std::size_t k = 0; k < cells; ++k) {
    MeanStdErr full;
    {
      std::vector<double> ps, ps2;
      for (std::int64_t blk = 0; blk < n_blocks; ++blk) {
        ps.push_back(sums[static_cast<std::size_t>(blk)][k]);
        ps2.push_back(sq_sums[static_cast<std::size_t>(blk)][k]);
      }
      const double count = static_cast<double>(paths);
      full.mean = pairwise_sum(ps) / count;
      double var = (pairwise_sum(ps2) - count * full.mean * full.mean) /
                   (count - 1.0);
      if (var < 0.0) var = 0.0;
      full.std_error = std::sqrt(var / count);
    }
    rep.midpoint_means[k] = full.mean;
    rep.midpoint_std_errors[k] = full.std_error;
    MeanStdErr sel;
    half_stats(k, 0, sel);
    if (sel.mean > best_selection) {
      best_selection = sel.mean;
      rep.argmax_index = static_cast<std::int64_t>(k);
    }
  }
  MeanStdErr est;
  half_stats(static_cast<std::size_t>(rep.argmax_index), 1, est);
  rep.estimate = est.mean;
  rep.std_error = est.std_error;
  return rep;
}

}  // namespace irregular_sde
