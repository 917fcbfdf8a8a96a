#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace irregular_sde {

// Pairwise (tree) summation. Besides the accuracy gain, the fixed reduction
// tree makes every Monte Carlo mean bit-identical regardless of how many
// worker threads filled the array.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct MeanStdErr {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanStdErr mean_std_error(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) throw std::invalid_argument("mean_std_error: empty sample");
  MeanStdErr out;
  out.mean = pairwise_sum(v) / static_cast<double>(n);
  if (n == 1) return out;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - out.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
  out.std_error = std::sqrt(var / static_cast<double>(n));
  return out;
}

// Per-cell accumulation for estimators that track a statistic at every grid
// cell across many paths. Paths are assigned to fixed blocks by index; block
// partials are merged with pairwise sums, so the result does not depend on
// the thread schedule.
class BlockAccumulator {
 public:
  BlockAccumulator(std::int64_t n_items, std::size_t n_cells,
                   std::int64_t block_size = 4096)
      : n_items_(n_items),
        n_cells_(n_cells),
        block_size_(block_size),
        n_blocks_((n_items + block_size - 1) / block_size),
        sums_(static_cast<std::size_t>(n_blocks_) * n_cells, 0.0),
        sq_sums_(static_cast<std::size_t>(n_blocks_) * n_cells, 0.0) {}

  void add(std::int64_t item, std::size_t cell, double value) {
    const std::size_t slot =
        static_cast<std::size_t>(item / block_size_) * n_cells_ + cell;
    sums_[slot] += value;
    sq_sums_[slot] += value * value;
  }

  MeanStdErr cell_stats(std::size_t cell) const {
    std::vector<double> partial(static_cast<std::size_t>(n_blocks_));
    std::vector<double> partial_sq(static_cast<std::size_t>(n_blocks_));
    for (std::int64_t b = 0; b < n_blocks_; ++b) {
      partial[static_cast<std::size_t>(b)] =
          sums_[static_cast<std::size_t>(b) * n_cells_ + cell];
      partial_sq[static_cast<std::size_t>(b)] =
          sq_sums_[static_cast<std::size_t>(b) * n_cells_ + cell];
    }
    const double n = static_cast<double>(n_items_);
    MeanStdErr out;
    out.mean = pairwise_sum(partial) / n;
    if (n_items_ > 1) {
      const double m2 = pairwise_sum(partial_sq);
      double var = (m2 - n * out.mean * out.mean) / (n - 1.0);
      if (var < 0.0) var = 0.0;
      out.std_error = std::sqrt(var / n);
    }
    return out;
  }

  std::size_t cells() const { return n_cells_; }

 private:
  std::int64_t n_items_;
  std::size_t n_cells_;
  std::int64_t block_size_;
  std::int64_t n_blocks_;
  std::vector<double> sums_;
  std::vector<double> sq_sums_;
};

struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double slope_std_error = std::numeric_limits<double>::quiet_NaN();
  double residual_std = 0.0;
  std::vector<double> residuals;
};

// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t m = x.size();
  if (m != y.size() || m < 2)
    throw std::invalid_argument("fit_line: need >= 2 matched points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.residuals.resize(m);
  double ssr = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    fit.residuals[i] = y[i] - (fit.intercept + fit.slope * x[i]);
    ssr += fit.residuals[i] * fit.residuals[i];
  }
  if (m > 2) {
    const double sigma2 = ssr / static_cast<double>(m - 2);
    fit.slope_std_error = std::sqrt(sigma2 / sxx);
    fit.residual_std = std::sqrt(ssr / static_cast<double>(m - 2));
  }
  return fit;
}

// Two-sided 95% confidence half-width for the fitted slope.
inline double slope_ci_halfwidth(const LineFit& fit, std::size_t m) {
  if (m <= 2 || !(fit.slope_std_error > 0.0)) return 0.0;
  const boost::math::students_t dist(static_cast<double>(m - 2));
  return boost::math::quantile(dist, 0.975) * fit.slope_std_error;
}

}  // namespace irregular_sde
