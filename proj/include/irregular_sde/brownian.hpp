#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "irregular_sde/errors.hpp"
#include "irregular_sde/normal_dist.hpp"
#include "irregular_sde/philox.hpp"

namespace irregular_sde {

// Increments of a d-dimensional Brownian motion on the dyadic grid with
// 2^level_L steps. Entry (k, j) is W^j_{t_{k+1}} - W^j_{t_k}. Values are a
// pure function of (master_seed, path_index, k, j): regenerating any path is
// bit-identical no matter what else was generated, and paths can be produced
// in parallel with no shared state.
struct BrownianPath {
  int dim_d = 1;
  int level_L = 0;
  double horizon_T = 1.0;
  std::vector<double> increments;  // n_steps * dim_d, row-major

  std::int64_t n_steps() const { return std::int64_t{1} << level_L; }

  std::span<const double> step(std::int64_t k) const {
    return {increments.data() + k * dim_d, static_cast<std::size_t>(dim_d)};
  }

  // W_{t_k} - W_0 per coordinate, by prefix sum.
  std::vector<double> value_at(std::int64_t k) const {
    std::vector<double> w(dim_d, 0.0);
    for (std::int64_t i = 0; i < k; ++i)
      for (int j = 0; j < dim_d; ++j) w[j] += increments[i * dim_d + j];
    return w;
  }
};

inline constexpr int kMaxBrownianLevel = 30;

inline BrownianPath generate(int dim_d, int level_L, double horizon_T,
                             std::uint64_t master_seed,
                             std::uint64_t path_index) {
  if (dim_d < 1) throw std::invalid_argument("generate: dim_d must be >= 1");
  if (level_L < 0) throw std::invalid_argument("generate: level_L must be >= 0");
  if (!(horizon_T > 0.0))
    throw std::invalid_argument("generate: horizon_T must be > 0");
  if (level_L > kMaxBrownianLevel)
    throw resource_error("generate: level_L > 30 exceeds the grid budget");
  BrownianPath path;
  path.dim_d = dim_d;
  path.level_L = level_L;
  path.horizon_T = horizon_T;
  const std::int64_t n = path.n_steps();
  const double scale = std::sqrt(horizon_T / static_cast<double>(n));
  path.increments.resize(static_cast<std::size_t>(n * dim_d));
  for (std::int64_t k = 0; k < n; ++k)
    for (int j = 0; j < dim_d; ++j) {
      const std::uint64_t cell = static_cast<std::uint64_t>(k) * dim_d + j;
      path.increments[static_cast<std::size_t>(k * dim_d + j)] =
          scale * normal_quantile(counter_uniform(master_seed, path_index, cell));
    }
  return path;
}

// Exact fine-to-coarse aggregation: one halving per level, so output entry k
// is the dyadic tree sum of its block. Staged coarsening is therefore
// bit-identical to direct coarsening.
inline BrownianPath coarsen(const BrownianPath& path, int target_level) {
  if (target_level < 0)
    throw std::invalid_argument("coarsen: target_level must be >= 0");
  if (target_level > path.level_L)
    throw std::invalid_argument(
        "coarsen: target_level must not exceed the path level");
  BrownianPath out = path;
  while (out.level_L > target_level) {
    const std::int64_t half = out.n_steps() / 2;
    const int d = out.dim_d;
    std::vector<double> merged(static_cast<std::size_t>(half * d));
    for (std::int64_t k = 0; k < half; ++k)
      for (int j = 0; j < d; ++j)
        merged[static_cast<std::size_t>(k * d + j)] =
            out.increments[static_cast<std::size_t>((2 * k) * d + j)] +
            out.increments[static_cast<std::size_t>((2 * k + 1) * d + j)];
    out.increments = std::move(merged);
    --out.level_L;
  }
  return out;
}

}  // namespace irregular_sde
