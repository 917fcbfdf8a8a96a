#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <catch2/catch_amalgamated.hpp>

#include "irregular_sde/brownian.hpp"
#include "irregular_sde/errors.hpp"
#include "irregular_sde/normal_dist.hpp"
#include "irregular_sde/philox.hpp"
#include "irregular_sde/stats.hpp"

using namespace irregular_sde;

TEST_CASE("philox matches the published 4x32-10 test vectors") {
  // Known-answer vectors from the Random123 distribution.
  const auto zero = philox::block(0, {0, 0, 0, 0});
  CHECK(zero[0] == 0x6627e8d5u);
  CHECK(zero[1] == 0xe169c58du);
  CHECK(zero[2] == 0xbc57ac4cu);
  CHECK(zero[3] == 0x9b00dbd8u);

  const auto ones = philox::block(0xffffffffffffffffull,
                                  {0xffffffffu, 0xffffffffu, 0xffffffffu,
                                   0xffffffffu});
  CHECK(ones[0] == 0x408f276du);
  CHECK(ones[1] == 0x41c83b0eu);
  CHECK(ones[2] == 0xa20bc7c6u);
  CHECK(ones[3] == 0x6d5451fdu);
}

TEST_CASE("counter uniforms are strictly inside (0,1)") {
  for (std::uint64_t cell = 0; cell < 1000; ++cell) {
    const double u = counter_uniform(7, 3, cell);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("normal quantile matches an independent high-accuracy route") {
  // Cross-check against Boost's quantile on a dense grid.
  const boost::math::normal_distribution<double> nd;
  double max_err = 0.0;
  for (int i = 1; i < 20000; ++i) {
    const double u = i / 20000.0;
    max_err = std::max(max_err,
                       std::fabs(normal_quantile(u) -
                                 boost::math::quantile(nd, u)));
  }
  CHECK(max_err < 1e-9);
}

TEST_CASE("generate is deterministic per (seed, path) and independent across paths") {
  const BrownianPath a = generate(1, 3, 1.0, 42, 0);
  const BrownianPath b = generate(1, 3, 1.0, 42, 0);
  CHECK(a.increments == b.increments);

  const BrownianPath c = generate(1, 10, 1.0, 42, 0);
  const BrownianPath d = generate(1, 10, 1.0, 42, 1);
  CHECK(c.increments != d.increments);

  // Regeneration does not depend on what else was generated.
  const BrownianPath e = generate(1, 10, 1.0, 42, 0);
  CHECK(c.increments == e.increments);
}

TEST_CASE("generate rejects oversized grids") {
  CHECK_THROWS_AS(generate(1, 31, 1.0, 0, 0), resource_error);
}

TEST_CASE("first-increment mean sits in its CLT band") {
  // L = 4, T = 1: increments are N(0, 1/16); 1e5 paths.
  const int n_paths = 100000;
  std::vector<double> first(n_paths);
  for (int i = 0; i < n_paths; ++i)
    first[static_cast<std::size_t>(i)] =
        generate(1, 4, 1.0, 42, static_cast<std::uint64_t>(i)).increments[0];
  const auto ms = mean_std_error(first);
  const double band = 3.0 * std::sqrt(0.0625 / n_paths);
  CHECK(std::fabs(ms.mean) < band);

  // Sample variance within its own CLT band around 1/16.
  double var = 0.0;
  for (double x : first) var += (x - ms.mean) * (x - ms.mean);
  var /= (n_paths - 1);
  const double var_band = 3.0 * 0.0625 * std::sqrt(2.0 / (n_paths - 1));
  CHECK(std::fabs(var - 0.0625) < var_band);
}

TEST_CASE("Kolmogorov-Smirnov test against the increment law") {
  // 1e5 increments at L = 4, T = 1 vs N(0, 1/16); significance 1e-3.
  const int n = 100000;
  const double sd = 0.25;
  std::vector<double> sample;
  sample.reserve(n);
  for (int i = 0; sample.size() < static_cast<std::size_t>(n); ++i) {
    const BrownianPath p =
        generate(1, 4, 1.0, 7, static_cast<std::uint64_t>(i));
    for (double x : p.increments) {
      sample.push_back(x);
      if (sample.size() == static_cast<std::size_t>(n)) break;
    }
  }
  std::sort(sample.begin(), sample.end());
  double d_stat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = normal_cdf(sample[static_cast<std::size_t>(i)] / sd);
    d_stat = std::max(d_stat, std::fabs(f - (i + 1.0) / n));
    d_stat = std::max(d_stat, std::fabs(f - static_cast<double>(i) / n));
  }
  // Critical value at alpha = 1e-3: sqrt(ln(2/alpha)/2)/sqrt(n).
  const double critical = std::sqrt(std::log(2.0 / 1e-3) / 2.0) / std::sqrt(n);
  CHECK(d_stat < critical);
}

TEST_CASE("coarsen identity, telescoping and block sums") {
  const BrownianPath p = generate(2, 5, 2.0, 11, 3);
  const BrownianPath same = coarsen(p, p.level_L);
  CHECK(same.increments == p.increments);

  const BrownianPath one = coarsen(p, 0);
  for (int j = 0; j < p.dim_d; ++j) {
    double total = 0.0;
    for (std::int64_t k = 0; k < p.n_steps(); ++k)
      total += p.increments[static_cast<std::size_t>(k * p.dim_d + j)];
    CHECK(one.increments[static_cast<std::size_t>(j)] ==
          Catch::Approx(total).margin(1e-15));
  }

  BrownianPath tiny;
  tiny.dim_d = 1;
  tiny.level_L = 2;
  tiny.horizon_T = 1.0;
  tiny.increments = {1.0, 2.0, 3.0, 4.0};
  const BrownianPath half = coarsen(tiny, 1);
  CHECK(half.increments == std::vector<double>{3.0, 7.0});
}

TEST_CASE("staged coarsening is bit-identical to direct coarsening") {
  const BrownianPath p = generate(1, 8, 1.0, 99, 5);
  for (int m = 0; m <= 8; ++m)
    for (int k = 0; k <= m; ++k) {
      const BrownianPath direct = coarsen(p, k);
      const BrownianPath staged = coarsen(coarsen(p, m), k);
      REQUIRE(direct.increments == staged.increments);
    }
}

TEST_CASE("coarsen validates the target level") {
  const BrownianPath p = generate(1, 3, 1.0, 0, 0);
  CHECK_THROWS_AS(coarsen(p, 4), std::invalid_argument);
}
