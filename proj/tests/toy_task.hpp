#pragma once

// Shared 2-d conditional Gaussian toy task: condition c in {0,1} selects the
// target mean (-0.5 or +0.5 per coordinate).

#include <random>
#include <vector>

#include "basketgen/gan.hpp"

namespace bgtest {

struct ToyTask {
  std::vector<basketgen::GanTrainSample> data;
  std::vector<std::vector<double>> conds = {{1.0, 0.0}, {0.0, 1.0}};
  std::vector<std::vector<double>> means = {{-0.5, -0.5}, {0.5, 0.5}};
  double sigma = 0.1;
};

inline ToyTask make_toy_task(std::size_t per_cond, std::uint64_t seed) {
  ToyTask t;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, t.sigma);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < per_cond; ++i) {
      basketgen::GanTrainSample s;
      s.cond = t.conds[c];
      s.x = {t.means[c][0] + noise(rng), t.means[c][1] + noise(rng)};
      t.data.push_back(std::move(s));
    }
  return t;
}

// Per-coordinate absolute error of the generator's conditional sample mean.
inline double toy_mean_error(const basketgen::BasketGan& gan, const ToyTask& t,
                             std::size_t cond_idx, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> mean(2, 0.0);
  for (std::size_t i = 0; i < draws; ++i) {
    auto x = gan.generate(gan.sample_noise(rng), t.conds[cond_idx]);
    mean[0] += x[0];
    mean[1] += x[1];
  }
  mean[0] /= static_cast<double>(draws);
  mean[1] /= static_cast<double>(draws);
  return std::max(std::fabs(mean[0] - t.means[cond_idx][0]),
                  std::fabs(mean[1] - t.means[cond_idx][1]));
}

}  // namespace bgtest
