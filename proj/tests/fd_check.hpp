#pragma once

// Central finite-difference gradient oracle. Lives in test code only and is
// independent of the backward() implementation it checks.

#include <cmath>
#include <functional>
#include <random>

#include "basketgen/graph.hpp"

namespace bgtest {

using basketgen::NodePtr;
using basketgen::Parameter;
using basketgen::Tensor;

// d(eval)/d(storage), one entry at a time, via central differences.
inline Tensor fd_gradient(std::vector<double>& storage, const std::function<double()>& eval,
                          double h = 1e-4) {
  Tensor g({storage.size()});
  for (std::size_t i = 0; i < storage.size(); ++i) {
    double keep = storage[i];
    storage[i] = keep + h;
    double up = eval();
    storage[i] = keep - h;
    double down = eval();
    storage[i] = keep;
    g.v[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max over entries of |a-b| / max(floor, |a|, |b|)
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double abs_floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({abs_floor, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline Tensor rand_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                          double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.v) x = u(rng);
  return t;
}

// Random values bounded away from zero, for ops with kinks at the origin.
inline Tensor rand_tensor_away_from_zero(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                         double min_abs = 0.05) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(min_abs, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& x : t.v) x = (sign(rng) ? 1.0 : -1.0) * u(rng);
  return t;
}

}  // namespace bgtest
