#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "basketgen/skipgram.hpp"
#include "basketgen/tensor.hpp"

namespace basketgen {

enum class Metric { l2, cosine };

struct Ranked {
  std::string id;
  double distance;
};

// Exhaustive scan over the catalog; k ids by ascending distance, ties broken
// by ascending product id. k larger than the catalog returns the full ranking.
inline std::vector<Ranked> nearest_products(const std::vector<double>& query,
                                            const std::vector<ProductVector>& catalog,
                                            std::size_t k, Metric metric = Metric::l2) {
  if (catalog.empty()) throw Error("nearest_products: empty catalog");
  if (k == 0) throw Error("nearest_products: k must be >= 1");
  std::vector<Ranked> all;
  all.reserve(catalog.size());
  for (const auto& p : catalog) {
    if (p.vec.size() != query.size())
      throw Error("nearest_products: dimension mismatch for product '" + p.product_id + "'");
    double d = metric == Metric::l2 ? l2_distance_sq(query, p.vec) : 1.0 - cosine(query, p.vec);
    all.push_back({p.product_id, d});
  }
  k = std::min(k, all.size());
  auto cmp = [](const Ranked& a, const Ranked& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), cmp);
  all.resize(k);
  if (metric == Metric::l2)
    for (auto& r : all) r.distance = std::sqrt(r.distance);
  return all;
}

// Index of the closest catalog entry under squared L2, same tie-break rule.
inline std::size_t nearest_index(const std::vector<double>& query,
                                 const std::vector<ProductVector>& catalog) {
  if (catalog.empty()) throw Error("nearest_index: empty catalog");
  std::size_t best = 0;
  double best_d = l2_distance_sq(query, catalog[0].vec);
  for (std::size_t i = 1; i < catalog.size(); ++i) {
    double d = l2_distance_sq(query, catalog[i].vec);
    if (d < best_d || (d == best_d && catalog[i].product_id < catalog[best].product_id)) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

}  // namespace basketgen
