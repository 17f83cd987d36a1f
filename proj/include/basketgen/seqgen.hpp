#pragma once

// Alternating generate/update loop: for each future week, sample a basket
// size from the k nearest customers of the current state, generate that many
// products conditioned on (state, week), then update the state with the
// generated basket.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "basketgen/domain.hpp"
#include "basketgen/gan.hpp"
#include "basketgen/lstm.hpp"
#include "basketgen/rng.hpp"

namespace basketgen {

struct CustomerIndexEntry {
  std::string customer_id;
  std::vector<double> hidden;
  std::vector<std::size_t> basket_sizes;  // historical multiset, non-empty
};

struct CustomerIndex {
  std::vector<CustomerIndexEntry> entries;

  static CustomerIndex build(const std::vector<CustomerHistory>& histories,
                             const LstmModel& model, const EmbeddedCatalog& embeds) {
    CustomerIndex idx;
    for (const auto& h : histories) {
      CustomerIndexEntry e;
      e.customer_id = h.customer_id;
      e.hidden = model.encode_history(h, embeds).hidden;
      for (const auto& b : h.baskets) e.basket_sizes.push_back(b.product_ids.size());
      if (e.basket_sizes.empty()) throw Error("customer index: no baskets for " + h.customer_id);
      idx.entries.push_back(std::move(e));
    }
    return idx;
  }

  const CustomerIndexEntry& get(const std::string& id) const {
    for (const auto& e : entries)
      if (e.customer_id == id) return e;
    throw Error("customer index: unknown customer '" + id + "'");
  }
};

// k ids by ascending L2 distance from the query state, ties by ascending
// customer id; k beyond the index size returns the full ranking.
inline std::vector<std::string> k_nearest_customers(const std::vector<double>& hidden,
                                                    const CustomerIndex& index, std::size_t k) {
  if (index.entries.empty()) throw Error("k_nearest_customers: empty index");
  if (k == 0) throw Error("k_nearest_customers: k must be >= 1");
  std::vector<std::pair<double, const CustomerIndexEntry*>> ranked;
  ranked.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    if (e.hidden.size() != hidden.size())
      throw Error("k_nearest_customers: state dimension mismatch");
    ranked.emplace_back(l2_distance_sq(hidden, e.hidden), &e);
  }
  k = std::min(k, ranked.size());
  auto cmp = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second->customer_id < b.second->customer_id;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    cmp);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(ranked[i].second->customer_id);
  return ids;
}

// Uniform draw from the multiset union of the neighbors' historical basket
// sizes, capped at max_size.
inline std::size_t sample_basket_size(const std::vector<std::string>& neighbor_ids,
                                      const CustomerIndex& index, std::mt19937_64& rng,
                                      std::size_t max_size) {
  std::vector<std::size_t> pool;
  for (const auto& id : neighbor_ids) {
    const auto& e = index.get(id);
    pool.insert(pool.end(), e.basket_sizes.begin(), e.basket_sizes.end());
  }
  if (pool.empty()) throw Error("sample_basket_size: empty size pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return std::min(pool[pick(rng)], max_size);
}

// Week one-hot over the training horizon, appended to the customer state.
inline std::vector<double> make_condition(const std::vector<double>& hidden, long week,
                                          long horizon) {
  if (horizon <= 0) throw Error("make_condition: horizon must be positive");
  std::vector<double> cond = hidden;
  cond.resize(hidden.size() + static_cast<std::size_t>(horizon), 0.0);
  long slot = ((week % horizon) + horizon) % horizon;
  cond[hidden.size() + static_cast<std::size_t>(slot)] = 1.0;
  return cond;
}

// n independent draws through the generator, each resolved to the nearest
// catalog product. Duplicates are kept: a basket is a multiset.
inline Basket generate_basket(const BasketGan& gan, const std::vector<double>& cond,
                              const std::string& customer_id, long week, std::size_t n,
                              const EmbeddedCatalog& embeds, std::mt19937_64& rng) {
  if (n == 0) throw Error("generate_basket: n must be >= 1");
  Basket b{customer_id, week, {}};
  for (std::size_t i = 0; i < n; ++i)
    b.product_ids.push_back(gan.generate_known_product(cond, embeds.products, rng));
  return b;
}

struct GenerationConfig {
  std::size_t k = 10;
  std::size_t weeks = 5;
  std::size_t max_basket_size = 50;
  long horizon = 5;
  std::uint64_t seed = 1;
};

struct WeekTrace {
  long week = 0;
  std::vector<std::string> neighbors;
  std::size_t sampled_size = 0;
};

struct GeneratedSequence {
  std::string customer_id;
  std::vector<Basket> baskets;
  std::vector<WeekTrace> trace;
};

// Algorithm: h0 from the history; per week sample size via k-nearest
// customers of the current state, generate the basket, update the state.
// Neighbors are recomputed each week from the updated state. Week labels
// continue the customer's calendar; the condition encoding wraps modulo the
// training horizon.
inline GeneratedSequence generate_sequence(const CustomerHistory& history,
                                           const GenerationConfig& cfg, const LstmModel& lstm,
                                           const BasketGan& gan, const CustomerIndex& index,
                                           const EmbeddedCatalog& embeds) {
  if (cfg.weeks == 0) throw Error("generate_sequence: weeks must be >= 1");
  GeneratedSequence out;
  out.customer_id = history.customer_id;
  auto rng = make_rng(cfg.seed, "gen-customer-" + history.customer_id);
  CustomerState state = lstm.encode_history(history, embeds);
  long last = history.last_week();
  try {
    for (std::size_t off = 1; off <= cfg.weeks; ++off) {
      WeekTrace t;
      t.week = last + static_cast<long>(off);
      t.neighbors = k_nearest_customers(state.hidden, index, cfg.k);
      t.sampled_size = sample_basket_size(t.neighbors, index, rng, cfg.max_basket_size);
      auto cond = make_condition(state.hidden, t.week, cfg.horizon);
      Basket b = generate_basket(gan, cond, history.customer_id, t.week, t.sampled_size, embeds,
                                 rng);
      state = lstm.update_state(state, b, embeds).state;
      out.baskets.push_back(std::move(b));
      out.trace.push_back(std::move(t));
    }
  } catch (const Error& e) {
    throw Error("generate_sequence for '" + history.customer_id + "' failed after " +
                std::to_string(out.baskets.size()) + "/" + std::to_string(cfg.weeks) +
                " weeks: " + e.what());
  }
  return out;
}

}  // namespace basketgen
