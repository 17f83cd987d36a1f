#pragma once

// Sequential pattern mining over per-customer itemset sequences. A pattern is
// an ordered list of itemsets contained (in order, gaps allowed, itemset
// inclusion) in a customer's sequence; support counts customers, each at most
// once. Mining grows patterns prefix-wise with apriori pruning; supports are
// exact.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "basketgen/tensor.hpp"

namespace basketgen {

using Itemset = std::vector<int>;         // sorted ascending, unique
using PatternSeq = std::vector<Itemset>;  // non-empty itemsets
using SequenceDb = std::vector<std::vector<Itemset>>;  // one sequence per customer

struct SequentialPattern {
  PatternSeq itemsets;
  std::size_t support = 0;
};

inline bool itemset_subset(const Itemset& small, const Itemset& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

// Greedy earliest-match embedding; correct for subsequence containment.
inline bool contains_pattern(const std::vector<Itemset>& seq, const PatternSeq& pat) {
  std::size_t pos = 0;
  for (const auto& want : pat) {
    while (pos < seq.size() && !itemset_subset(want, seq[pos])) ++pos;
    if (pos == seq.size()) return false;
    ++pos;
  }
  return true;
}

inline bool pattern_less(const PatternSeq& a, const PatternSeq& b) { return a < b; }

struct MinerConfig {
  double min_support_fraction = 0.01;
  std::size_t max_items = 3;  // total items across itemsets
};

inline std::size_t min_support_count(double fraction, std::size_t customers) {
  auto c = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(customers)));
  return std::max<std::size_t>(c, 1);
}

inline std::size_t count_support(const SequenceDb& db, const PatternSeq& pat) {
  std::size_t n = 0;
  for (const auto& seq : db)
    if (contains_pattern(seq, pat)) ++n;
  return n;
}

// All frequent patterns with support >= ceil(fraction * customers) and total
// item count <= max_items, sorted canonically.
inline std::vector<SequentialPattern> mine_patterns(const SequenceDb& db,
                                                    const MinerConfig& cfg = {}) {
  if (db.empty()) return {};
  if (cfg.min_support_fraction <= 0.0 || cfg.min_support_fraction > 1.0)
    throw Error("mine_patterns: min support fraction must be in (0, 1]");
  const std::size_t minsup = min_support_count(cfg.min_support_fraction, db.size());

  std::vector<int> items;
  for (const auto& seq : db)
    for (const auto& is : seq) items.insert(items.end(), is.begin(), is.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  std::vector<SequentialPattern> result;
  std::vector<PatternSeq> frontier;
  for (int a : items) {
    PatternSeq p{{a}};
    std::size_t sup = count_support(db, p);
    if (sup >= minsup) {
      result.push_back({p, sup});
      frontier.push_back(std::move(p));
    }
  }
  // keep only items that are frequent as singletons; any pattern containing
  // an infrequent item is itself infrequent
  std::vector<int> freq_items;
  for (const auto& p : frontier) freq_items.push_back(p[0][0]);

  std::size_t item_count = 1;
  while (!frontier.empty() && item_count < cfg.max_items) {
    ++item_count;
    std::vector<PatternSeq> next;
    for (const auto& p : frontier) {
      // sequence extension: append a new singleton itemset
      for (int a : freq_items) {
        PatternSeq cand = p;
        cand.push_back({a});
        std::size_t sup = count_support(db, cand);
        if (sup >= minsup) {
          result.push_back({cand, sup});
          next.push_back(std::move(cand));
        }
      }
      // itemset extension: grow the last itemset with a larger item
      for (int a : freq_items) {
        if (a <= p.back().back()) continue;
        PatternSeq cand = p;
        cand.back().push_back(a);
        std::size_t sup = count_support(db, cand);
        if (sup >= minsup) {
          result.push_back({cand, sup});
          next.push_back(std::move(cand));
        }
      }
    }
    frontier = std::move(next);
  }

  std::sort(result.begin(), result.end(),
            [](const SequentialPattern& a, const SequentialPattern& b) {
              return pattern_less(a.itemsets, b.itemsets);
            });
  return result;
}

// Fraction of the top-k most supported real patterns that also occur among
// the generated patterns. Ties at rank k break by lexicographic pattern
// order. k beyond the real pattern count divides by the actual count.
struct CoverageResult {
  double fraction = 0.0;
  std::size_t effective_k = 0;
  bool truncated = false;  // k exceeded the real pattern count
};

inline CoverageResult pattern_coverage(std::vector<SequentialPattern> real,
                                       const std::vector<SequentialPattern>& gen,
                                       std::size_t k) {
  CoverageResult out;
  if (real.empty() || k == 0) return out;
  std::sort(real.begin(), real.end(), [](const SequentialPattern& a, const SequentialPattern& b) {
    if (a.support != b.support) return a.support > b.support;
    return pattern_less(a.itemsets, b.itemsets);
  });
  out.truncated = k > real.size();
  out.effective_k = std::min(k, real.size());

  std::vector<PatternSeq> gen_keys;
  gen_keys.reserve(gen.size());
  for (const auto& g : gen) gen_keys.push_back(g.itemsets);
  std::sort(gen_keys.begin(), gen_keys.end());

  std::size_t matched = 0;
  for (std::size_t i = 0; i < out.effective_k; ++i)
    if (std::binary_search(gen_keys.begin(), gen_keys.end(), real[i].itemsets)) ++matched;
  out.fraction = static_cast<double>(matched) / static_cast<double>(out.effective_k);
  return out;
}

}  // namespace basketgen
