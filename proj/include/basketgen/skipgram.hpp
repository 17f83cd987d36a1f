#pragma once

// Skip-gram word embeddings with negative sampling, trained on the product
// text corpus. Product vectors are the arithmetic mean of the input-side word
// vectors of the product's tokens.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "basketgen/rng.hpp"
#include "basketgen/tensor.hpp"
#include "basketgen/text.hpp"

namespace basketgen {

struct SkipgramConfig {
  std::size_t dim = 128;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 50;
  double lr_start = 0.05;
  double lr_end = 1e-4;
  std::int64_t min_count = 1;
  std::uint64_t seed = 1;
};

struct WordEmbeddingTable {
  Vocabulary vocab;
  std::size_t dim = 0;
  Tensor input;    // {vocab, dim}
  Tensor context;  // {vocab, dim}

  std::vector<double> word_vector(int id) const {
    auto b = input.v.begin() + static_cast<std::ptrdiff_t>(id) * static_cast<std::ptrdiff_t>(dim);
    return std::vector<double>(b, b + static_cast<std::ptrdiff_t>(dim));
  }
};

struct ProductVector {
  std::string product_id;
  std::vector<double> vec;
};

// (center, context) id pairs within the window, in deterministic corpus order.
inline std::vector<std::pair<int, int>> skipgram_pairs(const std::vector<std::string>& tokens,
                                                       const Vocabulary& vocab,
                                                       std::size_t window) {
  std::vector<int> ids;
  for (const auto& t : tokens) {
    int id = vocab.lookup(t);
    if (id >= 0) ids.push_back(id);
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::size_t lo = i >= window ? i - window : 0;
    std::size_t hi = std::min(ids.size() - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j)
      if (j != i) pairs.emplace_back(ids[i], ids[j]);
  }
  return pairs;
}

namespace detail {

// Deterministic unigram^0.75 sampler via cumulative weights.
class NoiseSampler {
 public:
  explicit NoiseSampler(const Vocabulary& vocab) {
    cum_.reserve(vocab.size());
    double total = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      total += std::pow(static_cast<double>(vocab.freq[i]), 0.75);
      cum_.push_back(total);
    }
  }
  int draw(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, cum_.back());
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u(rng));
    if (it == cum_.end()) --it;
    return static_cast<int>(it - cum_.begin());
  }

 private:
  std::vector<double> cum_;
};

}  // namespace detail

inline WordEmbeddingTable train_skipgram(const std::vector<ProductDocument>& corpus,
                                         const SkipgramConfig& cfg = {}) {
  if (corpus.empty()) throw Error("train_skipgram: empty corpus");
  WordEmbeddingTable table;
  table.vocab = Vocabulary::build(corpus, cfg.min_count);
  table.dim = cfg.dim;
  std::size_t V = table.vocab.size();
  if (V == 0) throw Error("train_skipgram: empty vocabulary");

  auto rng = make_rng(cfg.seed, "skipgram");
  table.input = Tensor({V, cfg.dim});
  table.context = Tensor({V, cfg.dim});
  std::uniform_real_distribution<double> u(-0.5 / static_cast<double>(cfg.dim),
                                           0.5 / static_cast<double>(cfg.dim));
  for (auto& x : table.input.v) x = u(rng);
  // context vectors start at zero, as in the reference word2vec trainer

  detail::NoiseSampler noise(table.vocab);

  std::size_t total_pairs = 0;
  std::vector<std::vector<std::pair<int, int>>> doc_pairs;
  doc_pairs.reserve(corpus.size());
  for (const auto& doc : corpus) {
    doc_pairs.push_back(skipgram_pairs(doc.tokens, table.vocab, cfg.window));
    total_pairs += doc_pairs.back().size();
  }
  if (total_pairs == 0) return table;

  const std::size_t d = cfg.dim;
  std::vector<double> accum(d);
  std::size_t seen = 0;
  const double span = static_cast<double>(total_pairs * cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& pairs : doc_pairs) {
      for (const auto& [center, ctx] : pairs) {
        double lr = cfg.lr_start +
                    (cfg.lr_end - cfg.lr_start) * (static_cast<double>(seen) / span);
        ++seen;
        double* vc = table.input.v.data() + static_cast<std::size_t>(center) * d;
        std::fill(accum.begin(), accum.end(), 0.0);
        for (std::size_t k = 0; k <= cfg.negatives; ++k) {
          int target;
          double label;
          if (k == 0) {
            target = ctx;
            label = 1.0;
          } else {
            target = noise.draw(rng);
            if (target == ctx) continue;
            label = 0.0;
          }
          double* ut = table.context.v.data() + static_cast<std::size_t>(target) * d;
          double score = 0.0;
          for (std::size_t i = 0; i < d; ++i) score += vc[i] * ut[i];
          double g = (label - 1.0 / (1.0 + std::exp(-score))) * lr;
          for (std::size_t i = 0; i < d; ++i) {
            accum[i] += g * ut[i];
            ut[i] += g * vc[i];
          }
        }
        for (std::size_t i = 0; i < d; ++i) vc[i] += accum[i];
      }
    }
  }
  return table;
}

// Mean of the document's in-vocabulary word input-vectors.
inline ProductVector product_vector(const ProductDocument& doc, const WordEmbeddingTable& table) {
  std::vector<double> mean(table.dim, 0.0);
  std::size_t n = 0;
  for (const auto& tok : doc.tokens) {
    int id = table.vocab.lookup(tok);
    if (id < 0) continue;  // out-of-vocabulary tokens are skipped
    const double* w = table.input.v.data() + static_cast<std::size_t>(id) * table.dim;
    for (std::size_t i = 0; i < table.dim; ++i) mean[i] += w[i];
    ++n;
  }
  if (n == 0)
    throw Error("product_vector: no in-vocabulary tokens for product '" + doc.product_id + "'");
  for (auto& x : mean) x /= static_cast<double>(n);
  return {doc.product_id, std::move(mean)};
}

}  // namespace basketgen
