#pragma once

// Fidelity evaluation: feature-distribution discrepancy, pattern coverage
// glue, bag-of-products basket vectors, real-vs-generated separability via
// logistic regression, and 2-d PCA export.

#include <algorithm>
#include <array>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "basketgen/domain.hpp"
#include "basketgen/lstm.hpp"
#include "basketgen/mining.hpp"
#include "basketgen/rng.hpp"
#include "basketgen/text.hpp"

namespace basketgen {

enum class Feature { category, subcategory, brand, price_bin, basket_size };

inline std::string feature_name(Feature f) {
  switch (f) {
    case Feature::category: return "category";
    case Feature::subcategory: return "subcategory";
    case Feature::brand: return "brand";
    case Feature::price_bin: return "price_bin";
    case Feature::basket_size: return "basket_size";
  }
  return "?";
}

inline Feature feature_from_name(const std::string& name) {
  for (Feature f : {Feature::category, Feature::subcategory, Feature::brand, Feature::price_bin,
                    Feature::basket_size})
    if (feature_name(f) == name) return f;
  throw Error("unknown feature '" + name + "'");
}

struct FeatureHistogram {
  std::string feature;
  std::map<std::string, double> freq;  // relative frequencies, sum 1
};

constexpr double kPriceBinWidth = 1.0;
constexpr double kPriceOverflow = 30.0;
constexpr std::size_t kTopBrands = 30;
constexpr std::size_t kBasketSizeLimit = 20;

inline std::string price_bin_label(double price) {
  if (price >= kPriceOverflow) return "30+";
  auto bin = static_cast<long>(std::floor(price / kPriceBinWidth));
  return std::to_string(bin) + "-" + std::to_string(bin + 1);
}

namespace detail {

inline std::map<std::string, double> raw_counts(const std::vector<Basket>& baskets, Feature f,
                                                const Catalog& catalog) {
  std::map<std::string, double> counts;
  for (const auto& b : baskets) {
    if (f == Feature::basket_size) {
      std::size_t size = b.product_ids.size();
      if (size <= kBasketSizeLimit) counts[std::to_string(size)] += 1.0;
      continue;
    }
    for (const auto& id : b.product_ids) {
      const auto& rec = catalog.get(id);
      switch (f) {
        case Feature::category: counts[rec.category] += 1.0; break;
        case Feature::subcategory: counts[rec.subcategory] += 1.0; break;
        case Feature::brand: counts[rec.brand] += 1.0; break;
        case Feature::price_bin: counts[price_bin_label(rec.price)] += 1.0; break;
        case Feature::basket_size: break;
      }
    }
  }
  return counts;
}

inline void normalize(std::map<std::string, double>& counts) {
  double total = 0.0;
  for (const auto& [k, v] : counts) total += v;
  if (total > 0.0)
    for (auto& [k, v] : counts) v /= total;
}

}  // namespace detail

struct HistogramComparison {
  FeatureHistogram real;
  FeatureHistogram gen;
  double max_abs_deviation_pp = 0.0;  // percentage points over the shared bins
};

// Relative-frequency histograms over the union of observed bins. Brand
// histograms are restricted to the top brands of the real data and
// renormalized; basket-size histograms only cover sizes <= 20.
inline HistogramComparison feature_histograms(const std::vector<Basket>& real_baskets,
                                              const std::vector<Basket>& gen_baskets, Feature f,
                                              const Catalog& catalog) {
  auto real_counts = detail::raw_counts(real_baskets, f, catalog);
  auto gen_counts = detail::raw_counts(gen_baskets, f, catalog);

  if (f == Feature::brand && real_counts.size() > kTopBrands) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [brand, c] : real_counts) ranked.emplace_back(-c, brand);
    std::sort(ranked.begin(), ranked.end());
    std::map<std::string, double> top_real, top_gen;
    for (std::size_t i = 0; i < kTopBrands; ++i) {
      const auto& brand = ranked[i].second;
      top_real[brand] = real_counts[brand];
      if (gen_counts.count(brand)) top_gen[brand] = gen_counts[brand];
    }
    real_counts = std::move(top_real);
    gen_counts = std::move(top_gen);
  }

  detail::normalize(real_counts);
  detail::normalize(gen_counts);

  HistogramComparison out;
  out.real = {feature_name(f), real_counts};
  out.gen = {feature_name(f), gen_counts};
  std::map<std::string, double> keys = real_counts;
  for (const auto& [k, v] : gen_counts) keys.emplace(k, 0.0);
  for (const auto& [k, v] : keys) {
    double r = real_counts.count(k) ? real_counts.at(k) : 0.0;
    double g = gen_counts.count(k) ? gen_counts.at(k) : 0.0;
    out.max_abs_deviation_pp = std::max(out.max_abs_deviation_pp, std::fabs(r - g) * 100.0);
  }
  return out;
}

// ---- sequence db construction -------------------------------------------

struct LabelTable {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> ids;
  int id(const std::string& label) {
    auto it = ids.find(label);
    if (it != ids.end()) return it->second;
    int nid = static_cast<int>(labels.size());
    labels.push_back(label);
    ids.emplace(label, nid);
    return nid;
  }
};

// Per-customer chronological itemset sequences at category or subcategory
// granularity (labels deduplicated within each week).
inline SequenceDb to_sequences(const std::vector<CustomerHistory>& histories,
                               const Catalog& catalog, bool subcategory, LabelTable& table) {
  SequenceDb db;
  for (const auto& h : histories) {
    std::vector<Itemset> seq;
    for (const auto& b : h.baskets) {
      Itemset is;
      for (const auto& id : b.product_ids) {
        const auto& rec = catalog.get(id);
        is.push_back(table.id(subcategory ? rec.subcategory : rec.category));
      }
      std::sort(is.begin(), is.end());
      is.erase(std::unique(is.begin(), is.end()), is.end());
      seq.push_back(std::move(is));
    }
    db.push_back(std::move(seq));
  }
  return db;
}

// ---- basket vectors -------------------------------------------------------

enum class BasketRepr { bag_category, bag_subcategory, sku_embedding };

inline std::string repr_name(BasketRepr r) {
  switch (r) {
    case BasketRepr::bag_category: return "bag_category";
    case BasketRepr::bag_subcategory: return "bag_subcategory";
    case BasketRepr::sku_embedding: return "sku_embedding";
  }
  return "?";
}

// Binary bag vectors over the catalog's label vocabulary, or the mean product
// embedding at sku level.
inline std::vector<std::vector<double>> basket_vectors(const std::vector<Basket>& baskets,
                                                       BasketRepr repr, const Catalog& catalog,
                                                       const EmbeddedCatalog* embeds = nullptr) {
  std::vector<std::vector<double>> out;
  if (repr == BasketRepr::sku_embedding) {
    if (!embeds) throw Error("basket_vectors: sku representation needs embeddings");
    for (const auto& b : baskets) {
      std::vector<double> mean(embeds->dim, 0.0);
      for (const auto& id : b.product_ids) {
        const auto& v = embeds->vec(id);
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += v[d];
      }
      if (!b.product_ids.empty())
        for (auto& x : mean) x /= static_cast<double>(b.product_ids.size());
      out.push_back(std::move(mean));
    }
    return out;
  }

  std::vector<std::string> labels;
  for (const auto& r : catalog.records)
    labels.push_back(repr == BasketRepr::bag_category ? r.category : r.subcategory);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < labels.size(); ++i) pos[labels[i]] = i;

  for (const auto& b : baskets) {
    std::vector<double> v(labels.size(), 0.0);
    for (const auto& id : b.product_ids) {
      const auto& rec = catalog.get(id);
      v[pos.at(repr == BasketRepr::bag_category ? rec.category : rec.subcategory)] = 1.0;
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---- separability ----------------------------------------------------------

struct SeparabilityReport {
  std::string representation;
  double accuracy = 0.0;
  std::size_t per_class = 0;  // balanced sample count per class
};

// Balance classes by subsampling the larger, 80/20 split per class, logistic
// regression by full-batch gradient descent (L2 1e-3, 500 epochs).
inline SeparabilityReport separability(const std::vector<std::vector<double>>& real_vecs,
                                       const std::vector<std::vector<double>>& gen_vecs,
                                       std::uint64_t seed, const std::string& repr = "") {
  if (real_vecs.size() < 10 || gen_vecs.size() < 10)
    throw Error("separability: need at least 10 samples per class");
  auto rng = make_rng(seed, "separability");
  std::size_t n = std::min(real_vecs.size(), gen_vecs.size());

  auto pick = [&](const std::vector<std::vector<double>>& src) {
    std::vector<std::size_t> idx(src.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<const std::vector<double>*> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(&src[idx[i]]);
    return out;
  };
  auto real = pick(real_vecs);
  auto gen = pick(gen_vecs);

  std::size_t train_n = (n * 8) / 10;
  if (train_n == 0 || train_n == n) throw Error("separability: split leaves an empty side");
  const std::size_t dim = real[0]->size();

  std::vector<double> w(dim + 1, 0.0);  // last entry is the bias
  const double lr = 0.5, l2 = 1e-3;
  const int epochs = 500;
  std::vector<double> grad(dim + 1);
  for (int e = 0; e < epochs; ++e) {
    std::fill(grad.begin(), grad.end(), 0.0);
    auto accum = [&](const std::vector<double>& x, double label) {
      double z = w[dim];
      for (std::size_t d = 0; d < dim; ++d) z += w[d] * x[d];
      double p = 1.0 / (1.0 + std::exp(-z));
      double g = p - label;
      for (std::size_t d = 0; d < dim; ++d) grad[d] += g * x[d];
      grad[dim] += g;
    };
    for (std::size_t i = 0; i < train_n; ++i) {
      accum(*real[i], 0.0);
      accum(*gen[i], 1.0);
    }
    double inv = 1.0 / static_cast<double>(2 * train_n);
    for (std::size_t d = 0; d <= dim; ++d) {
      double reg = d < dim ? l2 * w[d] : 0.0;
      w[d] -= lr * (grad[d] * inv + reg);
    }
  }

  std::size_t correct = 0, total = 0;
  auto test = [&](const std::vector<double>& x, double label) {
    double z = w[dim];
    for (std::size_t d = 0; d < dim; ++d) z += w[d] * x[d];
    if ((z > 0.0) == (label > 0.5)) ++correct;
    ++total;
  };
  for (std::size_t i = train_n; i < n; ++i) {
    test(*real[i], 0.0);
    test(*gen[i], 1.0);
  }
  return {repr, static_cast<double>(correct) / static_cast<double>(total), n};
}

// ---- 2-d linear projection -------------------------------------------------

struct Projection {
  std::vector<std::array<double, 2>> coords;
  double explained[2] = {0.0, 0.0};
  double total_variance = 0.0;
  bool degenerate = false;  // zero-variance input
};

// Mean-centered projection onto the top two principal directions, computed by
// power iteration with deflation.
inline Projection project_2d(const std::vector<std::vector<double>>& vectors) {
  if (vectors.size() < 2) throw Error("project_2d: need at least 2 vectors");
  const std::size_t n = vectors.size(), d = vectors[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& v : vectors)
    for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<double> cov(d * d, 0.0);
  for (const auto& v : vectors)
    for (std::size_t i = 0; i < d; ++i) {
      double xi = v[i] - mean[i];
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += xi * (v[j] - mean[j]);
    }
  for (auto& c : cov) c /= static_cast<double>(n - 1);

  Projection out;
  out.coords.assign(n, {0.0, 0.0});
  for (std::size_t i = 0; i < d; ++i) out.total_variance += cov[i * d + i];
  if (out.total_variance <= 1e-300) {
    out.degenerate = true;
    return out;
  }

  auto rng = make_rng(17, "pca-power");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> axes;
  auto orthogonalize = [&](std::vector<double>& x) {
    for (const auto& a : axes) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += x[i] * a[i];
      for (std::size_t i = 0; i < d; ++i) x[i] -= proj * a[i];
    }
  };
  for (int comp = 0; comp < 2 && static_cast<std::size_t>(comp) < d; ++comp) {
    std::vector<double> v(d);
    double nv = 0.0;
    do {  // random start orthogonal to the axes already found
      for (auto& x : v) x = gauss(rng);
      orthogonalize(v);
      nv = l2_norm(v);
    } while (nv <= 1e-12);
    for (auto& x : v) x /= nv;

    std::vector<double> next(d);
    for (int it = 0; it < 1000; ++it) {
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
        next[i] = s;
      }
      orthogonalize(next);  // keeps deflation exact for repeated eigenvalues
      double norm = l2_norm(next);
      if (norm <= 1e-300) break;  // no variance left; v stays a valid axis
      for (std::size_t i = 0; i < d; ++i) next[i] /= norm;
      double delta = 0.0;
      for (std::size_t i = 0; i < d; ++i) delta = std::max(delta, std::fabs(next[i] - v[i]));
      v = next;
      if (delta < 1e-12 && it > 2) break;
    }
    double lambda = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
      lambda += v[i] * s;
    }
    out.explained[comp] = std::max(lambda, 0.0);
    axes.push_back(v);
    // deflate
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] -= lambda * v[i] * v[j];
  }

  for (std::size_t k = 0; k < n; ++k)
    for (int comp = 0; comp < 2; ++comp) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (vectors[k][j] - mean[j]) * axes[comp][j];
      out.coords[k][comp] = s;
    }
  return out;
}

// ---- chi-squared -------------------------------------------------------------

namespace detail {

inline double gamma_p(double a, double x);  // regularized lower incomplete gamma

inline double gamma_q_cf(double a, double x) {
  // continued fraction for Q(a,x), x > a+1
  const int max_it = 300;
  const double eps = 1e-14, tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, dd = 1.0 / b, h = dd;
  for (int i = 1; i <= max_it; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    dd = an * dd + b;
    if (std::fabs(dd) < tiny) dd = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    dd = 1.0 / dd;
    double del = dd * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int i = 0; i < 300; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw Error("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

}  // namespace detail

// P(Chi2_df >= x)
inline double chi2_sf(double x, int df) {
  if (df <= 0) throw Error("chi2_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return 1.0 - detail::gamma_p(df / 2.0, x / 2.0);
}

// Pearson chi-squared p-value for an r x c contingency table of counts.
inline double chi2_contingency_pvalue(const std::vector<std::vector<double>>& table) {
  std::size_t r = table.size();
  if (r < 2) throw Error("chi2: need at least 2 rows");
  std::size_t c = table[0].size();
  std::vector<double> row(r, 0.0), col(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      row[i] += table[i][j];
      col[j] += table[i][j];
      total += table[i][j];
    }
  if (total <= 0.0) throw Error("chi2: empty table");
  double stat = 0.0;
  std::size_t used_cols = 0;
  for (std::size_t j = 0; j < c; ++j)
    if (col[j] > 0.0) ++used_cols;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double expect = row[i] * col[j] / total;
      if (expect > 0.0) {
        double diff = table[i][j] - expect;
        stat += diff * diff / expect;
      }
    }
  int df = static_cast<int>((r - 1) * (used_cols - 1));
  if (df <= 0) return 1.0;
  return chi2_sf(stat, df);
}

// ---- skip-gram structure check ----------------------------------------------

struct CosineMargin {
  double intra = 0.0;
  double inter = 0.0;
  double margin() const { return intra - inter; }
};

// Mean pairwise cosine of token input-vectors within vs across categories.
// Tokens are assigned to the single category whose products contain them;
// tokens spanning categories are excluded.
inline CosineMargin category_token_margin(const WordEmbeddingTable& table, const Catalog& catalog,
                                          const StopwordSet& stopwords = builtin_stopwords()) {
  std::unordered_map<std::string, std::string> token_cat;
  std::unordered_map<std::string, bool> ambiguous;
  for (const auto& rec : catalog.records)
    for (const auto& tok : preprocess(rec.name, rec.description, stopwords)) {
      auto it = token_cat.find(tok);
      if (it == token_cat.end())
        token_cat[tok] = rec.category;
      else if (it->second != rec.category)
        ambiguous[tok] = true;
    }
  std::vector<std::pair<int, std::string>> tokens;  // (vocab id, category)
  for (const auto& [tok, cat] : token_cat) {
    if (ambiguous.count(tok)) continue;
    int id = table.vocab.lookup(tok);
    if (id >= 0) tokens.emplace_back(id, cat);
  }
  CosineMargin m;
  double intra_n = 0.0, inter_n = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto vi = table.word_vector(tokens[i].first);
    for (std::size_t j = i + 1; j < tokens.size(); ++j) {
      double cs = cosine(vi, table.word_vector(tokens[j].first));
      if (tokens[i].second == tokens[j].second) {
        m.intra += cs;
        intra_n += 1.0;
      } else {
        m.inter += cs;
        inter_n += 1.0;
      }
    }
  }
  if (intra_n > 0.0) m.intra /= intra_n;
  if (inter_n > 0.0) m.inter /= inter_n;
  return m;
}

}  // namespace basketgen
