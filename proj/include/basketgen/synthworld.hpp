#pragma once

// Synthetic retail world with planted structure: customers belong to latent
// personas with concentrated category preferences and week-to-week category
// Markov chains; product text shares word pools within a category so the
// embedding stage has learnable structure. The ground-truth manifest records
// the personas and the analytically derived top planted category bigrams.

#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "basketgen/domain.hpp"
#include "basketgen/rng.hpp"
#include "basketgen/text.hpp"

namespace basketgen {

struct PersonaSpec {
  double share = 1.0;
  std::vector<double> category_preferences;        // initial theme distribution
  std::vector<std::vector<double>> transition;     // theme Markov chain, rows sum 1
  double basket_size_lambda = 2.5;                 // size = 1 + Poisson(lambda)
};

struct SyntheticWorldConfig {
  std::size_t customers = 1000;
  std::size_t products = 50;
  std::size_t categories = 8;
  std::size_t personas = 3;
  long horizon = 5;
  std::vector<PersonaSpec> persona_specs;          // built from defaults when empty
  std::vector<std::pair<double, double>> price_log_params;  // per category (mu, sigma)
  std::size_t words_per_category = 24;
  std::size_t max_basket_size = 20;
  std::uint64_t seed = 1;
};

struct SyntheticWorld {
  Catalog catalog;
  std::vector<CustomerHistory> histories;
  nlohmann::json manifest;
};

namespace detail {

inline std::string category_name(std::size_t i) {
  static const std::vector<std::string> names = {
      "hair_care",   "skin_care", "oral_care",  "fragrance",   "vitamins",  "baby_care",
      "household",   "beauty_tools", "first_aid", "paper_goods", "snacks",   "beverages"};
  if (i < names.size()) return names[i];
  return "category" + std::to_string(i + 1);
}

// Pronounceable unique words from consonant-vowel syllables.
class WordForge {
 public:
  explicit WordForge(std::uint64_t seed) : rng_(seed) {}

  std::string make(const StopwordSet& avoid) {
    static const char* consonants = "bcdfglmnprstvz";
    static const char* vowels = "aeiou";
    std::uniform_int_distribution<int> n_syll(2, 3);
    std::uniform_int_distribution<int> c(0, 13), v(0, 4);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::string w;
      int n = n_syll(rng_);
      for (int s = 0; s < n; ++s) {
        w += consonants[c(rng_)];
        w += vowels[v(rng_)];
      }
      if (!used_.count(w) && !avoid.count(w)) {
        used_.insert(w);
        return w;
      }
    }
    throw Error("word forge: exhausted unique words");
  }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

inline void validate_world_config(const SyntheticWorldConfig& cfg) {
  if (cfg.customers == 0 || cfg.products == 0 || cfg.categories == 0 || cfg.personas == 0)
    throw Error("synthetic world: all counts must be positive");
  if (cfg.products < cfg.categories)
    throw Error("synthetic world: need at least one product per category");
  if (cfg.horizon <= 0) throw Error("synthetic world: horizon must be >= 1");
  for (const auto& p : cfg.persona_specs) {
    if (p.category_preferences.size() != cfg.categories ||
        p.transition.size() != cfg.categories)
      throw Error("synthetic world: persona spec dimensions do not match categories");
    double psum = 0.0;
    for (double x : p.category_preferences) psum += x;
    if (std::fabs(psum - 1.0) > 1e-9)
      throw Error("synthetic world: persona preferences must sum to 1");
    for (const auto& row : p.transition) {
      double rsum = 0.0;
      for (double x : row) rsum += x;
      if (std::fabs(rsum - 1.0) > 1e-9)
        throw Error("synthetic world: transition rows must sum to 1");
    }
  }
}

// Personas own interleaved category subsets (c mod personas) and cycle
// through them with a strong forward bias, planting clear bigrams.
inline std::vector<PersonaSpec> default_personas(const SyntheticWorldConfig& cfg) {
  std::vector<PersonaSpec> specs;
  for (std::size_t p = 0; p < cfg.personas; ++p) {
    PersonaSpec s;
    s.share = 1.0 / static_cast<double>(cfg.personas);
    s.basket_size_lambda = 1.8 + 0.7 * static_cast<double>(p % 4);
    std::vector<std::size_t> own;
    for (std::size_t c = p; c < cfg.categories; c += cfg.personas) own.push_back(c);
    if (own.empty()) own.push_back(p % cfg.categories);

    s.category_preferences.assign(cfg.categories, 0.0);
    for (std::size_t i = 0; i < own.size(); ++i)
      s.category_preferences[own[i]] =
          static_cast<double>(own.size() - i);  // mildly skewed toward the first
    double total = 0.0;
    for (double x : s.category_preferences) total += x;
    for (double& x : s.category_preferences) x /= total;

    s.transition.assign(cfg.categories, std::vector<double>(cfg.categories, 0.0));
    for (std::size_t i = 0; i < cfg.categories; ++i) {
      auto it = std::find(own.begin(), own.end(), i);
      if (it == own.end()) {
        // themes outside the persona's set are unreachable; send them home
        s.transition[i][own[0]] = 1.0;
        continue;
      }
      std::size_t pos = static_cast<std::size_t>(it - own.begin());
      std::size_t next = own[(pos + 1) % own.size()];
      if (own.size() == 1) {
        s.transition[i][i] = 1.0;
      } else {
        s.transition[i][next] += 0.7;
        s.transition[i][i] += 0.2;
        for (std::size_t j : own) s.transition[i][j] += 0.1 / static_cast<double>(own.size());
      }
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace detail

inline SyntheticWorld generate_synthetic_world(SyntheticWorldConfig cfg) {
  if (cfg.persona_specs.empty()) cfg.persona_specs = detail::default_personas(cfg);
  if (cfg.persona_specs.size() != cfg.personas)
    throw Error("synthetic world: persona_specs size must match personas");
  detail::validate_world_config(cfg);
  if (cfg.price_log_params.empty())
    for (std::size_t c = 0; c < cfg.categories; ++c)
      cfg.price_log_params.emplace_back(std::log(2.0 + static_cast<double>(c % 6) * 1.5), 0.45);

  const auto& stopwords = builtin_stopwords();
  auto rng = make_rng(cfg.seed, "world");

  // word pools, brands and subcategory labels per category
  detail::WordForge forge(sub_seed(cfg.seed, "world-words"));
  std::vector<std::vector<std::string>> pools(cfg.categories);
  std::vector<std::vector<std::string>> brands(cfg.categories);
  for (std::size_t c = 0; c < cfg.categories; ++c) {
    for (std::size_t w = 0; w < cfg.words_per_category; ++w)
      pools[c].push_back(forge.make(stopwords));
    for (int b = 0; b < 3; ++b) {
      std::string brand = forge.make(stopwords);
      brand[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(brand[0])));
      brands[c].push_back(brand);
    }
  }
  static const char* kSubKinds[3] = {"basic", "premium", "travel"};

  // catalog
  std::vector<CatalogRecord> recs;
  std::vector<std::vector<std::string>> products_by_cat(cfg.categories);
  int id_width = static_cast<int>(std::to_string(cfg.products).size());
  for (std::size_t i = 0; i < cfg.products; ++i) {
    std::size_t c = i % cfg.categories;
    CatalogRecord r;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "P%0*zu", id_width, i + 1);
    r.product_id = idbuf;
    r.category = detail::category_name(c);
    r.subcategory = r.category + "_" + kSubKinds[i / cfg.categories % 3];
    std::uniform_int_distribution<std::size_t> pick_brand(0, brands[c].size() - 1);
    r.brand = brands[c][pick_brand(rng)];

    auto pick_word = [&] {
      std::uniform_int_distribution<std::size_t> pw(0, pools[c].size() - 1);
      return pools[c][pw(rng)];
    };
    std::string w1 = pick_word(), w2 = pick_word(), w3 = pick_word(), w4 = pick_word(),
                w5 = pick_word();
    r.name = r.brand + " " + w1 + " " + w2;
    r.description = "the " + w3 + " " + w1 + " for " + w4 + " and " + w5;

    std::lognormal_distribution<double> price(cfg.price_log_params[c % cfg.price_log_params.size()].first,
                                              cfg.price_log_params[c % cfg.price_log_params.size()].second);
    r.price = std::round(price(rng) * 100.0) / 100.0;
    products_by_cat[c].push_back(r.product_id);
    recs.push_back(std::move(r));
  }

  // customers
  std::vector<double> shares;
  for (const auto& p : cfg.persona_specs) shares.push_back(p.share);
  std::discrete_distribution<std::size_t> pick_persona(shares.begin(), shares.end());

  SyntheticWorld world;
  world.catalog = Catalog::from_records(std::move(recs));
  nlohmann::json customer_personas = nlohmann::json::object();

  int cust_width = static_cast<int>(std::to_string(cfg.customers).size());
  for (std::size_t ci = 0; ci < cfg.customers; ++ci) {
    char cbuf[32];
    std::snprintf(cbuf, sizeof(cbuf), "C%0*zu", cust_width, ci + 1);
    CustomerHistory h{cbuf, {}};
    std::size_t persona = pick_persona(rng);
    customer_personas[h.customer_id] = persona;
    const auto& spec = cfg.persona_specs[persona];

    std::discrete_distribution<std::size_t> pick_theme(spec.category_preferences.begin(),
                                                       spec.category_preferences.end());
    std::size_t theme = pick_theme(rng);
    std::poisson_distribution<std::size_t> extra(spec.basket_size_lambda);
    for (long week = 0; week < cfg.horizon; ++week) {
      std::size_t size = std::min<std::size_t>(1 + extra(rng), cfg.max_basket_size);
      Basket b{h.customer_id, week, {}};
      const auto& shelf = products_by_cat[theme];
      std::uniform_int_distribution<std::size_t> pick_prod(0, shelf.size() - 1);
      for (std::size_t i = 0; i < size; ++i) b.product_ids.push_back(shelf[pick_prod(rng)]);
      h.baskets.push_back(std::move(b));
      std::discrete_distribution<std::size_t> next(spec.transition[theme].begin(),
                                                   spec.transition[theme].end());
      theme = next(rng);
    }
    world.histories.push_back(std::move(h));
  }

  // analytically derived planted bigrams: weight of (a -> b) is the average
  // over weeks and personas of P(theme_w = a, theme_{w+1} = b)
  std::vector<std::tuple<double, std::size_t, std::size_t>> bigrams;
  for (std::size_t a = 0; a < cfg.categories; ++a)
    for (std::size_t b = 0; b < cfg.categories; ++b) {
      double weight = 0.0;
      for (const auto& spec : cfg.persona_specs) {
        std::vector<double> dist = spec.category_preferences;
        for (long w = 0; w + 1 < cfg.horizon; ++w) {
          weight += spec.share * dist[a] * spec.transition[a][b] /
                    static_cast<double>(cfg.horizon - 1);
          std::vector<double> next(cfg.categories, 0.0);
          for (std::size_t i = 0; i < cfg.categories; ++i)
            for (std::size_t j = 0; j < cfg.categories; ++j)
              next[j] += dist[i] * spec.transition[i][j];
          dist = std::move(next);
        }
      }
      if (weight > 0.0) bigrams.emplace_back(weight, a, b);
    }
  std::sort(bigrams.begin(), bigrams.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    return std::tie(std::get<1>(x), std::get<2>(x)) < std::tie(std::get<1>(y), std::get<2>(y));
  });

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["customers"] = cfg.customers;
  manifest["products"] = cfg.products;
  manifest["categories"] = cfg.categories;
  manifest["personas"] = cfg.personas;
  manifest["horizon"] = cfg.horizon;
  nlohmann::json cat_names = nlohmann::json::array();
  for (std::size_t c = 0; c < cfg.categories; ++c) cat_names.push_back(detail::category_name(c));
  manifest["category_names"] = cat_names;
  nlohmann::json persona_json = nlohmann::json::array();
  for (const auto& p : cfg.persona_specs) {
    nlohmann::json pj;
    pj["share"] = p.share;
    pj["category_preferences"] = p.category_preferences;
    pj["transition"] = p.transition;
    pj["basket_size_lambda"] = p.basket_size_lambda;
    persona_json.push_back(std::move(pj));
  }
  manifest["personas_spec"] = std::move(persona_json);
  manifest["customer_personas"] = std::move(customer_personas);
  nlohmann::json big = nlohmann::json::array();
  for (const auto& [w, a, b] : bigrams) {
    nlohmann::json bj;
    bj["from"] = detail::category_name(a);
    bj["to"] = detail::category_name(b);
    bj["weight"] = w;
    big.push_back(std::move(bj));
  }
  manifest["planted_bigrams"] = std::move(big);
  world.manifest = std::move(manifest);
  return world;
}

}  // namespace basketgen
