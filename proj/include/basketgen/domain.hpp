#pragma once

// Shared domain types: catalogs, baskets, customer histories.

#include <string>
#include <unordered_map>
#include <vector>

#include "basketgen/skipgram.hpp"
#include "basketgen/tensor.hpp"

namespace basketgen {

struct CatalogRecord {
  std::string product_id;
  std::string name;
  std::string description;
  std::string category;
  std::string subcategory;
  std::string brand;
  double price = 0.0;
};

struct Catalog {
  std::vector<CatalogRecord> records;
  std::unordered_map<std::string, std::size_t> index;

  static Catalog from_records(std::vector<CatalogRecord> recs) {
    Catalog c;
    c.records = std::move(recs);
    for (std::size_t i = 0; i < c.records.size(); ++i) {
      const auto& r = c.records[i];
      if (r.product_id.empty()) throw Error("catalog: empty product_id at row " + std::to_string(i));
      if (r.category.empty() || r.subcategory.empty() || r.brand.empty())
        throw Error("catalog: empty category/subcategory/brand for product '" + r.product_id + "'");
      if (r.price < 0.0) throw Error("catalog: negative price for product '" + r.product_id + "'");
      if (!c.index.emplace(r.product_id, i).second)
        throw Error("catalog: duplicate product_id '" + r.product_id + "'");
    }
    return c;
  }

  bool has(const std::string& id) const { return index.count(id) != 0; }
  const CatalogRecord& get(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw Error("catalog: unknown product_id '" + id + "'");
    return records[it->second];
  }
  std::size_t size() const { return records.size(); }
};

// Product embedding vectors keyed by product id.
struct EmbeddedCatalog {
  std::vector<ProductVector> products;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t dim = 0;

  static EmbeddedCatalog from_vectors(std::vector<ProductVector> vecs) {
    EmbeddedCatalog e;
    e.products = std::move(vecs);
    if (!e.products.empty()) e.dim = e.products[0].vec.size();
    for (std::size_t i = 0; i < e.products.size(); ++i) {
      if (e.products[i].vec.size() != e.dim)
        throw Error("embedded catalog: inconsistent dimension for '" + e.products[i].product_id + "'");
      if (!e.index.emplace(e.products[i].product_id, i).second)
        throw Error("embedded catalog: duplicate product '" + e.products[i].product_id + "'");
    }
    return e;
  }

  const std::vector<double>& vec(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw Error("embedded catalog: unknown product '" + id + "'");
    return products[it->second].vec;
  }
};

// A basket is a multiset: duplicate product ids represent quantity purchases.
struct Basket {
  std::string customer_id;
  long week = 0;
  std::vector<std::string> product_ids;
};

struct CustomerHistory {
  std::string customer_id;
  std::vector<Basket> baskets;  // sorted by week, at least one

  long last_week() const { return baskets.empty() ? -1 : baskets.back().week; }
};

}  // namespace basketgen
