#pragma once

// Dataset schemas, CSV ingestion/export and the pipeline configuration file.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "basketgen/csv.hpp"
#include "basketgen/domain.hpp"
#include "basketgen/skipgram.hpp"

namespace basketgen {

struct MissingInputError : Error {
  explicit MissingInputError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

inline void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p))
    throw MissingInputError("missing " + what + ": " + p.string() +
                            " (run the producing stage first)");
}

// ---- catalog csv -----------------------------------------------------------

inline void write_catalog(const std::filesystem::path& path, const Catalog& catalog) {
  std::string out = csv_row({"product_id", "name", "description", "category", "subcategory",
                             "brand", "price"});
  for (const auto& r : catalog.records)
    out += csv_row({r.product_id, r.name, r.description, r.category, r.subcategory, r.brand,
                    num_str(r.price)});
  atomic_write_text(path, out);
}

inline Catalog read_catalog(const std::filesystem::path& path) {
  require_file(path, "catalog csv");
  auto rows = read_csv(path);
  if (rows.empty() || rows[0] != std::vector<std::string>{"product_id", "name", "description",
                                                          "category", "subcategory", "brand",
                                                          "price"})
    throw Error("catalog csv: bad header in " + path.string());
  std::vector<CatalogRecord> recs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 7)
      throw Error("catalog csv: row " + std::to_string(i + 1) + " has " +
                  std::to_string(rows[i].size()) + " fields, want 7");
    CatalogRecord r;
    r.product_id = rows[i][0];
    r.name = rows[i][1];
    r.description = rows[i][2];
    r.category = rows[i][3];
    r.subcategory = rows[i][4];
    r.brand = rows[i][5];
    r.price = parse_num(rows[i][6], "price", i + 1);
    recs.push_back(std::move(r));
  }
  return Catalog::from_records(std::move(recs));
}

// ---- transactions csv --------------------------------------------------------

struct TransactionRecord {
  std::string customer_id;
  long week = 0;
  std::string product_id;
  long quantity = 1;
  bool generated = false;
};

// Group flat records into per-customer week-sorted histories; quantities
// expand into multiset multiplicity. Customers ordered by id.
inline std::vector<CustomerHistory> group_histories(const std::vector<TransactionRecord>& recs) {
  std::map<std::string, std::map<long, Basket>> by_customer;
  for (const auto& r : recs) {
    Basket& b = by_customer[r.customer_id][r.week];
    b.customer_id = r.customer_id;
    b.week = r.week;
    for (long q = 0; q < r.quantity; ++q) b.product_ids.push_back(r.product_id);
  }
  std::vector<CustomerHistory> out;
  for (auto& [cid, weeks] : by_customer) {
    CustomerHistory h{cid, {}};
    for (auto& [week, basket] : weeks) h.baskets.push_back(std::move(basket));
    out.push_back(std::move(h));
  }
  return out;
}

inline void append_transaction_rows(std::string& out, const std::vector<CustomerHistory>& hs,
                                    bool with_flag, bool generated) {
  for (const auto& h : hs)
    for (const auto& b : h.baskets) {
      std::map<std::string, long> qty;
      for (const auto& id : b.product_ids) ++qty[id];
      for (const auto& [id, q] : qty) {
        std::vector<std::string> fields = {h.customer_id, std::to_string(b.week), id,
                                           std::to_string(q)};
        if (with_flag) fields.push_back(generated ? "1" : "0");
        out += csv_row(fields);
      }
    }
}

inline void write_transactions(const std::filesystem::path& path,
                               const std::vector<CustomerHistory>& hs) {
  std::string out = csv_row({"customer_id", "week", "product_id", "quantity"});
  append_transaction_rows(out, hs, false, false);
  atomic_write_text(path, out);
}

// Same schema as transactions plus a column marking generated rows; history
// rows carry 0, generated continuation rows carry 1.
inline void write_generated(const std::filesystem::path& path,
                            const std::vector<CustomerHistory>& history,
                            const std::vector<CustomerHistory>& generated) {
  std::string out = csv_row({"customer_id", "week", "product_id", "quantity", "generated"});
  append_transaction_rows(out, history, true, false);
  append_transaction_rows(out, generated, true, true);
  atomic_write_text(path, out);
}

inline std::vector<TransactionRecord> read_transaction_rows(const std::filesystem::path& path,
                                                            const Catalog& catalog) {
  require_file(path, "transactions csv");
  auto rows = read_csv(path);
  if (rows.empty()) throw Error("transactions csv: empty file " + path.string());
  bool with_flag;
  if (rows[0] == std::vector<std::string>{"customer_id", "week", "product_id", "quantity"})
    with_flag = false;
  else if (rows[0] == std::vector<std::string>{"customer_id", "week", "product_id", "quantity",
                                               "generated"})
    with_flag = true;
  else
    throw Error("transactions csv: bad header in " + path.string());

  std::vector<TransactionRecord> recs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != (with_flag ? 5u : 4u))
      throw Error("transactions csv: row " + std::to_string(i + 1) + " has " +
                  std::to_string(rows[i].size()) + " fields");
    TransactionRecord r;
    r.customer_id = rows[i][0];
    r.week = parse_int(rows[i][1], "week", i + 1);
    r.product_id = rows[i][2];
    r.quantity = parse_int(rows[i][3], "quantity", i + 1);
    if (with_flag) r.generated = parse_int(rows[i][4], "generated", i + 1) != 0;
    if (r.week < 0) throw Error("transactions csv: negative week at row " + std::to_string(i + 1));
    if (r.quantity <= 0)
      throw Error("transactions csv: non-positive quantity at row " + std::to_string(i + 1));
    if (!catalog.has(r.product_id))
      throw Error("transactions csv: unknown product '" + r.product_id + "' at row " +
                  std::to_string(i + 1));
    recs.push_back(std::move(r));
  }
  return recs;
}

inline std::vector<CustomerHistory> read_transactions(const std::filesystem::path& path,
                                                      const Catalog& catalog) {
  return group_histories(read_transaction_rows(path, catalog));
}

struct GeneratedData {
  std::vector<CustomerHistory> history;   // rows flagged 0
  std::vector<CustomerHistory> generated; // rows flagged 1
};

inline GeneratedData read_generated(const std::filesystem::path& path, const Catalog& catalog) {
  auto recs = read_transaction_rows(path, catalog);
  std::vector<TransactionRecord> past, future;
  for (auto& r : recs) (r.generated ? future : past).push_back(r);
  return {group_histories(past), group_histories(future)};
}

// ---- embeddings csv ------------------------------------------------------------

inline void write_embeddings(const std::filesystem::path& path,
                             const std::vector<ProductVector>& vecs,
                             const std::string& key_column = "product_id") {
  if (vecs.empty()) throw Error("write_embeddings: nothing to write");
  std::vector<std::string> header = {key_column};
  for (std::size_t d = 0; d < vecs[0].vec.size(); ++d) header.push_back("e" + std::to_string(d));
  std::string out = csv_row(header);
  for (const auto& v : vecs) {
    std::vector<std::string> fields = {v.product_id};
    for (double x : v.vec) fields.push_back(num_str(x));
    out += csv_row(fields);
  }
  atomic_write_text(path, out);
}

inline std::vector<ProductVector> read_embeddings(const std::filesystem::path& path) {
  require_file(path, "embeddings csv");
  auto rows = read_csv(path);
  if (rows.size() < 2) throw Error("embeddings csv: no data in " + path.string());
  std::vector<ProductVector> out;
  std::size_t dim = rows[0].size() - 1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != dim + 1)
      throw Error("embeddings csv: ragged row " + std::to_string(i + 1));
    ProductVector v;
    v.product_id = rows[i][0];
    for (std::size_t d = 0; d < dim; ++d)
      v.vec.push_back(parse_num(rows[i][d + 1], "embedding", i + 1));
    out.push_back(std::move(v));
  }
  return out;
}

// ---- pipeline configuration -----------------------------------------------------

// Flat key = value file; # starts a comment. Unknown keys are errors.
struct PipelineConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "out";

  // synthetic world
  std::size_t world_customers = 1000;
  std::size_t world_products = 50;
  std::size_t world_categories = 8;
  std::size_t world_personas = 3;
  long world_horizon = 5;
  std::size_t world_max_basket = 20;

  // product embeddings
  std::size_t embed_dim = 128;
  std::size_t embed_window = 5;
  std::size_t embed_negatives = 5;
  std::size_t embed_epochs = 50;

  // customer lstm
  std::size_t lstm_hidden = 128;
  std::size_t lstm_epochs = 25;
  double lstm_lr = 1e-3;

  // gan
  std::size_t gan_z_dim = 64;
  std::size_t gan_hidden = 256;
  double gan_lambda = 10.0;
  double gan_lr = 1e-4;
  double gan_beta1 = 0.5;
  double gan_beta2 = 0.9;
  std::size_t gan_n_critic = 5;
  std::size_t gan_epochs = 30;
  std::size_t gan_batch = 64;
  double gan_clip = 0.01;
  double gan_divergence_bound = 1e4;

  // generation
  std::size_t gen_k = 10;
  std::size_t gen_weeks = 5;
  std::size_t gen_max_basket = 50;
  std::string gen_customers = "all";  // "all" or a path to a file of customer ids

  // evaluation
  double eval_min_support = 0.01;
  std::size_t eval_max_pattern_items = 3;
  std::size_t eval_top_k = 20;

  void apply(const std::string& key, const std::string& value);
  void validate() const;
  std::string serialize() const;
};

namespace detail {
inline std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError("config: bad unsigned value '" + v + "' for " + key);
  }
}
inline long to_long(const std::string& v, const std::string& key) {
  try {
    return std::stol(v);
  } catch (...) {
    throw ConfigError("config: bad integer value '" + v + "' for " + key);
  }
}
inline double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("config: bad numeric value '" + v + "' for " + key);
  }
}
}  // namespace detail

inline void PipelineConfig::apply(const std::string& key, const std::string& value) {
  using detail::to_double;
  using detail::to_long;
  using detail::to_u64;
  if (key == "seed") seed = to_u64(value, key);
  else if (key == "out_dir") out_dir = value;
  else if (key == "world.customers") world_customers = to_u64(value, key);
  else if (key == "world.products") world_products = to_u64(value, key);
  else if (key == "world.categories") world_categories = to_u64(value, key);
  else if (key == "world.personas") world_personas = to_u64(value, key);
  else if (key == "world.horizon") world_horizon = to_long(value, key);
  else if (key == "world.max_basket_size") world_max_basket = to_u64(value, key);
  else if (key == "embed.dim") embed_dim = to_u64(value, key);
  else if (key == "embed.window") embed_window = to_u64(value, key);
  else if (key == "embed.negatives") embed_negatives = to_u64(value, key);
  else if (key == "embed.epochs") embed_epochs = to_u64(value, key);
  else if (key == "lstm.hidden") lstm_hidden = to_u64(value, key);
  else if (key == "lstm.epochs") lstm_epochs = to_u64(value, key);
  else if (key == "lstm.lr") lstm_lr = to_double(value, key);
  else if (key == "gan.z_dim") gan_z_dim = to_u64(value, key);
  else if (key == "gan.hidden") gan_hidden = to_u64(value, key);
  else if (key == "gan.lambda") gan_lambda = to_double(value, key);
  else if (key == "gan.lr") gan_lr = to_double(value, key);
  else if (key == "gan.beta1") gan_beta1 = to_double(value, key);
  else if (key == "gan.beta2") gan_beta2 = to_double(value, key);
  else if (key == "gan.n_critic") gan_n_critic = to_u64(value, key);
  else if (key == "gan.epochs") gan_epochs = to_u64(value, key);
  else if (key == "gan.batch") gan_batch = to_u64(value, key);
  else if (key == "gan.clip") gan_clip = to_double(value, key);
  else if (key == "gan.divergence_bound") gan_divergence_bound = to_double(value, key);
  else if (key == "gen.k") gen_k = to_u64(value, key);
  else if (key == "gen.weeks") gen_weeks = to_u64(value, key);
  else if (key == "gen.max_basket_size") gen_max_basket = to_u64(value, key);
  else if (key == "gen.customers") gen_customers = value;
  else if (key == "eval.min_support") eval_min_support = to_double(value, key);
  else if (key == "eval.max_pattern_items") eval_max_pattern_items = to_u64(value, key);
  else if (key == "eval.top_k") eval_top_k = to_u64(value, key);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline void PipelineConfig::validate() const {
  auto positive = [](double v, const std::string& what) {
    if (v <= 0) throw ConfigError("config: " + what + " must be positive");
  };
  positive(static_cast<double>(world_customers), "world.customers");
  positive(static_cast<double>(world_products), "world.products");
  positive(static_cast<double>(world_categories), "world.categories");
  positive(static_cast<double>(world_personas), "world.personas");
  positive(static_cast<double>(world_horizon), "world.horizon");
  positive(static_cast<double>(embed_dim), "embed.dim");
  positive(static_cast<double>(embed_window), "embed.window");
  positive(static_cast<double>(lstm_hidden), "lstm.hidden");
  positive(static_cast<double>(gan_z_dim), "gan.z_dim");
  positive(static_cast<double>(gan_hidden), "gan.hidden");
  positive(static_cast<double>(gan_batch), "gan.batch");
  positive(static_cast<double>(gan_n_critic), "gan.n_critic");
  positive(gan_lr, "gan.lr");
  positive(lstm_lr, "lstm.lr");
  positive(static_cast<double>(gen_k), "gen.k");
  positive(static_cast<double>(gen_weeks), "gen.weeks");
  positive(static_cast<double>(gen_max_basket), "gen.max_basket_size");
  if (world_products < world_categories)
    throw ConfigError("config: world.products must be >= world.categories");
  if (gan_lambda < 0) throw ConfigError("config: gan.lambda must be >= 0");
  if (gan_beta1 <= 0 || gan_beta1 >= 1 || gan_beta2 <= 0 || gan_beta2 >= 1)
    throw ConfigError("config: gan betas must lie in (0,1)");
  if (eval_min_support <= 0 || eval_min_support > 1)
    throw ConfigError("config: eval.min_support must lie in (0,1]");
  if (eval_max_pattern_items == 0 || eval_top_k == 0)
    throw ConfigError("config: eval limits must be positive");
}

inline std::string PipelineConfig::serialize() const {
  std::ostringstream o;
  o << "seed = " << seed << "\n";
  o << "out_dir = " << out_dir.string() << "\n";
  o << "world.customers = " << world_customers << "\n";
  o << "world.products = " << world_products << "\n";
  o << "world.categories = " << world_categories << "\n";
  o << "world.personas = " << world_personas << "\n";
  o << "world.horizon = " << world_horizon << "\n";
  o << "world.max_basket_size = " << world_max_basket << "\n";
  o << "embed.dim = " << embed_dim << "\n";
  o << "embed.window = " << embed_window << "\n";
  o << "embed.negatives = " << embed_negatives << "\n";
  o << "embed.epochs = " << embed_epochs << "\n";
  o << "lstm.hidden = " << lstm_hidden << "\n";
  o << "lstm.epochs = " << lstm_epochs << "\n";
  o << "lstm.lr = " << num_str(lstm_lr) << "\n";
  o << "gan.z_dim = " << gan_z_dim << "\n";
  o << "gan.hidden = " << gan_hidden << "\n";
  o << "gan.lambda = " << num_str(gan_lambda) << "\n";
  o << "gan.lr = " << num_str(gan_lr) << "\n";
  o << "gan.beta1 = " << num_str(gan_beta1) << "\n";
  o << "gan.beta2 = " << num_str(gan_beta2) << "\n";
  o << "gan.n_critic = " << gan_n_critic << "\n";
  o << "gan.epochs = " << gan_epochs << "\n";
  o << "gan.batch = " << gan_batch << "\n";
  o << "gan.clip = " << num_str(gan_clip) << "\n";
  o << "gan.divergence_bound = " << num_str(gan_divergence_bound) << "\n";
  o << "gen.k = " << gen_k << "\n";
  o << "gen.weeks = " << gen_weeks << "\n";
  o << "gen.max_basket_size = " << gen_max_basket << "\n";
  o << "gen.customers = " << gen_customers << "\n";
  o << "eval.min_support = " << num_str(eval_min_support) << "\n";
  o << "eval.max_pattern_items = " << eval_max_pattern_items << "\n";
  o << "eval.top_k = " << eval_top_k << "\n";
  return o.str();
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  require_file(path, "config file");
  PipelineConfig cfg;
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: empty key or value at line " + std::to_string(line_no));
    cfg.apply(key, value);
  }
  return cfg;
}

}  // namespace basketgen
