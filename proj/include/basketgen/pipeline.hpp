#pragma once

// Pipeline stages behind the CLI: synthetic data, product embeddings,
// customer LSTM, conditional GAN, sequence generation and evaluation. Each
// stage reads its inputs from out_dir, writes its outputs there atomically,
// and drops a provenance copy of the resolved configuration.

#include <iostream>
#include <sstream>

#include "basketgen/dataio.hpp"
#include "basketgen/eval.hpp"
#include "basketgen/gan.hpp"
#include "basketgen/lstm.hpp"
#include "basketgen/mining.hpp"
#include "basketgen/seqgen.hpp"
#include "basketgen/synthworld.hpp"

namespace basketgen {

struct Paths {
  std::filesystem::path catalog, transactions, manifest, embeddings, word_vectors, lstm_ckpt,
      gan_ckpt, gan_metrics, generated, eval_dir;

  explicit Paths(const std::filesystem::path& out) {
    catalog = out / "catalog.csv";
    transactions = out / "transactions.csv";
    manifest = out / "world_manifest.json";
    embeddings = out / "product_embeddings.csv";
    word_vectors = out / "word_vectors.csv";
    lstm_ckpt = out / "lstm.ckpt";
    gan_ckpt = out / "gan.ckpt";
    gan_metrics = out / "gan_metrics.csv";
    generated = out / "generated.csv";
    eval_dir = out / "eval";
  }
};

namespace detail {

inline void write_provenance(const PipelineConfig& cfg, const std::string& stage) {
  atomic_write_text(cfg.out_dir / (stage + ".config.txt"), cfg.serialize());
}

inline std::vector<ProductDocument> catalog_documents(const Catalog& catalog, bool warn = true) {
  std::vector<ProductDocument> docs;
  for (const auto& r : catalog.records) {
    ProductDocument d;
    d.product_id = r.product_id;
    d.tokens = preprocess(r.name, r.description);
    if (d.tokens.empty()) {
      if (warn)
        std::cerr << "warning: product '" << r.product_id
                  << "' has no usable text tokens; rejected at ingestion\n";
      continue;
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

inline long infer_horizon(const std::vector<CustomerHistory>& hs) {
  long max_week = 0;
  for (const auto& h : hs)
    for (const auto& b : h.baskets) max_week = std::max(max_week, b.week);
  return max_week + 1;
}

}  // namespace detail

inline void run_synth(const PipelineConfig& cfg) {
  cfg.validate();
  Paths paths(cfg.out_dir);
  SyntheticWorldConfig wc;
  wc.customers = cfg.world_customers;
  wc.products = cfg.world_products;
  wc.categories = cfg.world_categories;
  wc.personas = cfg.world_personas;
  wc.horizon = cfg.world_horizon;
  wc.max_basket_size = cfg.world_max_basket;
  wc.seed = sub_seed(cfg.seed, "world");
  auto world = generate_synthetic_world(wc);
  write_catalog(paths.catalog, world.catalog);
  write_transactions(paths.transactions, world.histories);
  atomic_write_text(paths.manifest, world.manifest.dump(2) + "\n");
  detail::write_provenance(cfg, "synth-data");
  std::cout << "synth-data: " << world.catalog.size() << " products, "
            << world.histories.size() << " customers, horizon " << wc.horizon << "\n";
}

inline void run_embed(const PipelineConfig& cfg) {
  cfg.validate();
  Paths paths(cfg.out_dir);
  auto catalog = read_catalog(paths.catalog);
  auto docs = detail::catalog_documents(catalog);
  if (docs.empty()) throw Error("embed-products: no products with usable text");

  SkipgramConfig sc;
  sc.dim = cfg.embed_dim;
  sc.window = cfg.embed_window;
  sc.negatives = cfg.embed_negatives;
  sc.epochs = cfg.embed_epochs;
  sc.seed = sub_seed(cfg.seed, "corpus");
  auto table = train_skipgram(docs, sc);

  std::vector<ProductVector> product_vecs;
  for (const auto& d : docs) product_vecs.push_back(product_vector(d, table));
  write_embeddings(paths.embeddings, product_vecs);

  std::vector<ProductVector> word_vecs;
  for (std::size_t id = 0; id < table.vocab.size(); ++id)
    word_vecs.push_back({table.vocab.id_to_token[id], table.word_vector(static_cast<int>(id))});
  write_embeddings(paths.word_vectors, word_vecs, "token");
  detail::write_provenance(cfg, "embed-products");
  std::cout << "embed-products: " << product_vecs.size() << " products, vocabulary "
            << table.vocab.size() << ", dim " << sc.dim << "\n";
}

inline void run_lstm(const PipelineConfig& cfg) {
  cfg.validate();
  Paths paths(cfg.out_dir);
  auto catalog = read_catalog(paths.catalog);
  auto embeds = EmbeddedCatalog::from_vectors(read_embeddings(paths.embeddings));
  auto histories = read_transactions(paths.transactions, catalog);

  LstmConfig lc;
  lc.input_dim = embeds.dim;
  lc.hidden_dim = cfg.lstm_hidden;
  lc.epochs = cfg.lstm_epochs;
  lc.lr = cfg.lstm_lr;
  lc.seed = sub_seed(cfg.seed, "lstm");
  auto model = train_multitask(histories, catalog, embeds, lc);
  save_checkpoint(paths.lstm_ckpt, model.to_checkpoint());
  auto metrics = model.evaluate(histories, catalog, embeds);
  detail::write_provenance(cfg, "train-lstm");
  std::cout << "train-lstm: eob accuracy " << metrics.eob_accuracy << ", category accuracy "
            << metrics.category_accuracy << ", price rmse " << metrics.price_rmse << "\n";
}

// Condition for week w uses the state before consuming week w's basket.
inline std::vector<GanTrainSample> build_gan_dataset(
    const std::vector<CustomerHistory>& histories, const LstmModel& lstm,
    const EmbeddedCatalog& embeds, const AffineScaler& scaler, long horizon) {
  std::vector<GanTrainSample> data;
  for (const auto& h : histories) {
    CustomerState state = lstm.initial_state();
    for (const auto& basket : h.baskets) {
      auto cond = make_condition(state.hidden, basket.week, horizon);
      std::vector<std::string> ids = basket.product_ids;
      std::sort(ids.begin(), ids.end());
      for (const auto& id : ids) data.push_back({scaler.to_gan(embeds.vec(id)), cond});
      state = lstm.update_state(state, basket, embeds).state;
    }
  }
  return data;
}

inline void run_gan(const PipelineConfig& cfg) {
  cfg.validate();
  Paths paths(cfg.out_dir);
  auto catalog = read_catalog(paths.catalog);
  auto embeds = EmbeddedCatalog::from_vectors(read_embeddings(paths.embeddings));
  auto histories = read_transactions(paths.transactions, catalog);
  require_file(paths.lstm_ckpt, "lstm checkpoint");
  auto lstm = LstmModel::from_checkpoint(load_checkpoint(paths.lstm_ckpt));
  long horizon = detail::infer_horizon(histories);

  auto scaler = AffineScaler::fit(embeds.products);
  auto data = build_gan_dataset(histories, lstm, embeds, scaler, horizon);

  GanConfig gc;
  gc.x_dim = embeds.dim;
  gc.cond_dim = lstm.config().hidden_dim + static_cast<std::size_t>(horizon);
  gc.z_dim = cfg.gan_z_dim;
  gc.hidden = cfg.gan_hidden;
  gc.lambda = cfg.gan_lambda;
  gc.lr = cfg.gan_lr;
  gc.beta1 = cfg.gan_beta1;
  gc.beta2 = cfg.gan_beta2;
  gc.n_critic = cfg.gan_n_critic;
  gc.epochs = cfg.gan_epochs;
  gc.batch = cfg.gan_batch;
  gc.clip = cfg.gan_clip;
  gc.divergence_bound = cfg.gan_divergence_bound;
  gc.seed = sub_seed(cfg.seed, "gan");
  BasketGan gan(gc);
  gan.scaler = scaler;

  std::ostringstream metrics;
  gan.train(data, &metrics);
  atomic_write_text(paths.gan_metrics, metrics.str());

  auto ckpt = gan.to_checkpoint();
  ckpt.add_meta("horizon", std::to_string(horizon));
  save_checkpoint(paths.gan_ckpt, ckpt);
  detail::write_provenance(cfg, "train-gan");
  std::cout << "train-gan: " << data.size() << " training pairs, cond dim " << gc.cond_dim
            << ", epochs " << gc.epochs << "\n";
}

inline void run_generate(const PipelineConfig& cfg) {
  cfg.validate();
  Paths paths(cfg.out_dir);
  auto catalog = read_catalog(paths.catalog);
  auto embeds = EmbeddedCatalog::from_vectors(read_embeddings(paths.embeddings));
  auto histories = read_transactions(paths.transactions, catalog);
  require_file(paths.lstm_ckpt, "lstm checkpoint");
  require_file(paths.gan_ckpt, "gan checkpoint");
  auto lstm = LstmModel::from_checkpoint(load_checkpoint(paths.lstm_ckpt));
  auto gan_ckpt = load_checkpoint(paths.gan_ckpt);
  auto gan = BasketGan::from_checkpoint(gan_ckpt);
  long horizon = std::stol(gan_ckpt.meta_one("horizon"));

  std::vector<CustomerHistory> selected;
  if (cfg.gen_customers == "all") {
    selected = histories;
  } else {
    require_file(cfg.gen_customers, "customer id list");
    std::set<std::string> wanted;
    std::istringstream in(read_text(cfg.gen_customers));
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) wanted.insert(line);
    }
    for (const auto& h : histories)
      if (wanted.count(h.customer_id)) selected.push_back(h);
    if (selected.size() != wanted.size())
      throw Error("generate: " + std::to_string(wanted.size() - selected.size()) +
                  " requested customers have no history");
  }
  if (selected.empty()) throw Error("generate: no customers selected");

  auto index = CustomerIndex::build(histories, lstm, embeds);
  GenerationConfig gen_cfg;
  gen_cfg.k = std::min(cfg.gen_k, index.entries.size());
  gen_cfg.weeks = cfg.gen_weeks;
  gen_cfg.max_basket_size = cfg.gen_max_basket;
  gen_cfg.horizon = horizon;
  gen_cfg.seed = sub_seed(cfg.seed, "generation");

  std::vector<CustomerHistory> generated;
  for (const auto& h : selected) {
    auto seq = generate_sequence(h, gen_cfg, lstm, gan, index, embeds);
    generated.push_back({seq.customer_id, seq.baskets});
  }
  write_generated(paths.generated, selected, generated);
  detail::write_provenance(cfg, "generate");
  std::cout << "generate: " << generated.size() << " customers x " << gen_cfg.weeks
            << " weeks -> " << paths.generated.string() << "\n";
}

// ---- evaluation report bundle ----------------------------------------------

namespace detail {

inline std::vector<Basket> all_baskets(const std::vector<CustomerHistory>& hs) {
  std::vector<Basket> out;
  for (const auto& h : hs)
    for (const auto& b : h.baskets) out.push_back(b);
  return out;
}

inline std::string pattern_str(const PatternSeq& p, const LabelTable& table) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += " -> ";
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      if (j) s += "+";
      s += table.labels[static_cast<std::size_t>(p[i][j])];
    }
  }
  return s;
}

struct MinedPair {
  std::vector<SequentialPattern> real, gen;
  LabelTable table;
};

inline MinedPair mine_both(const std::vector<CustomerHistory>& real,
                           const std::vector<CustomerHistory>& gen, const Catalog& catalog,
                           bool subcat, double min_support, std::size_t max_items) {
  MinedPair out;
  auto real_db = to_sequences(real, catalog, subcat, out.table);
  auto gen_db = to_sequences(gen, catalog, subcat, out.table);
  MinerConfig mc{min_support, max_items};
  out.real = mine_patterns(real_db, mc);
  out.gen = mine_patterns(gen_db, mc);
  return out;
}

inline double mean_basket_size(const std::vector<Basket>& bs) {
  if (bs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& b : bs) s += static_cast<double>(b.product_ids.size());
  return s / static_cast<double>(bs.size());
}

inline double mean_basket_value(const std::vector<Basket>& bs, const Catalog& catalog) {
  if (bs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& b : bs)
    for (const auto& id : b.product_ids) s += catalog.get(id).price;
  return s / static_cast<double>(bs.size());
}

inline double mean_product_price(const std::vector<Basket>& bs, const Catalog& catalog) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& b : bs)
    for (const auto& id : b.product_ids) {
      s += catalog.get(id).price;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace detail

struct EvaluationSummary {
  std::size_t real_customers = 0, gen_customers = 0;
  double real_mean_basket_size = 0.0, gen_mean_basket_size = 0.0;
  double real_mean_basket_value = 0.0, gen_mean_basket_value = 0.0;
  double real_mean_product_price = 0.0, gen_mean_product_price = 0.0;
  std::map<std::string, double> deviation_pp;  // per feature
  double coverage_category = 0.0, coverage_subcategory = 0.0;
  std::map<std::string, double> separability_accuracy;  // per representation
  double skipgram_intra = 0.0, skipgram_inter = 0.0;
  double conditioning_pvalue = -1.0;  // -1 when no manifest is available
};

inline EvaluationSummary run_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  Paths paths(cfg.out_dir);
  auto catalog = read_catalog(paths.catalog);
  auto embeds = EmbeddedCatalog::from_vectors(read_embeddings(paths.embeddings));
  auto real_histories = read_transactions(paths.transactions, catalog);
  require_file(paths.generated, "generated transactions (run generate first)");
  auto gen_data = read_generated(paths.generated, catalog);
  if (gen_data.generated.empty()) throw Error("evaluate: no generated rows in generated.csv");

  std::filesystem::create_directories(paths.eval_dir);
  auto real_baskets = detail::all_baskets(real_histories);
  auto gen_baskets = detail::all_baskets(gen_data.generated);

  EvaluationSummary summary;
  summary.real_customers = real_histories.size();
  summary.gen_customers = gen_data.generated.size();
  summary.real_mean_basket_size = detail::mean_basket_size(real_baskets);
  summary.gen_mean_basket_size = detail::mean_basket_size(gen_baskets);
  summary.real_mean_basket_value = detail::mean_basket_value(real_baskets, catalog);
  summary.gen_mean_basket_value = detail::mean_basket_value(gen_baskets, catalog);
  summary.real_mean_product_price = detail::mean_product_price(real_baskets, catalog);
  summary.gen_mean_product_price = detail::mean_product_price(gen_baskets, catalog);

  // feature histograms
  for (Feature f : {Feature::category, Feature::subcategory, Feature::brand, Feature::price_bin,
                    Feature::basket_size}) {
    auto hc = feature_histograms(real_baskets, gen_baskets, f, catalog);
    summary.deviation_pp[feature_name(f)] = hc.max_abs_deviation_pp;
    std::string out = csv_row({"bin", "real_freq", "gen_freq"});
    std::map<std::string, double> keys = hc.real.freq;
    for (const auto& [k, v] : hc.gen.freq) keys.emplace(k, 0.0);
    for (const auto& [k, unused] : keys) {
      double r = hc.real.freq.count(k) ? hc.real.freq.at(k) : 0.0;
      double g = hc.gen.freq.count(k) ? hc.gen.freq.at(k) : 0.0;
      out += csv_row({k, num_str(r), num_str(g)});
    }
    atomic_write_text(paths.eval_dir / ("hist_" + feature_name(f) + ".csv"), out);
  }

  // sequential patterns and coverage at both granularities
  for (bool subcat : {false, true}) {
    std::string granularity = subcat ? "subcategory" : "category";
    auto mined = detail::mine_both(real_histories, gen_data.generated, catalog, subcat,
                                   cfg.eval_min_support, cfg.eval_max_pattern_items);
    std::map<PatternSeq, std::size_t> gen_sup;
    for (const auto& p : mined.gen) gen_sup[p.itemsets] = p.support;

    auto ranked = mined.real;
    std::sort(ranked.begin(), ranked.end(),
              [](const SequentialPattern& a, const SequentialPattern& b) {
                if (a.support != b.support) return a.support > b.support;
                return a.itemsets < b.itemsets;
              });
    std::string pat_csv = csv_row({"pattern", "real_support", "gen_support"});
    double rn = static_cast<double>(real_histories.size());
    double gn = static_cast<double>(gen_data.generated.size());
    for (const auto& p : ranked) {
      double gsup = gen_sup.count(p.itemsets)
                        ? static_cast<double>(gen_sup.at(p.itemsets)) / gn
                        : 0.0;
      pat_csv += csv_row({detail::pattern_str(p.itemsets, mined.table),
                          num_str(static_cast<double>(p.support) / rn), num_str(gsup)});
    }
    atomic_write_text(paths.eval_dir / ("patterns_" + granularity + ".csv"), pat_csv);

    std::string cov_csv = csv_row({"k", "coverage"});
    std::size_t max_k = std::min<std::size_t>(mined.real.size(), 500);
    for (std::size_t k = 1; k <= max_k; ++k) {
      auto cov = pattern_coverage(mined.real, mined.gen, k);
      cov_csv += csv_row({std::to_string(k), num_str(cov.fraction)});
    }
    atomic_write_text(paths.eval_dir / ("coverage_" + granularity + ".csv"), cov_csv);

    auto top = pattern_coverage(mined.real, mined.gen, cfg.eval_top_k);
    (subcat ? summary.coverage_subcategory : summary.coverage_category) = top.fraction;
  }

  // separability at three representations
  std::string sep_csv = csv_row({"representation", "accuracy", "per_class"});
  for (BasketRepr repr : {BasketRepr::bag_category, BasketRepr::bag_subcategory,
                          BasketRepr::sku_embedding}) {
    auto real_vecs = basket_vectors(real_baskets, repr, catalog, &embeds);
    auto gen_vecs = basket_vectors(gen_baskets, repr, catalog, &embeds);
    auto rep = separability(real_vecs, gen_vecs, sub_seed(cfg.seed, "eval"), repr_name(repr));
    summary.separability_accuracy[repr_name(repr)] = rep.accuracy;
    sep_csv += csv_row({rep.representation, num_str(rep.accuracy), std::to_string(rep.per_class)});
  }
  atomic_write_text(paths.eval_dir / "separability.csv", sep_csv);

  // 2-d PCA exports (category bags and sku embeddings)
  for (auto [repr, fname] :
       {std::pair{BasketRepr::bag_category, "pca_bag_category.csv"},
        std::pair{BasketRepr::sku_embedding, "pca_embedding_sku.csv"}}) {
    auto real_vecs = basket_vectors(real_baskets, repr, catalog, &embeds);
    auto gen_vecs = basket_vectors(gen_baskets, repr, catalog, &embeds);
    auto combined = real_vecs;
    combined.insert(combined.end(), gen_vecs.begin(), gen_vecs.end());
    auto proj = project_2d(combined);
    std::string out = csv_row({"label", "x", "y"});
    for (std::size_t i = 0; i < combined.size(); ++i)
      out += csv_row({i < real_vecs.size() ? "real" : "generated", num_str(proj.coords[i][0]),
                      num_str(proj.coords[i][1])});
    atomic_write_text(paths.eval_dir / fname, out);
  }

  // skip-gram structure check from the exported word vectors
  if (std::filesystem::exists(paths.word_vectors)) {
    auto word_vecs = read_embeddings(paths.word_vectors);
    WordEmbeddingTable table;
    table.dim = word_vecs.empty() ? 0 : word_vecs[0].vec.size();
    Tensor input({word_vecs.size(), table.dim});
    for (std::size_t i = 0; i < word_vecs.size(); ++i) {
      table.vocab.add(word_vecs[i].product_id);
      std::copy(word_vecs[i].vec.begin(), word_vecs[i].vec.end(),
                input.v.begin() + i * table.dim);
    }
    table.input = std::move(input);
    table.context = Tensor({word_vecs.size(), table.dim});
    auto margin = category_token_margin(table, catalog);
    summary.skipgram_intra = margin.intra;
    summary.skipgram_inter = margin.inter;
  }

  // conditioning check against planted personas when the manifest exists
  if (std::filesystem::exists(paths.manifest)) {
    auto manifest = nlohmann::json::parse(read_text(paths.manifest));
    if (manifest.contains("customer_personas")) {
      const auto& cp = manifest["customer_personas"];
      std::size_t personas = manifest["personas"].get<std::size_t>();
      std::vector<std::string> cats = sorted_categories(catalog);
      std::unordered_map<std::string, std::size_t> cat_pos;
      for (std::size_t i = 0; i < cats.size(); ++i) cat_pos[cats[i]] = i;
      std::vector<std::vector<double>> table(personas, std::vector<double>(cats.size(), 0.0));
      bool ok = personas >= 2;
      for (const auto& h : gen_data.generated) {
        if (!cp.contains(h.customer_id)) {
          ok = false;
          break;
        }
        std::size_t p = cp[h.customer_id].get<std::size_t>();
        for (const auto& b : h.baskets)
          for (const auto& id : b.product_ids)
            table[p][cat_pos.at(catalog.get(id).category)] += 1.0;
      }
      if (ok) summary.conditioning_pvalue = chi2_contingency_pvalue(table);
    }
  }

  // summary file mirroring the headline statistics
  std::ostringstream s;
  s << "evaluation summary\n";
  s << "==================\n\n";
  s << "customers: real " << summary.real_customers << ", generated " << summary.gen_customers
    << "\n";
  s << "baskets:   real " << real_baskets.size() << ", generated " << gen_baskets.size() << "\n\n";
  s << "statistics (real vs generated)\n";
  s << "  average basket size:   " << summary.real_mean_basket_size << " vs "
    << summary.gen_mean_basket_size << "\n";
  s << "  average basket value:  " << summary.real_mean_basket_value << " vs "
    << summary.gen_mean_basket_value << "\n";
  s << "  average product price: " << summary.real_mean_product_price << " vs "
    << summary.gen_mean_product_price << "\n\n";
  s << "max absolute deviation (percentage points)\n";
  for (const auto& [feature, dev] : summary.deviation_pp)
    s << "  " << feature << ": " << dev << "\n";
  s << "\npattern coverage (top-" << cfg.eval_top_k << " real patterns found in generated)\n";
  s << "  category:    " << summary.coverage_category << "\n";
  s << "  subcategory: " << summary.coverage_subcategory << "\n";
  s << "\nseparability (held-out accuracy, 0.5 = indistinguishable)\n";
  for (const auto& [repr, acc] : summary.separability_accuracy)
    s << "  " << repr << ": " << acc << "\n";
  s << "\nskip-gram token cosine: intra-category " << summary.skipgram_intra
    << ", inter-category " << summary.skipgram_inter << ", margin "
    << (summary.skipgram_intra - summary.skipgram_inter) << "\n";
  if (summary.conditioning_pvalue >= 0.0)
    s << "persona conditioning chi-squared p-value: " << summary.conditioning_pvalue << "\n";
  atomic_write_text(paths.eval_dir / "summary.txt", s.str());
  detail::write_provenance(cfg, "evaluate");
  std::cout << s.str();
  return summary;
}

inline void run_all(const PipelineConfig& cfg) {
  run_synth(cfg);
  run_embed(cfg);
  run_lstm(cfg);
  run_gan(cfg);
  run_generate(cfg);
  run_evaluate(cfg);
}

}  // namespace basketgen
