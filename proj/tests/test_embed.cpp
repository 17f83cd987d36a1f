#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "basketgen/nearest.hpp"
#include "basketgen/skipgram.hpp"
#include "basketgen/text.hpp"

using namespace basketgen;

TEST_CASE("preprocess strips stopwords, units and short tokens") {
  auto tokens = preprocess("Silk Shampoo 250ml", "for dry hair");
  CHECK(tokens == std::vector<std::string>{"silk", "shampoo", "dry", "hair"});
  CHECK(preprocess("", "").empty());
  CHECK(preprocess("THE the The", "").empty());
  CHECK(preprocess("X 1 2", "a I").empty());  // single-letter tokens dropped
}

TEST_CASE("builtin stopwords match the shipped data file") {
  auto from_file = load_stopwords(std::filesystem::path(BASKETGEN_SOURCE_DIR) / "data" /
                                  "stopwords.txt");
  CHECK(from_file == builtin_stopwords());
}

TEST_CASE("vocabulary ids are dense and counted") {
  std::vector<ProductDocument> corpus = {{"p1", {"silk", "shampoo", "silk"}},
                                         {"p2", {"shampoo", "conditioner"}}};
  auto vocab = Vocabulary::build(corpus);
  CHECK(vocab.size() == 3);
  std::set<int> ids;
  for (const auto& t : vocab.id_to_token) ids.insert(vocab.lookup(t));
  CHECK(ids == std::set<int>{0, 1, 2});
  CHECK(vocab.freq[static_cast<std::size_t>(vocab.lookup("silk"))] == 2);
  CHECK(vocab.freq[static_cast<std::size_t>(vocab.lookup("shampoo"))] == 2);
  CHECK(vocab.freq[static_cast<std::size_t>(vocab.lookup("conditioner"))] == 1);
}

TEST_CASE("window=1 training pairs are exactly the adjacent pairs") {
  std::vector<ProductDocument> corpus = {{"p", {"a", "b", "c"}}};
  auto vocab = Vocabulary::build(corpus);
  auto pairs = skipgram_pairs(corpus[0].tokens, vocab, 1);
  int a = vocab.lookup("a"), b = vocab.lookup("b"), c = vocab.lookup("c");
  std::set<std::pair<int, int>> got(pairs.begin(), pairs.end());
  std::set<std::pair<int, int>> want = {{a, b}, {b, a}, {b, c}, {c, b}};
  CHECK(got == want);
  CHECK(pairs.size() == 4);
}

namespace {

double mean_cosine(const WordEmbeddingTable& t, const std::vector<int>& ga,
                   const std::vector<int>& gb) {
  double s = 0.0;
  std::size_t n = 0;
  for (int i : ga)
    for (int j : gb) {
      if (i == j) continue;
      s += cosine(t.word_vector(i), t.word_vector(j));
      ++n;
    }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("skipgram learns planted topic structure") {
  // 8 disjoint topic groups; tokens co-occur only within their group
  std::mt19937_64 rng(99);
  const int groups = 8, words_per_group = 6, docs_per_group = 30;
  std::vector<ProductDocument> corpus;
  std::vector<std::vector<std::string>> pools(groups);
  for (int g = 0; g < groups; ++g)
    for (int w = 0; w < words_per_group; ++w)
      pools[static_cast<std::size_t>(g)].push_back("g" + std::to_string(g) + "w" +
                                                   std::to_string(w));
  for (int g = 0; g < groups; ++g)
    for (int d = 0; d < docs_per_group; ++d) {
      ProductDocument doc;
      doc.product_id = "p" + std::to_string(g) + "_" + std::to_string(d);
      std::uniform_int_distribution<int> pick(0, words_per_group - 1);
      for (int t = 0; t < 6; ++t)
        doc.tokens.push_back(pools[static_cast<std::size_t>(g)][static_cast<std::size_t>(pick(rng))]);
      corpus.push_back(std::move(doc));
    }

  SkipgramConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 10;
  cfg.seed = 4;
  auto table = train_skipgram(corpus, cfg);

  std::vector<std::vector<int>> group_ids(groups);
  for (int g = 0; g < groups; ++g)
    for (const auto& w : pools[static_cast<std::size_t>(g)])
      group_ids[static_cast<std::size_t>(g)].push_back(table.vocab.lookup(w));

  double intra = 0.0, inter = 0.0;
  int n_inter = 0;
  for (int g = 0; g < groups; ++g) {
    intra += mean_cosine(table, group_ids[static_cast<std::size_t>(g)],
                         group_ids[static_cast<std::size_t>(g)]);
    for (int h = g + 1; h < groups; ++h) {
      inter += mean_cosine(table, group_ids[static_cast<std::size_t>(g)],
                           group_ids[static_cast<std::size_t>(h)]);
      ++n_inter;
    }
  }
  intra /= groups;
  inter /= n_inter;
  INFO("intra " << intra << " inter " << inter);
  CHECK(intra > inter);
}

TEST_CASE("tokens from disjoint documents gain no similarity advantage") {
  // Two documents sharing no tokens. Training may drift all vectors along a
  // common direction, but cross-document pairs must not end up with a
  // similarity advantage over the co-occurring (intra-document) pairs, which
  // is the advantage co-occurrence training confers.
  std::vector<ProductDocument> corpus = {{"p1", {"aa", "bb", "cc", "aa", "bb"}},
                                         {"p2", {"dd", "ee", "ff", "ee", "dd"}}};
  SkipgramConfig cfg;
  cfg.dim = 2;
  cfg.epochs = 0;  // baseline: random init only
  cfg.seed = 21;
  auto before = train_skipgram(corpus, cfg);
  cfg.epochs = 20;
  auto after = train_skipgram(corpus, cfg);

  std::vector<int> d1 = {before.vocab.lookup("aa"), before.vocab.lookup("bb"),
                         before.vocab.lookup("cc")};
  std::vector<int> d2 = {before.vocab.lookup("dd"), before.vocab.lookup("ee"),
                         before.vocab.lookup("ff")};
  double base_gap = mean_cosine(before, d1, d1) / 2.0 + mean_cosine(before, d2, d2) / 2.0 -
                    mean_cosine(before, d1, d2);
  double trained_gap = mean_cosine(after, d1, d1) / 2.0 + mean_cosine(after, d2, d2) / 2.0 -
                       mean_cosine(after, d1, d2);
  INFO("baseline gap " << base_gap << " trained gap " << trained_gap);
  // at random init the gap is noise; after training intra must dominate
  CHECK(trained_gap > 0.0);
  CHECK(trained_gap > base_gap);
}

TEST_CASE("skipgram is deterministic under a fixed seed") {
  std::vector<ProductDocument> corpus = {{"p1", {"aa", "bb", "cc"}}, {"p2", {"bb", "cc", "dd"}}};
  SkipgramConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 3;
  cfg.seed = 77;
  auto t1 = train_skipgram(corpus, cfg);
  auto t2 = train_skipgram(corpus, cfg);
  CHECK(t1.input.v == t2.input.v);
  CHECK(t1.context.v == t2.context.v);
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(train_skipgram({}), Error);
}

TEST_CASE("product vectors are exact token means") {
  WordEmbeddingTable table;
  table.vocab.add("aa");
  table.vocab.add("bb");
  table.vocab.add("cc");
  table.dim = 2;
  table.input = Tensor({3, 2}, {1.0, 2.0, -1.0, -2.0, 4.0, 0.5});
  table.context = Tensor({3, 2});

  auto single = product_vector({"p", {"aa"}}, table);
  CHECK(single.vec == std::vector<double>{1.0, 2.0});

  auto opposite = product_vector({"p", {"aa", "bb"}}, table);
  CHECK(opposite.vec == std::vector<double>{0.0, 0.0});

  auto three = product_vector({"p", {"aa", "bb", "cc"}}, table);
  CHECK(three.vec[0] == Catch::Approx((1.0 - 1.0 + 4.0) / 3.0).margin(1e-15));
  CHECK(three.vec[1] == Catch::Approx((2.0 - 2.0 + 0.5) / 3.0).margin(1e-15));

  // permuting tokens leaves the vector unchanged
  auto permuted = product_vector({"p", {"cc", "aa", "bb"}}, table);
  CHECK(permuted.vec == three.vec);

  // out-of-vocabulary tokens are skipped; all-OOV is an error
  auto skipped = product_vector({"p", {"aa", "zz"}}, table);
  CHECK(skipped.vec == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(product_vector({"p", {"zz"}}, table), Error);
}

TEST_CASE("nearest products: identity and hand-computed case") {
  std::vector<ProductVector> catalog = {{"a", {0, 0}}, {"b", {3, 4}}};
  auto r = nearest_products({1, 0}, catalog, 2, Metric::l2);
  REQUIRE(r.size() == 2);
  CHECK(r[0].id == "a");
  CHECK(r[0].distance == Catch::Approx(1.0));
  CHECK(r[1].id == "b");
  CHECK(r[1].distance == Catch::Approx(std::sqrt(20.0)));

  auto self = nearest_products({3, 4}, catalog, 1, Metric::l2);
  CHECK(self[0].id == "b");
  CHECK(self[0].distance == 0.0);

  // k beyond the catalog returns the full ranking
  CHECK(nearest_products({0, 0}, catalog, 10).size() == 2);
}

TEST_CASE("nearest products matches the exhaustive oracle") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<ProductVector> catalog;
  for (int i = 0; i < 50; ++i) {
    ProductVector p;
    p.product_id = "p" + std::to_string(100 + i);
    for (int d = 0; d < 6; ++d) p.vec.push_back(u(rng));
    catalog.push_back(std::move(p));
  }
  for (auto metric : {Metric::l2, Metric::cosine}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> q;
      for (int d = 0; d < 6; ++d) q.push_back(u(rng));

      // oracle: full sort of all (distance, id) pairs
      std::vector<std::pair<double, std::string>> oracle;
      for (const auto& p : catalog) {
        double dist = metric == Metric::l2 ? std::sqrt(l2_distance_sq(q, p.vec))
                                           : 1.0 - cosine(q, p.vec);
        oracle.emplace_back(dist, p.product_id);
      }
      std::sort(oracle.begin(), oracle.end());

      auto got = nearest_products(q, catalog, 7, metric);
      REQUIRE(got.size() == 7);
      for (int i = 0; i < 7; ++i) {
        CHECK(got[static_cast<std::size_t>(i)].id == oracle[static_cast<std::size_t>(i)].second);
        CHECK(got[static_cast<std::size_t>(i)].distance ==
              Catch::Approx(oracle[static_cast<std::size_t>(i)].first).margin(1e-12));
      }
    }
  }
}

TEST_CASE("nearest index agrees with rank-1 retrieval") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<ProductVector> catalog;
  for (int i = 0; i < 30; ++i)
    catalog.push_back({"p" + std::to_string(i), {u(rng), u(rng), u(rng)}});
  for (int t = 0; t < 25; ++t) {
    std::vector<double> q = {u(rng), u(rng), u(rng)};
    auto top = nearest_products(q, catalog, 1);
    CHECK(catalog[nearest_index(q, catalog)].product_id == top[0].id);
  }
}
