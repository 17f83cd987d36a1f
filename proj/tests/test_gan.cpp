#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "basketgen/gan.hpp"
#include "fd_check.hpp"
#include "toy_task.hpp"

using namespace basketgen;
using bgtest::fd_gradient;
using bgtest::make_toy_task;
using bgtest::max_rel_err;
using bgtest::rand_tensor;
using bgtest::toy_mean_error;

namespace {

GanConfig small_cfg() {
  GanConfig cfg;
  cfg.x_dim = 3;
  cfg.cond_dim = 2;
  cfg.z_dim = 4;
  cfg.hidden = 6;
  cfg.batch = 4;
  cfg.seed = 31;
  return cfg;
}

}  // namespace

TEST_CASE("generate is deterministic and bounded") {
  BasketGan gan(small_cfg());
  std::mt19937_64 rng(5);
  auto z = gan.sample_noise(rng);
  std::vector<double> cond = {1.0, 0.0};
  CHECK(gan.generate(z, cond) == gan.generate(z, cond));

  for (int i = 0; i < 1000; ++i) {
    auto x = gan.generate(gan.sample_noise(rng), cond);
    for (double v : x) CHECK(std::fabs(v) < 1.0);
  }
}

TEST_CASE("zero output layer produces the zero vector") {
  BasketGan gan(small_cfg());
  gan.gen.layers.back().weight->value.fill(0.0);
  gan.gen.layers.back().bias->value.fill(0.0);
  std::mt19937_64 rng(6);
  auto x = gan.generate(gan.sample_noise(rng), {0.3, -0.7});
  CHECK(x == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("critic loss on identical real and fake batches is exactly zero") {
  std::mt19937_64 rng(7);
  Mlp critic = Mlp::create("critic", 5, {6, 1}, {Act::relu, Act::identity}, rng);
  CriticLossGraph g(critic, 4, 3, 2, /*lambda=*/0.0);
  Tensor x = rand_tensor({4, 3}, rng);
  Tensor conds = rand_tensor({4, 2}, rng);
  Tensor eps = rand_tensor({4}, rng, 0.0, 1.0);
  auto res = g.run(x, x, conds, eps, /*with_grad=*/false);
  CHECK(res.loss == 0.0);
}

TEST_CASE("unit-norm linear critic has zero penalty and no penalty gradient") {
  std::mt19937_64 rng(8);
  auto make_linear = [&] {
    Mlp m = Mlp::create("critic", 2, {1}, {Act::identity}, rng);
    m.layers[0].weight->value.v = {0.6, 0.8};
    m.layers[0].bias->value.v = {0.4};
    return m;
  };
  Mlp with_penalty = make_linear();
  Mlp without = make_linear();

  Tensor real = rand_tensor({5, 2}, rng), fake = rand_tensor({5, 2}, rng);
  Tensor conds;  // unconditional critic
  Tensor eps = rand_tensor({5}, rng, 0.0, 1.0);

  CriticLossGraph g10(with_penalty, 5, 2, 0, 10.0);
  auto r10 = g10.run(real, fake, conds, eps);
  CHECK(r10.penalty_term == 0.0);
  CHECK(r10.mean_grad_norm == 1.0);

  CriticLossGraph g0(without, 5, 2, 0, 0.0);
  auto r0 = g0.run(real, fake, conds, eps);
  CHECK(r10.loss == r0.loss);
  // penalty contributes exactly nothing to the parameter gradients
  CHECK(with_penalty.layers[0].weight->grad.v == without.layers[0].weight->grad.v);
  CHECK(with_penalty.layers[0].bias->grad.v == without.layers[0].bias->grad.v);
}

TEST_CASE("hand-built one-sample critic loss") {
  std::mt19937_64 rng(9);
  Mlp critic = Mlp::create("critic", 2, {1}, {Act::identity}, rng);
  critic.layers[0].weight->value.v = {0.5, -0.25};
  critic.layers[0].bias->value.v = {0.1};

  Tensor real({1, 2}, {0.2, 0.4});
  Tensor fake({1, 2}, {-0.6, 0.8});
  Tensor conds;
  Tensor eps({1}, {0.3});

  CriticLossGraph g(critic, 1, 2, 0, 10.0);
  auto res = g.run(real, fake, conds, eps, false);

  double d_real = 0.5 * 0.2 - 0.25 * 0.4 + 0.1;
  double d_fake = 0.5 * -0.6 - 0.25 * 0.8 + 0.1;
  double norm = std::sqrt(0.5 * 0.5 + 0.25 * 0.25);
  double expect = -d_real + d_fake + 10.0 * (norm - 1.0) * (norm - 1.0);
  CHECK(res.loss == Catch::Approx(expect).margin(1e-10));
  CHECK(res.mean_grad_norm == Catch::Approx(norm).margin(1e-12));
}

TEST_CASE("constant critic gives loss -c and zero generator gradient") {
  std::mt19937_64 rng(10);
  Mlp gen = Mlp::create("gen", 3, {4, 2}, {Act::relu, Act::tanh_act}, rng);
  Mlp critic = Mlp::create("critic", 4, {3, 1}, {Act::relu, Act::identity}, rng);
  for (const auto& p : critic.params()) p->value.fill(0.0);
  critic.layers.back().bias->value.v = {0.7};

  GeneratorLossGraph g(gen, critic, 2, 1, 2);
  double loss = g.run(critic, rand_tensor({2, 1}, rng), rand_tensor({2, 2}, rng));
  CHECK(loss == -0.7);
  for (const auto& p : gen.params())
    for (double v : p->grad.v) CHECK(v == 0.0);
}

TEST_CASE("critic loss gradients match finite differences") {
  std::mt19937_64 rng(11);
  Mlp critic = Mlp::create("critic", 5, {5, 4, 1}, {Act::relu, Act::relu, Act::identity}, rng);
  CriticLossGraph g(critic, 4, 3, 2, 10.0);
  Tensor real = rand_tensor({4, 3}, rng), fake = rand_tensor({4, 3}, rng);
  Tensor conds = rand_tensor({4, 2}, rng);
  Tensor eps = rand_tensor({4}, rng, 0.05, 0.95);

  g.run(real, fake, conds, eps);  // accumulate analytic grads
  auto eval = [&] { return g.run(real, fake, conds, eps, false).loss; };
  for (const auto& p : critic.params()) {
    Tensor fd = fd_gradient(p->value.v, eval);
    INFO(p->name);
    CHECK(max_rel_err(p->grad.v, fd.v, 1e-6) < 1e-3);
  }
}

TEST_CASE("generator loss gradients match finite differences") {
  std::mt19937_64 rng(12);
  Mlp gen = Mlp::create("gen", 6, {5, 3}, {Act::relu, Act::tanh_act}, rng);
  Mlp critic = Mlp::create("critic", 5, {4, 1}, {Act::relu, Act::identity}, rng);
  GeneratorLossGraph g(gen, critic, 4, 4, 2);
  Tensor z = rand_tensor({4, 4}, rng), conds = rand_tensor({4, 2}, rng);

  g.run(critic, z, conds);
  auto eval = [&] { return g.run(critic, z, conds, false); };
  for (const auto& p : gen.params()) {
    Tensor fd = fd_gradient(p->value.v, eval);
    INFO(p->name);
    CHECK(max_rel_err(p->grad.v, fd.v, 1e-6) < 1e-3);
  }
  // critic side stayed frozen during generator backprop
  for (const auto& p : critic.params())
    for (double v : p->grad.v) CHECK(v == 0.0);
}

TEST_CASE("one generator step decreases the generator loss on a fixed critic") {
  std::mt19937_64 rng(13);
  Mlp gen = Mlp::create("gen", 5, {6, 2}, {Act::relu, Act::tanh_act}, rng);
  Mlp critic = Mlp::create("critic", 4, {6, 1}, {Act::relu, Act::identity}, rng);
  GeneratorLossGraph g(gen, critic, 8, 3, 2);
  Tensor z = rand_tensor({8, 3}, rng), conds = rand_tensor({8, 2}, rng);

  Adam opt(gen.params(), {.lr = 1e-3});
  double before = g.run(critic, z, conds);
  opt.step();
  opt.zero_grad();
  double after = g.run(critic, z, conds, false);
  CHECK(after < before);
}

TEST_CASE("critic step leaves generator parameters untouched") {
  auto cfg = small_cfg();
  cfg.epochs = 1;
  cfg.n_critic = 100000;  // never reach a generator step
  BasketGan gan(cfg);
  std::vector<std::vector<double>> before;
  for (const auto& p : gan.gen.params()) before.push_back(p->value.v);

  std::mt19937_64 rng(14);
  std::vector<GanTrainSample> data;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 16; ++i)
    data.push_back({{u(rng), u(rng), u(rng)}, {u(rng), u(rng)}});
  gan.train(data);

  std::size_t k = 0;
  for (const auto& p : gan.gen.params()) {
    CHECK(p->value.v == before[k++]);
    for (double v : p->grad.v) CHECK(v == 0.0);
  }
}

TEST_CASE("epochs=0 changes nothing") {
  auto cfg = small_cfg();
  cfg.epochs = 0;
  BasketGan gan(cfg);
  auto before = gan.critic.layers[0].weight->value.v;
  std::vector<GanTrainSample> data = {{{0.1, 0.2, 0.3}, {1.0, 0.0}}};
  gan.train(data);
  CHECK(gan.critic.layers[0].weight->value.v == before);
}

TEST_CASE("divergence detector aborts after 100 consecutive bad steps") {
  auto cfg = small_cfg();
  cfg.epochs = 20;
  cfg.batch = 2;
  cfg.divergence_bound = 1e-12;
  BasketGan gan(cfg);
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<GanTrainSample> data;
  for (int i = 0; i < 32; ++i)
    data.push_back({{u(rng), u(rng), u(rng)}, {u(rng), u(rng)}});
  CHECK_THROWS_WITH(gan.train(data), Catch::Matchers::ContainsSubstring("100 consecutive"));
}

TEST_CASE("weight clipping keeps critic weights inside the bound") {
  auto cfg = small_cfg();
  cfg.lambda = 0.0;
  cfg.clip = 0.02;
  cfg.epochs = 2;
  BasketGan gan(cfg);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<GanTrainSample> data;
  for (int i = 0; i < 32; ++i)
    data.push_back({{u(rng), u(rng), u(rng)}, {u(rng), u(rng)}});
  gan.train(data);
  for (const auto& p : gan.critic.params())
    for (double v : p->value.v) CHECK(std::fabs(v) <= 0.02);
}

TEST_CASE("retrieval frequencies match generator occupancy") {
  // catalog corners; compare generate_known_product frequencies against
  // direct nearest-cell occupancy of the raw generator
  BasketGan gan([&] {
    GanConfig cfg;
    cfg.x_dim = 2;
    cfg.cond_dim = 0;
    cfg.z_dim = 4;
    cfg.hidden = 8;
    cfg.seed = 77;
    return cfg;
  }());
  std::vector<ProductVector> catalog = {
      {"p0", {-0.5, -0.5}}, {"p1", {-0.5, 0.5}}, {"p2", {0.5, -0.5}}, {"p3", {0.5, 0.5}}};

  std::map<std::string, double> direct;
  std::mt19937_64 rng_a(101);
  const int direct_n = 20000;
  for (int i = 0; i < direct_n; ++i) {
    auto x = gan.generate(gan.sample_noise(rng_a), {});
    direct[catalog[nearest_index(x, catalog)].product_id] += 1.0 / direct_n;
  }

  std::map<std::string, double> via_retrieval;
  std::mt19937_64 rng_b(202);
  const int calls = 1000;
  for (int i = 0; i < calls; ++i)
    via_retrieval[gan.generate_known_product({}, catalog, rng_b)] += 1.0 / calls;

  double tv = 0.0;
  for (const auto& p : catalog) {
    tv += std::fabs(direct[p.product_id] - via_retrieval[p.product_id]);
  }
  tv /= 2.0;
  INFO("total variation " << tv);
  CHECK(tv < 0.05);

  // catalog of one product always returns it
  std::vector<ProductVector> one = {{"only", {0.0, 0.0}}};
  CHECK(gan.generate_known_product({}, one, rng_b) == "only");
}

TEST_CASE("generator pinned to a catalog vector retrieves that product") {
  BasketGan gan([&] {
    GanConfig cfg;
    cfg.x_dim = 2;
    cfg.cond_dim = 0;
    cfg.z_dim = 2;
    cfg.hidden = 4;
    return cfg;
  }());
  for (auto& layer : gan.gen.layers) {
    layer.weight->value.fill(0.0);
    layer.bias->value.fill(0.0);
  }
  gan.gen.layers.back().bias->value.v = {std::atanh(0.3), std::atanh(-0.2)};
  std::vector<ProductVector> catalog = {{"target", {0.3, -0.2}}, {"other", {-0.4, 0.6}}};
  std::mt19937_64 rng(17);
  for (int i = 0; i < 5; ++i)
    CHECK(gan.generate_known_product({}, catalog, rng) == "target");
}

TEST_CASE("scaler round-trips and maps into the tanh range") {
  std::vector<ProductVector> catalog = {{"a", {0.0, 5.0, 2.0}}, {"b", {1.0, -5.0, 2.0}}};
  auto s = AffineScaler::fit(catalog, 0.9);
  for (const auto& p : catalog) {
    auto y = s.to_gan(p.vec);
    for (double v : y) CHECK(std::fabs(v) <= 0.9);
    auto back = s.from_gan(y);
    for (std::size_t d = 0; d < back.size(); ++d)
      CHECK(back[d] == Catch::Approx(p.vec[d]).margin(1e-12));
  }
  // degenerate dimension maps to 0 and back to the shared value
  CHECK(s.to_gan({0.5, 0.0, 2.0})[2] == 0.0);
  CHECK(s.from_gan({0.0, 0.0, 0.37})[2] == 2.0);
}

TEST_CASE("gan checkpoint round-trips generator behaviour") {
  auto cfg = small_cfg();
  BasketGan gan(cfg);
  gan.scaler = AffineScaler::fit({{"a", {0.0, 1.0, -1.0}}, {"b", {2.0, 3.0, 1.0}}});

  auto path = std::filesystem::temp_directory_path() / "bg_gan_ckpt.txt";
  save_checkpoint(path, gan.to_checkpoint());
  auto loaded = BasketGan::from_checkpoint(load_checkpoint(path));
  std::filesystem::remove(path);

  std::mt19937_64 rng(18);
  auto z = gan.sample_noise(rng);
  CHECK(loaded.generate(z, {0.5, -0.5}) == gan.generate(z, {0.5, -0.5}));
  CHECK(loaded.scaler.lo == gan.scaler.lo);
  CHECK(loaded.scaler.hi == gan.scaler.hi);
}

TEST_CASE("toy conditional task: per-condition means land on the targets") {
  auto toy = make_toy_task(1024, 41);
  GanConfig cfg;
  cfg.x_dim = 2;
  cfg.cond_dim = 2;
  cfg.z_dim = 8;
  cfg.hidden = 32;
  cfg.batch = 64;
  cfg.lr = 1e-4;
  cfg.epochs = 400;
  cfg.seed = 42;
  BasketGan gan(cfg);
  gan.train(toy.data);
  double after = std::max(toy_mean_error(gan, toy, 0, 2000, 5),
                          toy_mean_error(gan, toy, 1, 2000, 5));
  INFO("mean error after training " << after);
  CHECK(after < 0.1);
}
