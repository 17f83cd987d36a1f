#pragma once

// Conditional Wasserstein GAN with gradient penalty. The generator maps
// noise + condition (customer state, week encoding) to a product embedding;
// the critic scores embedding + condition. Training alternates n_critic
// critic steps per generator step. With lambda == 0 the critic falls back to
// weight clipping (the original WGAN rule).

#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "basketgen/adam.hpp"
#include "basketgen/checkpoint.hpp"
#include "basketgen/domain.hpp"
#include "basketgen/mlp.hpp"
#include "basketgen/nearest.hpp"
#include "basketgen/rng.hpp"

namespace basketgen {

struct GanConfig {
  std::size_t x_dim = 128;
  std::size_t cond_dim = 0;
  std::size_t z_dim = 64;
  std::size_t hidden = 256;
  double lambda = 10.0;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  std::size_t n_critic = 5;
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double clip = 0.01;              // weight clip bound when lambda == 0
  double divergence_bound = 1e4;   // abort when |critic loss| stays above this
  std::uint64_t seed = 1;
};

// Per-dimension affine map of product vectors into [-target, target], so the
// tanh generator output can cover the data support. Inverse applied before
// retrieval against the raw catalog.
struct AffineScaler {
  std::vector<double> lo, hi;
  double target = 0.9;

  static AffineScaler fit(const std::vector<ProductVector>& catalog, double target = 0.9) {
    if (catalog.empty()) throw Error("scaler: empty catalog");
    AffineScaler s;
    s.target = target;
    s.lo = s.hi = catalog[0].vec;
    for (const auto& p : catalog)
      for (std::size_t d = 0; d < p.vec.size(); ++d) {
        s.lo[d] = std::min(s.lo[d], p.vec[d]);
        s.hi[d] = std::max(s.hi[d], p.vec[d]);
      }
    return s;
  }

  std::vector<double> to_gan(const std::vector<double>& x) const {
    std::vector<double> y(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) {
      double span = hi[d] - lo[d];
      y[d] = span > 0.0 ? -target + 2.0 * target * (x[d] - lo[d]) / span : 0.0;
    }
    return y;
  }
  std::vector<double> from_gan(const std::vector<double>& y) const {
    std::vector<double> x(y.size());
    for (std::size_t d = 0; d < y.size(); ++d) {
      double span = hi[d] - lo[d];
      x[d] = span > 0.0 ? lo[d] + (y[d] + target) * span / (2.0 * target) : lo[d];
    }
    return x;
  }
  bool empty() const { return lo.empty(); }
};

struct GanTrainSample {
  std::vector<double> x;     // product vector in GAN space
  std::vector<double> cond;  // customer state ++ week encoding
};

struct CriticLossResult {
  double loss = 0.0;
  double penalty_term = 0.0;    // lambda-scaled contribution to the loss
  double mean_grad_norm = 0.0;  // mean ||grad_x D(xhat)|| over the batch
};

namespace detail {

inline NodePtr with_condition(NodePtr x, NodePtr cond, std::size_t cond_dim) {
  if (cond_dim == 0) return x;
  return concat({std::move(x), std::move(cond)});
}

inline void fill_rows(Tensor& dst, const std::vector<const std::vector<double>*>& rows) {
  std::size_t w = dst.shape[1];
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i]->begin(), rows[i]->end(), dst.v.begin() + i * w);
}

}  // namespace detail

// Critic loss graph: mean[-D(real|c)] + mean[D(fake|c)]
//                    + lambda * mean[(||grad_xhat D(xhat|c)|| - 1)^2],
// xhat = eps*x + (1-eps)*fake, eps per sample. Fake inputs are constants
// here, so only critic parameters receive gradients.
struct CriticLossGraph {
  NodePtr x_real, x_fake, cond, eps;
  NodePtr loss, penalty_term, grad_norm_mean;
  Compiled compiled;

  CriticLossGraph(const Mlp& critic, std::size_t batch, std::size_t x_dim, std::size_t cond_dim,
                  double lambda) {
    x_real = make_leaf(Tensor({batch, x_dim}), "x_real");
    x_fake = make_leaf(Tensor({batch, x_dim}), "x_fake");
    cond = make_leaf(Tensor({batch, std::max<std::size_t>(cond_dim, 1)}), "cond");
    eps = make_leaf(Tensor({batch}), "eps");

    auto d_real = mlp_forward(critic, detail::with_condition(x_real, cond, cond_dim));
    auto d_fake = mlp_forward(critic, detail::with_condition(x_fake, cond, cond_dim));

    NodePtr one_minus_eps = add_const(scale(eps, -1.0), 1.0);
    NodePtr xhat = add(mul_colvec(x_real, eps), mul_colvec(x_fake, one_minus_eps));
    auto d_interp = mlp_forward(critic, detail::with_condition(xhat, cond, cond_dim));
    NodePtr g_full = mlp_input_gradient(critic, d_interp);
    NodePtr g_x = cond_dim == 0 ? g_full : slice(g_full, 0, x_dim);
    NodePtr norms = rownorm(g_x, "interp_grad_norm");
    grad_norm_mean = mean_all(norms);
    penalty_term = scale(mean_all(square(add_const(norms, -1.0))), lambda);

    NodePtr wass = add(mean_all(scale(d_real.out, -1.0)), mean_all(d_fake.out));
    loss = add(wass, penalty_term);
    // probe root: evaluates the reporting heads, contributes zero gradient
    NodePtr probe = add(loss, scale(grad_norm_mean, 0.0));
    compiled = compile(probe);
  }

  CriticLossResult run(const Tensor& real, const Tensor& fake, const Tensor& conds,
                       const Tensor& eps_draws, bool with_grad = true) {
    set_value(x_real, real);
    set_value(x_fake, fake);
    if (conds.size() > 0) set_value(cond, conds);
    set_value(eps, eps_draws);
    forward(compiled);
    if (with_grad) backward(compiled);
    // penalty/grad-norm nodes are part of the compiled graph, values fresh
    return {loss->value.v[0], penalty_term->value.v[0], grad_norm_mean->value.v[0]};
  }
};

// Generator loss graph: -mean[D(G(z|c)|c)]. Critic parameters are frozen
// while backpropagating this loss.
struct GeneratorLossGraph {
  NodePtr z, cond;
  NodePtr fake;  // generator output, exposed for tests
  NodePtr loss;
  Compiled compiled;

  GeneratorLossGraph(const Mlp& gen, const Mlp& critic, std::size_t batch, std::size_t z_dim,
                     std::size_t cond_dim) {
    z = make_leaf(Tensor({batch, z_dim}), "z");
    cond = make_leaf(Tensor({batch, std::max<std::size_t>(cond_dim, 1)}), "cond");
    auto g = mlp_forward(gen, detail::with_condition(z, cond, cond_dim));
    fake = g.out;
    auto d = mlp_forward(critic, detail::with_condition(fake, cond, cond_dim));
    loss = scale(mean_all(d.out), -1.0);
    compiled = compile(loss);
  }

  double run(const Mlp& critic, const Tensor& z_draws, const Tensor& conds,
             bool with_grad = true) {
    set_value(z, z_draws);
    if (conds.size() > 0) set_value(cond, conds);
    forward(compiled);
    if (with_grad) {
      critic.set_frozen(true);
      backward(compiled);
      critic.set_frozen(false);
    }
    return loss->value.v[0];
  }
};

struct GanMetricsRow {
  std::size_t step;
  double critic_loss, generator_loss, penalty, grad_norm;
};

struct BasketGan {
  GanConfig cfg;
  Mlp gen;
  Mlp critic;
  AffineScaler scaler;  // identity (empty) until the pipeline fits one

  explicit BasketGan(GanConfig config) : cfg(config) {
    auto rng = make_rng(cfg.seed, "gan-init");
    gen = Mlp::create("gen", cfg.z_dim + cfg.cond_dim, {cfg.hidden, cfg.hidden, cfg.x_dim},
                      {Act::relu, Act::relu, Act::tanh_act}, rng);
    critic = Mlp::create("critic", cfg.x_dim + cfg.cond_dim, {cfg.hidden, cfg.hidden, 1},
                         {Act::relu, Act::relu, Act::identity}, rng);
  }

  // Deterministic function of (z, cond, parameters); entries in (-1, 1).
  std::vector<double> generate(const std::vector<double>& z,
                               const std::vector<double>& cond) const {
    if (z.size() != cfg.z_dim || cond.size() != cfg.cond_dim)
      throw Error("generate: dimension mismatch");
    Tensor in({cfg.z_dim + cfg.cond_dim});
    std::copy(z.begin(), z.end(), in.v.begin());
    std::copy(cond.begin(), cond.end(), in.v.begin() + static_cast<std::ptrdiff_t>(cfg.z_dim));
    return mlp_apply(gen, in).v;
  }

  std::vector<double> sample_noise(std::mt19937_64& rng) const {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> z(cfg.z_dim);
    for (auto& v : z) v = n(rng);
    return z;
  }

  // Raw-space product vector: generate, then invert the scaler.
  std::vector<double> generate_product_vector(const std::vector<double>& cond,
                                              std::mt19937_64& rng) const {
    auto y = generate(sample_noise(rng), cond);
    return scaler.empty() ? y : scaler.from_gan(y);
  }

  // Draws z, generates, returns the nearest known product id (L2).
  std::string generate_known_product(const std::vector<double>& cond,
                                     const std::vector<ProductVector>& catalog,
                                     std::mt19937_64& rng) const {
    auto x = generate_product_vector(cond, rng);
    return catalog[nearest_index(x, catalog)].product_id;
  }

  // Alternating optimization; one epoch passes the real data through the
  // critic once. Metrics rows are appended per critic step when a sink is
  // given. Aborts if |critic loss| exceeds cfg.divergence_bound for 100
  // consecutive steps.
  void train(const std::vector<GanTrainSample>& data, std::ostream* metrics = nullptr) {
    if (data.empty()) throw Error("gan train: empty dataset");
    for (const auto& s : data)
      if (s.x.size() != cfg.x_dim || s.cond.size() != cfg.cond_dim)
        throw Error("gan train: sample dimension mismatch");
    const std::size_t B = std::min(cfg.batch, data.size());
    if (metrics)
      *metrics << "step,critic_loss,generator_loss,penalty,grad_norm\n";
    if (cfg.epochs == 0) return;

    CriticLossGraph closs(critic, B, cfg.x_dim, cfg.cond_dim, cfg.lambda);
    GeneratorLossGraph gloss(gen, critic, B, cfg.z_dim, cfg.cond_dim);
    Adam critic_opt(critic.params(), {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
    Adam gen_opt(gen.params(), {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});

    auto order_rng = make_rng(cfg.seed, "gan-order");
    auto noise_rng = make_rng(cfg.seed, "gan-noise");
    auto eps_rng = make_rng(cfg.seed, "gan-eps");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Tensor real({B, cfg.x_dim}), fake({B, cfg.x_dim});
    Tensor conds({B, std::max<std::size_t>(cfg.cond_dim, 1)});
    Tensor zs({B, cfg.z_dim}), eps({B});
    Tensor gen_in({B, cfg.z_dim + cfg.cond_dim});

    std::size_t step = 0, since_gen = 0, diverged_run = 0;
    double last_gen_loss = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), order_rng);
      for (std::size_t start = 0; start + B <= order.size(); start += B) {
        // assemble the real batch and matching conditions
        for (std::size_t i = 0; i < B; ++i) {
          const auto& s = data[order[start + i]];
          std::copy(s.x.begin(), s.x.end(), real.v.begin() + i * cfg.x_dim);
          if (cfg.cond_dim)
            std::copy(s.cond.begin(), s.cond.end(), conds.v.begin() + i * cfg.cond_dim);
        }
        // fake batch from the current generator (constant wrt critic step)
        for (auto& v : zs.v) v = normal(noise_rng);
        for (std::size_t i = 0; i < B; ++i) {
          std::copy(zs.v.begin() + i * cfg.z_dim, zs.v.begin() + (i + 1) * cfg.z_dim,
                    gen_in.v.begin() + i * (cfg.z_dim + cfg.cond_dim));
          if (cfg.cond_dim)
            std::copy(conds.v.begin() + i * cfg.cond_dim, conds.v.begin() + (i + 1) * cfg.cond_dim,
                      gen_in.v.begin() + i * (cfg.z_dim + cfg.cond_dim) + cfg.z_dim);
        }
        Tensor fake_out = mlp_apply(gen, gen_in);
        fake.v = fake_out.v;
        for (auto& v : eps.v) v = uniform(eps_rng);

        critic_opt.zero_grad();
        auto res = closs.run(real, fake, conds, eps);
        critic_opt.step();
        critic_opt.zero_grad();
        if (cfg.lambda == 0.0) clip_critic();

        ++step;
        if (metrics)
          *metrics << step << "," << res.loss << "," << last_gen_loss << "," << res.penalty_term
                   << "," << res.mean_grad_norm << "\n";
        diverged_run = std::fabs(res.loss) > cfg.divergence_bound ? diverged_run + 1 : 0;
        if (diverged_run >= 100)
          throw Error("gan train: critic loss above " + std::to_string(cfg.divergence_bound) +
                      " for 100 consecutive steps (last " + std::to_string(res.loss) + ")");

        if (++since_gen == cfg.n_critic) {
          since_gen = 0;
          for (auto& v : zs.v) v = normal(noise_rng);
          gen_opt.zero_grad();
          last_gen_loss = gloss.run(critic, zs, conds);
          gen_opt.step();
          gen_opt.zero_grad();
        }
      }
    }
  }

  void clip_critic() {
    for (const auto& p : critic.params())
      for (auto& v : p->value.v) v = std::clamp(v, -cfg.clip, cfg.clip);
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.add_meta("model", "wgan-gp");
    ckpt.add_meta("x_dim", std::to_string(cfg.x_dim));
    ckpt.add_meta("cond_dim", std::to_string(cfg.cond_dim));
    ckpt.add_meta("z_dim", std::to_string(cfg.z_dim));
    ckpt.add_meta("hidden", std::to_string(cfg.hidden));
    ckpt.add_meta("scaler_target", num_str(scaler.target));
    for (const auto& p : gen.params()) ckpt.params.push_back(p);
    for (const auto& p : critic.params()) ckpt.params.push_back(p);
    if (!scaler.empty()) {
      ckpt.params.push_back(
          std::make_shared<Parameter>("scaler.lo", Tensor({scaler.lo.size()}, scaler.lo)));
      ckpt.params.push_back(
          std::make_shared<Parameter>("scaler.hi", Tensor({scaler.hi.size()}, scaler.hi)));
    }
    return ckpt;
  }

  static BasketGan from_checkpoint(const Checkpoint& ckpt, GanConfig cfg = {}) {
    cfg.x_dim = static_cast<std::size_t>(std::stoul(ckpt.meta_one("x_dim")));
    cfg.cond_dim = static_cast<std::size_t>(std::stoul(ckpt.meta_one("cond_dim")));
    cfg.z_dim = static_cast<std::size_t>(std::stoul(ckpt.meta_one("z_dim")));
    cfg.hidden = static_cast<std::size_t>(std::stoul(ckpt.meta_one("hidden")));
    BasketGan g(cfg);
    auto wire = [&](Mlp& net) {
      for (auto& layer : net.layers) {
        layer.weight = ckpt.find(layer.weight->name);
        layer.bias = ckpt.find(layer.bias->name);
      }
    };
    wire(g.gen);
    wire(g.critic);
    bool has_scaler = false;
    for (const auto& p : ckpt.params)
      if (p->name == "scaler.lo") has_scaler = true;
    if (has_scaler) {
      g.scaler.lo = ckpt.find("scaler.lo")->value.v;
      g.scaler.hi = ckpt.find("scaler.hi")->value.v;
      g.scaler.target = std::stod(ckpt.meta_one("scaler_target"));
    }
    return g;
  }

 private:
  static std::string num_str(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
  }
};

}  // namespace basketgen
