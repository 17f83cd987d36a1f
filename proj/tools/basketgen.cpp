// basketgen: synthetic customer transaction sequences.
//
// Pipeline stages: synth-data -> embed-products -> train-lstm -> train-gan ->
// generate -> evaluate (or `all` to run everything). Exit codes: 0 success,
// 2 usage error, 3 missing input, 4 stage failure, 5 invalid configuration.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "basketgen/pipeline.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitStageFailure = 4;
constexpr int kExitBadConfig = 5;

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  std::optional<std::size_t> world_customers, world_products, world_categories, world_personas;
  std::optional<long> world_horizon;

  std::optional<std::size_t> embed_dim, embed_window, embed_negatives, embed_epochs;

  std::optional<std::size_t> lstm_hidden, lstm_epochs;
  std::optional<double> lstm_lr;

  std::optional<double> gan_lambda, gan_lr, gan_clip;
  std::optional<std::size_t> gan_n_critic, gan_epochs, gan_z_dim, gan_batch, gan_hidden;

  std::optional<std::size_t> gen_k, gen_weeks, gen_max_basket;
  std::optional<std::string> gen_customers;

  std::optional<double> eval_min_support;
  std::optional<std::size_t> eval_top_k;
};

basketgen::PipelineConfig resolve(const Overrides& ov) {
  basketgen::PipelineConfig cfg;
  if (ov.config) cfg = basketgen::load_config(*ov.config);
  auto set = [](auto& dst, const auto& src) {
    if (src) dst = *src;
  };
  set(cfg.seed, ov.seed);
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  set(cfg.world_customers, ov.world_customers);
  set(cfg.world_products, ov.world_products);
  set(cfg.world_categories, ov.world_categories);
  set(cfg.world_personas, ov.world_personas);
  set(cfg.world_horizon, ov.world_horizon);
  set(cfg.embed_dim, ov.embed_dim);
  set(cfg.embed_window, ov.embed_window);
  set(cfg.embed_negatives, ov.embed_negatives);
  set(cfg.embed_epochs, ov.embed_epochs);
  set(cfg.lstm_hidden, ov.lstm_hidden);
  set(cfg.lstm_epochs, ov.lstm_epochs);
  set(cfg.lstm_lr, ov.lstm_lr);
  set(cfg.gan_lambda, ov.gan_lambda);
  set(cfg.gan_lr, ov.gan_lr);
  set(cfg.gan_clip, ov.gan_clip);
  set(cfg.gan_n_critic, ov.gan_n_critic);
  set(cfg.gan_epochs, ov.gan_epochs);
  set(cfg.gan_z_dim, ov.gan_z_dim);
  set(cfg.gan_batch, ov.gan_batch);
  set(cfg.gan_hidden, ov.gan_hidden);
  set(cfg.gen_k, ov.gen_k);
  set(cfg.gen_weeks, ov.gen_weeks);
  set(cfg.gen_max_basket, ov.gen_max_basket);
  set(cfg.gen_customers, ov.gen_customers);
  set(cfg.eval_min_support, ov.eval_min_support);
  set(cfg.eval_top_k, ov.eval_top_k);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config, "key = value configuration file");
  cmd->add_option("--seed", ov.seed, "root random seed");
  cmd->add_option("--out", ov.out_dir, "output directory (default: out)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "basketgen: generate and evaluate synthetic sequences of customer baskets\n"
      "exit codes: 0 success, 2 usage error, 3 missing input, 4 stage failure,\n"
      "5 invalid configuration"};
  app.require_subcommand(1);
  Overrides ov;

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic world");
  add_common(synth, ov);
  synth->add_option("--customers", ov.world_customers, "number of customers");
  synth->add_option("--products", ov.world_products, "number of products");
  synth->add_option("--categories", ov.world_categories, "number of categories");
  synth->add_option("--personas", ov.world_personas, "number of customer personas");
  synth->add_option("--horizon", ov.world_horizon, "number of weeks of history");

  auto* embed = app.add_subcommand("embed-products", "train skip-gram product embeddings");
  add_common(embed, ov);
  embed->add_option("--dim", ov.embed_dim, "embedding dimensionality");
  embed->add_option("--window", ov.embed_window, "context window size");
  embed->add_option("--negatives", ov.embed_negatives, "negative samples per pair");
  embed->add_option("--epochs", ov.embed_epochs, "training epochs");

  auto* lstm = app.add_subcommand("train-lstm", "train the multi-task customer LSTM");
  add_common(lstm, ov);
  lstm->add_option("--hidden", ov.lstm_hidden, "hidden state width");
  lstm->add_option("--epochs", ov.lstm_epochs, "training epochs");
  lstm->add_option("--lr", ov.lstm_lr, "learning rate");

  auto* gan = app.add_subcommand("train-gan", "train the conditional WGAN-GP");
  add_common(gan, ov);
  gan->add_option("--lambda", ov.gan_lambda, "gradient penalty coefficient (0 = weight clipping)");
  gan->add_option("--n-critic", ov.gan_n_critic, "critic steps per generator step");
  gan->add_option("--epochs", ov.gan_epochs, "training epochs");
  gan->add_option("--z-dim", ov.gan_z_dim, "noise dimensionality");
  gan->add_option("--batch", ov.gan_batch, "batch size");
  gan->add_option("--lr", ov.gan_lr, "learning rate");
  gan->add_option("--hidden", ov.gan_hidden, "hidden layer width");
  gan->add_option("--clip", ov.gan_clip, "weight clip bound for the lambda=0 fallback");

  auto* gen = app.add_subcommand("generate", "generate future basket sequences");
  add_common(gen, ov);
  gen->add_option("--weeks", ov.gen_weeks, "number of weeks to generate");
  gen->add_option("--k", ov.gen_k, "nearest customers for basket-size sampling");
  gen->add_option("--customers", ov.gen_customers, "'all' or a file of customer ids");
  gen->add_option("--max-basket-size", ov.gen_max_basket, "cap on sampled basket sizes");

  auto* eval = app.add_subcommand("evaluate", "compare generated data against the real data");
  add_common(eval, ov);
  eval->add_option("--min-support", ov.eval_min_support,
                   "pattern mining minimum support fraction");
  eval->add_option("--top-k", ov.eval_top_k, "top-k for the coverage summary");

  auto* all = app.add_subcommand("all", "run the full pipeline");
  add_common(all, ov);
  all->add_option("--gan-epochs", ov.gan_epochs, "GAN training epochs");
  all->add_option("--lstm-epochs", ov.lstm_epochs, "LSTM training epochs");
  all->add_option("--customers", ov.world_customers, "number of synthetic customers");
  all->add_option("--weeks", ov.gen_weeks, "number of weeks to generate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    basketgen::PipelineConfig cfg = resolve(ov);
    if (synth->parsed()) basketgen::run_synth(cfg);
    else if (embed->parsed()) basketgen::run_embed(cfg);
    else if (lstm->parsed()) basketgen::run_lstm(cfg);
    else if (gan->parsed()) basketgen::run_gan(cfg);
    else if (gen->parsed()) basketgen::run_generate(cfg);
    else if (eval->parsed()) basketgen::run_evaluate(cfg);
    else if (all->parsed()) basketgen::run_all(cfg);
    return 0;
  } catch (const basketgen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const basketgen::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
}
