#pragma once

// Multi-task LSTM customer model. Consumes a customer's product-embedding
// sequence (baskets in week order) and exposes the hidden state as the
// customer representation. Trained with three heads, one sampled uniformly
// per optimization step: end-of-basket (binary), next product category
// (softmax) and next product price (squared error on standardized log1p).

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "basketgen/adam.hpp"
#include "basketgen/checkpoint.hpp"
#include "basketgen/domain.hpp"
#include "basketgen/graph.hpp"
#include "basketgen/rng.hpp"

namespace basketgen {

struct CustomerState {
  std::vector<double> hidden;
  std::vector<double> cell;
};

struct LstmConfig {
  std::size_t input_dim = 128;
  std::size_t hidden_dim = 128;
  std::size_t epochs = 25;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 1;
  bool shuffle_within_basket = true;
};

struct HeadMetrics {
  double eob_accuracy = 0.0;
  double category_accuracy = 0.0;
  double price_rmse = 0.0;  // in standardized log-price units
};

enum class LstmTask { end_of_basket = 0, next_category = 1, next_price = 2 };

class LstmModel {
 public:
  LstmModel() = default;

  LstmModel(LstmConfig cfg, std::vector<std::string> categories, std::mt19937_64& rng)
      : cfg_(cfg), categories_(std::move(categories)) {
    std::size_t D = cfg_.input_dim, H = cfg_.hidden_dim;
    std::size_t K = categories_.size();
    auto make = [&](const std::string& name, std::vector<std::size_t> shape, std::size_t fin,
                    std::size_t fout) {
      Tensor t(std::move(shape));
      init_glorot(t, fin, fout, rng);
      return std::make_shared<Parameter>(name, std::move(t));
    };
    w_ih_ = make("lstm.w_ih", {4 * H, D}, D, 4 * H);
    w_hh_ = make("lstm.w_hh", {4 * H, H}, H, 4 * H);
    b_ = std::make_shared<Parameter>("lstm.b", Tensor({4 * H}));
    for (std::size_t j = H; j < 2 * H; ++j) b_->value.v[j] = 1.0;  // forget-gate bias
    eob_w_ = make("head.eob.w", {1, H}, H, 1);
    eob_b_ = std::make_shared<Parameter>("head.eob.b", Tensor({1}));
    cat_w_ = make("head.cat.w", {K, H}, H, K);
    cat_b_ = std::make_shared<Parameter>("head.cat.b", Tensor({K}));
    price_w_ = make("head.price.w", {1, H}, H, 1);
    price_b_ = std::make_shared<Parameter>("head.price.b", Tensor({1}));
  }

  const LstmConfig& config() const { return cfg_; }
  const std::vector<std::string>& categories() const { return categories_; }
  double price_mean() const { return price_mean_; }
  double price_std() const { return price_std_; }
  void set_price_norm(double mean, double stddev) {
    price_mean_ = mean;
    price_std_ = stddev > 0.0 ? stddev : 1.0;
  }

  int category_id(const std::string& name) const {
    auto it = std::lower_bound(categories_.begin(), categories_.end(), name);
    if (it == categories_.end() || *it != name) return -1;
    return static_cast<int>(it - categories_.begin());
  }

  std::vector<ParamPtr> params() const {
    return {w_ih_, w_hh_, b_, eob_w_, eob_b_, cat_w_, cat_b_, price_w_, price_b_};
  }

  CustomerState initial_state() const {
    return {std::vector<double>(cfg_.hidden_dim, 0.0), std::vector<double>(cfg_.hidden_dim, 0.0)};
  }

  // One LSTM cell update (plain arithmetic path, no graph).
  CustomerState lstm_step(const CustomerState& state, const std::vector<double>& x) const {
    std::size_t D = cfg_.input_dim, H = cfg_.hidden_dim;
    if (x.size() != D) throw Error("lstm_step: input dim " + std::to_string(x.size()));
    if (state.hidden.size() != H || state.cell.size() != H)
      throw Error("lstm_step: state dim mismatch");
    std::vector<double> gates(b_->value.v);
    detail::gemm(gates.data(), w_ih_->value.v.data(), x.data(), 4 * H, 1, D, false, false, true);
    detail::gemm(gates.data(), w_hh_->value.v.data(), state.hidden.data(), 4 * H, 1, H, false,
                 false, true);
    CustomerState out;
    out.hidden.resize(H);
    out.cell.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
      double ig = detail::stable_sigmoid(gates[j]);
      double fg = detail::stable_sigmoid(gates[H + j]);
      double gg = std::tanh(gates[2 * H + j]);
      double og = detail::stable_sigmoid(gates[3 * H + j]);
      out.cell[j] = fg * state.cell[j] + ig * gg;
      out.hidden[j] = og * std::tanh(out.cell[j]);
    }
    return out;
  }

  // Folds lstm_step over a basket's products from the given state. An empty
  // basket returns the state unchanged and reports it.
  struct StepResult {
    CustomerState state;
    bool empty_basket = false;
  };
  StepResult update_state(const CustomerState& state, const Basket& basket,
                          const EmbeddedCatalog& embeds, bool sort_products = true) const {
    if (basket.product_ids.empty()) return {state, true};
    std::vector<std::string> ids = basket.product_ids;
    if (sort_products) std::sort(ids.begin(), ids.end());
    CustomerState s = state;
    for (const auto& id : ids) s = lstm_step(s, embeds.vec(id));
    return {std::move(s), false};
  }

  // Folds over the whole history (baskets in week order). Within-basket order
  // is randomized when an rng is supplied, ascending product id otherwise.
  CustomerState encode_history(const CustomerHistory& history, const EmbeddedCatalog& embeds,
                               std::mt19937_64* shuffle_rng = nullptr) const {
    if (history.baskets.empty()) throw Error("encode_history: empty history");
    CustomerState s = initial_state();
    for (const auto& basket : history.baskets) {
      std::vector<std::string> ids = basket.product_ids;
      std::sort(ids.begin(), ids.end());
      if (shuffle_rng) std::shuffle(ids.begin(), ids.end(), *shuffle_rng);
      for (const auto& id : ids) s = lstm_step(s, embeds.vec(id));
    }
    return s;
  }

  // ---- training ----------------------------------------------------------

  struct SequenceSample {
    std::vector<const std::vector<double>*> inputs;  // product vectors, in order
    std::vector<double> eob;                         // 1 at last product of each basket
    std::vector<int> next_category;                  // -1 when no next product
    std::vector<double> next_price_std;              // standardized log1p, NaN when invalid
  };

  SequenceSample make_sample(const CustomerHistory& history, const Catalog& catalog,
                             const EmbeddedCatalog& embeds,
                             std::mt19937_64* shuffle_rng) const {
    SequenceSample s;
    std::vector<std::string> ordered;
    for (const auto& basket : history.baskets) {
      std::vector<std::string> ids = basket.product_ids;
      std::sort(ids.begin(), ids.end());
      if (shuffle_rng) std::shuffle(ids.begin(), ids.end(), *shuffle_rng);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ordered.push_back(ids[i]);
        s.eob.push_back(i + 1 == ids.size() ? 1.0 : 0.0);
      }
    }
    for (std::size_t t = 0; t < ordered.size(); ++t) {
      s.inputs.push_back(&embeds.vec(ordered[t]));
      if (t + 1 < ordered.size()) {
        const auto& next = catalog.get(ordered[t + 1]);
        s.next_category.push_back(category_id(next.category));
        s.next_price_std.push_back((std::log1p(next.price) - price_mean_) / price_std_);
      } else {
        s.next_category.push_back(-1);
        s.next_price_std.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    return s;
  }

  // Builds the unrolled loss graph for one task over one sequence; returns
  // nothing when the task has no valid positions.
  std::optional<NodePtr> sequence_loss(const SequenceSample& seq, LstmTask task) const {
    std::size_t H = cfg_.hidden_dim;
    NodePtr wih = use(w_ih_), whh = use(w_hh_), b = use(b_);
    NodePtr h = make_leaf(Tensor({H}), "h0");
    NodePtr c = make_leaf(Tensor({H}), "c0");
    std::vector<NodePtr> losses;
    for (std::size_t t = 0; t < seq.inputs.size(); ++t) {
      NodePtr x = make_leaf(Tensor({cfg_.input_dim}, *seq.inputs[t]), "x" + std::to_string(t));
      NodePtr gates = add(add(matmul(wih, x), matmul(whh, h)), b);
      NodePtr ig = sigmoid_fn(slice(gates, 0, H));
      NodePtr fg = sigmoid_fn(slice(gates, H, H));
      NodePtr gg = tanh_fn(slice(gates, 2 * H, H));
      NodePtr og = sigmoid_fn(slice(gates, 3 * H, H));
      c = add(mul(fg, c), mul(ig, gg));
      h = mul(og, tanh_fn(c));

      switch (task) {
        case LstmTask::end_of_basket: {
          NodePtr logit = add(matmul(use(eob_w_), h), use(eob_b_));
          losses.push_back(bce_logits(logit, Tensor({1}, {seq.eob[t]})));
          break;
        }
        case LstmTask::next_category: {
          if (seq.next_category[t] < 0) break;
          NodePtr logits = add(matmul(use(cat_w_), h), use(cat_b_));
          losses.push_back(ce_logits(logits, seq.next_category[t]));
          break;
        }
        case LstmTask::next_price: {
          if (!std::isfinite(seq.next_price_std[t])) break;
          NodePtr pred = add(matmul(use(price_w_), h), use(price_b_));
          losses.push_back(mse(pred, Tensor({1}, {seq.next_price_std[t]})));
          break;
        }
      }
    }
    if (losses.empty()) return std::nullopt;
    NodePtr total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0 / static_cast<double>(losses.size()));
  }

  HeadMetrics evaluate(const std::vector<CustomerHistory>& histories, const Catalog& catalog,
                       const EmbeddedCatalog& embeds) const {
    HeadMetrics m;
    std::size_t eob_n = 0, eob_ok = 0, cat_n = 0, cat_ok = 0, price_n = 0;
    double sq = 0.0;
    for (const auto& hist : histories) {
      auto seq = make_sample(hist, catalog, embeds, nullptr);
      CustomerState s = initial_state();
      for (std::size_t t = 0; t < seq.inputs.size(); ++t) {
        s = lstm_step(s, *seq.inputs[t]);
        double eob_logit = dot(eob_w_->value.v, s.hidden) + eob_b_->value.v[0];
        ++eob_n;
        if ((eob_logit > 0.0) == (seq.eob[t] > 0.5)) ++eob_ok;
        if (seq.next_category[t] >= 0) {
          std::size_t K = categories_.size();
          int best = 0;
          double best_v = -1e300;
          for (std::size_t k = 0; k < K; ++k) {
            double v = cat_b_->value.v[k];
            const double* wr = cat_w_->value.v.data() + k * cfg_.hidden_dim;
            for (std::size_t j = 0; j < cfg_.hidden_dim; ++j) v += wr[j] * s.hidden[j];
            if (v > best_v) {
              best_v = v;
              best = static_cast<int>(k);
            }
          }
          ++cat_n;
          if (best == seq.next_category[t]) ++cat_ok;
        }
        if (std::isfinite(seq.next_price_std[t])) {
          double pred = dot(price_w_->value.v, s.hidden) + price_b_->value.v[0];
          double d = pred - seq.next_price_std[t];
          sq += d * d;
          ++price_n;
        }
      }
    }
    m.eob_accuracy = eob_n ? static_cast<double>(eob_ok) / static_cast<double>(eob_n) : 0.0;
    m.category_accuracy = cat_n ? static_cast<double>(cat_ok) / static_cast<double>(cat_n) : 0.0;
    m.price_rmse = price_n ? std::sqrt(sq / static_cast<double>(price_n)) : 0.0;
    return m;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.add_meta("model", "lstm-multitask");
    ckpt.add_meta("input_dim", std::to_string(cfg_.input_dim));
    ckpt.add_meta("hidden_dim", std::to_string(cfg_.hidden_dim));
    ckpt.add_meta("price_mean", num_to_str(price_mean_));
    ckpt.add_meta("price_std", num_to_str(price_std_));
    for (const auto& c : categories_) ckpt.add_meta("category", c);
    for (const auto& p : params()) ckpt.params.push_back(p);
    return ckpt;
  }

  static LstmModel from_checkpoint(const Checkpoint& ckpt) {
    LstmModel m;
    m.cfg_.input_dim = static_cast<std::size_t>(std::stoul(ckpt.meta_one("input_dim")));
    m.cfg_.hidden_dim = static_cast<std::size_t>(std::stoul(ckpt.meta_one("hidden_dim")));
    m.price_mean_ = std::stod(ckpt.meta_one("price_mean"));
    m.price_std_ = std::stod(ckpt.meta_one("price_std"));
    m.categories_ = ckpt.meta_all("category");
    m.w_ih_ = ckpt.find("lstm.w_ih");
    m.w_hh_ = ckpt.find("lstm.w_hh");
    m.b_ = ckpt.find("lstm.b");
    m.eob_w_ = ckpt.find("head.eob.w");
    m.eob_b_ = ckpt.find("head.eob.b");
    m.cat_w_ = ckpt.find("head.cat.w");
    m.cat_b_ = ckpt.find("head.cat.b");
    m.price_w_ = ckpt.find("head.price.w");
    m.price_b_ = ckpt.find("head.price.b");
    return m;
  }

 private:
  static std::string num_to_str(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
  }

  LstmConfig cfg_;
  std::vector<std::string> categories_;  // sorted
  double price_mean_ = 0.0, price_std_ = 1.0;
  ParamPtr w_ih_, w_hh_, b_;
  ParamPtr eob_w_, eob_b_, cat_w_, cat_b_, price_w_, price_b_;
};

inline std::vector<std::string> sorted_categories(const Catalog& catalog) {
  std::vector<std::string> cats;
  for (const auto& r : catalog.records) cats.push_back(r.category);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  return cats;
}

// Uniform task sampling per optimization step; one customer sequence per step.
inline LstmModel train_multitask(const std::vector<CustomerHistory>& histories,
                                 const Catalog& catalog, const EmbeddedCatalog& embeds,
                                 const LstmConfig& cfg) {
  if (histories.empty()) throw Error("train_multitask: no histories");
  auto init_rng = make_rng(cfg.seed, "lstm-init");
  LstmModel model(cfg, sorted_categories(catalog), init_rng);

  // standardize log1p(price) over all product occurrences
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  std::size_t next_targets = 0;
  for (const auto& h : histories) {
    std::size_t len = 0;
    for (const auto& b : h.baskets)
      for (const auto& id : b.product_ids) {
        double lp = std::log1p(catalog.get(id).price);
        sum += lp;
        sum_sq += lp * lp;
        ++n;
        ++len;
      }
    if (len >= 2) next_targets += len - 1;
  }
  if (next_targets == 0)
    throw Error("train_multitask: no next-product targets (all histories have a single product)");
  double mean = sum / static_cast<double>(n);
  double var = sum_sq / static_cast<double>(n) - mean * mean;
  model.set_price_norm(mean, std::sqrt(std::max(var, 0.0)));

  Adam opt(model.params(), {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
  auto task_rng = make_rng(cfg.seed, "lstm-task");
  auto order_rng = make_rng(cfg.seed, "lstm-order");
  auto shuffle_rng = make_rng(cfg.seed, "lstm-shuffle");
  std::uniform_int_distribution<int> pick_task(0, 2);

  std::vector<std::size_t> order(histories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t idx : order) {
      auto task = static_cast<LstmTask>(pick_task(task_rng));
      auto seq = model.make_sample(histories[idx], catalog, embeds,
                                   cfg.shuffle_within_basket ? &shuffle_rng : nullptr);
      auto loss = model.sequence_loss(seq, task);
      if (!loss) continue;  // no valid positions for this task in this sequence
      opt.zero_grad();
      backward(*loss);
      opt.step();
    }
  }
  opt.zero_grad();
  return model;
}

}  // namespace basketgen
