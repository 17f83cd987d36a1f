#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "basketgen/graph.hpp"

namespace basketgen {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

// Adam with bias correction. step() consumes the current gradient
// accumulators but does not clear them; callers zero_grad() afterwards.
class Adam {
 public:
  Adam(std::vector<ParamPtr> params, AdamConfig cfg = {})
      : cfg_(cfg), params_(std::move(params)) {
    for (const auto& p : params_) {
      m_.push_back(Tensor::zeros_like(p->value));
      v_.push_back(Tensor::zeros_like(p->value));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        double gr = p.grad.v[i];
        if (!std::isfinite(gr)) throw Error("adam: non-finite gradient for '" + p.name + "'");
        m_[k].v[i] = cfg_.beta1 * m_[k].v[i] + (1.0 - cfg_.beta1) * gr;
        v_[k].v[i] = cfg_.beta2 * v_[k].v[i] + (1.0 - cfg_.beta2) * gr * gr;
        double mhat = m_[k].v[i] / bc1;
        double vhat = v_[k].v[i] / bc2;
        p.value.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (!std::isfinite(p.value.v[i]))
          throw Error("adam: non-finite parameter '" + p.name + "'");
      }
    }
  }

  void zero_grad() {
    for (const auto& p : params_) p->zero_grad();
  }

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<ParamPtr> params_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace basketgen
