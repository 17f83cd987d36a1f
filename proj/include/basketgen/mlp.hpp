#pragma once

// Affine-stack networks (dense layers + pointwise activations). This is the
// architecture class used by both the generator and the critic, and the class
// for which an input-gradient graph can be written in closed form.

#include <string>
#include <vector>

#include "basketgen/graph.hpp"
#include "basketgen/rng.hpp"

namespace basketgen {

enum class Act { identity, relu, tanh_act, sigmoid_act };

inline std::string act_name(Act a) {
  switch (a) {
    case Act::identity: return "identity";
    case Act::relu: return "relu";
    case Act::tanh_act: return "tanh";
    case Act::sigmoid_act: return "sigmoid";
  }
  return "?";
}

struct DenseLayer {
  ParamPtr weight;  // {out, in}
  ParamPtr bias;    // {out}
  Act act = Act::identity;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  static Mlp create(const std::string& prefix, std::size_t in_dim,
                    const std::vector<std::size_t>& widths, const std::vector<Act>& acts,
                    std::mt19937_64& rng) {
    if (widths.size() != acts.size()) throw Error("mlp: widths/acts size mismatch");
    Mlp m;
    std::size_t in = in_dim;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      std::size_t out = widths[l];
      Tensor w({out, in});
      init_glorot(w, in, out, rng);
      DenseLayer layer;
      layer.weight = std::make_shared<Parameter>(prefix + ".w" + std::to_string(l), std::move(w));
      layer.bias = std::make_shared<Parameter>(prefix + ".b" + std::to_string(l), Tensor({out}));
      layer.act = acts[l];
      m.layers.push_back(std::move(layer));
      in = out;
    }
    return m;
  }

  std::size_t in_dim() const { return layers.front().weight->value.shape[1]; }
  std::size_t out_dim() const { return layers.back().weight->value.shape[0]; }

  std::vector<ParamPtr> params() const {
    std::vector<ParamPtr> ps;
    for (const auto& l : layers) {
      ps.push_back(l.weight);
      ps.push_back(l.bias);
    }
    return ps;
  }

  void set_frozen(bool frozen) const {
    for (const auto& l : layers) {
      l.weight->frozen = frozen;
      l.bias->frozen = frozen;
    }
  }
};

struct MlpGraph {
  NodePtr out;
  std::vector<NodePtr> preact;   // z_l before activation
  std::vector<NodePtr> act_out;  // a_l after activation
};

namespace detail {
inline NodePtr apply_act(Act act, NodePtr z) {
  switch (act) {
    case Act::identity: return z;
    case Act::relu: return relu(std::move(z));
    case Act::tanh_act: return tanh_fn(std::move(z));
    case Act::sigmoid_act: return sigmoid_fn(std::move(z));
  }
  throw Error("mlp: unknown activation");
}
}  // namespace detail

// x is rank 1 {in} or rank 2 {batch, in}.
inline MlpGraph mlp_forward(const Mlp& m, NodePtr x) {
  MlpGraph g;
  NodePtr a = std::move(x);
  bool batched = a->value.rank() == 2;
  for (const auto& layer : m.layers) {
    NodePtr z;
    if (batched)
      z = add_rowvec(matmul(a, use(layer.weight), false, true), use(layer.bias));
    else
      z = add(matmul(use(layer.weight), a), use(layer.bias));
    g.preact.push_back(z);
    a = detail::apply_act(layer.act, z);
    g.act_out.push_back(a);
  }
  g.out = a;
  return g;
}

// Plain (graph-free) evaluation for inference paths.
inline Tensor mlp_apply(const Mlp& m, const Tensor& x) {
  Tensor a = x;
  bool batched = x.rank() == 2;
  for (const auto& layer : m.layers) {
    const Tensor& W = layer.weight->value;
    const Tensor& b = layer.bias->value;
    std::size_t out = W.shape[0], in = W.shape[1];
    std::size_t rows = batched ? a.shape[0] : 1;
    if ((batched ? a.shape[1] : a.shape[0]) != in)
      throw Error("mlp_apply: input width " + shape_str(a));
    Tensor z = batched ? Tensor({rows, out}) : Tensor({out});
    detail::gemm(z.v.data(), a.v.data(), W.v.data(), rows, out, in, false, true, false);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < out; ++j) z.v[i * out + j] += b.v[j];
    for (auto& v : z.v) {
      switch (layer.act) {
        case Act::identity: break;
        case Act::relu: v = v > 0.0 ? v : 0.0; break;
        case Act::tanh_act: v = std::tanh(v); break;
        case Act::sigmoid_act: v = detail::stable_sigmoid(v); break;
      }
    }
    a = std::move(z);
  }
  return a;
}

namespace detail {
inline NodePtr act_deriv_node(Act act, const NodePtr& z, const NodePtr& a) {
  switch (act) {
    case Act::identity: return nullptr;
    case Act::relu: return relu_mask(z);
    case Act::tanh_act: return add_const(scale(square(a), -1.0), 1.0);
    case Act::sigmoid_act: return sub(a, square(a));
  }
  throw Error("input gradient: unsupported layer activation");
}
}  // namespace detail

// Gradient of the (scalar-output) network with respect to its input, written
// as a differentiable composition of the layer weights and activation
// derivatives. Backprop through the returned node yields the parameter
// gradients of any function of the input gradient.
inline NodePtr mlp_input_gradient(const Mlp& m, const MlpGraph& fwd) {
  if (m.out_dim() != 1) throw Error("input gradient: network output must be scalar");
  bool batched = fwd.out->value.rank() == 2;
  std::size_t batch = batched ? fwd.out->value.shape[0] : 0;

  NodePtr u;  // running row gradient, {batch, width_l} or {width_l}
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& layer = m.layers[li];
    NodePtr d = detail::act_deriv_node(layer.act, fwd.preact[li], fwd.act_out[li]);
    if (!u) {
      // topmost layer: start from the activation derivative (or ones)
      if (d) {
        u = d;
      } else {
        Tensor ones = batched ? Tensor({batch, 1}) : Tensor({std::size_t{1}});
        ones.fill(1.0);
        u = make_leaf(std::move(ones), "ones");
      }
    } else if (d) {
      u = mul(u, d);
    }
    if (batched)
      u = matmul(u, use(layer.weight));  // {B,out}x{out,in} -> {B,in}
    else
      u = matmul(use(layer.weight), u, /*ta=*/true);  // W^T u -> {in}
  }
  return u;
}

}  // namespace basketgen
