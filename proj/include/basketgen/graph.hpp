#pragma once

// Reverse-mode computation graph over dense double tensors.
//
// Graphs are built once (shapes fixed at build time), then re-evaluated with
// forward() after rebinding leaf values. backward() accumulates d(root)/d(p)
// into each reachable Parameter's grad buffer; intermediate grads are scratch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "basketgen/tensor.hpp"

namespace basketgen {

enum class Op {
  leaf,
  param,
  matmul,
  add,
  sub,
  mul,
  add_rowvec,
  mul_colvec,
  broadcast_rows,
  concat,
  slice,
  relu,
  relu_mask,
  tanh_fn,
  sigmoid_fn,
  square,
  rownorm,
  mean_all,
  sum_all,
  scale,
  add_const,
  bce_logits,
  ce_logits,
  mse,
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // accumulator; cleared only by zero_grad()
  bool frozen = false;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros_like(value);
  }
  void zero_grad() { grad.fill(0.0); }
};
using ParamPtr = std::shared_ptr<Parameter>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Op op = Op::leaf;
  std::string name;
  std::vector<NodePtr> inputs;
  ParamPtr par;  // op == param

  Tensor value;
  Tensor grad;  // scratch managed by backward()

  // op attributes
  bool ta = false, tb = false;         // matmul transpose flags
  std::size_t off = 0, len = 0;        // slice
  std::size_t nrows = 0;               // broadcast_rows
  double c = 0.0;                      // scale / add_const
  Tensor target;                       // bce_logits / mse constant target
  int label = 0;                       // ce_logits target id
};

namespace detail {

inline NodePtr make_node(Op op, std::vector<NodePtr> in, std::string name) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->inputs = std::move(in);
  n->name = std::move(name);
  return n;
}

[[noreturn]] inline void shape_error(const Node& n, const std::string& what) {
  throw Error("shape mismatch at node '" + (n.name.empty() ? std::string("?") : n.name) +
              "': " + what);
}

// C (+)= op(A) * op(B), row-major. Logical dims M x K times K x N.
inline void gemm(double* C, const double* A, const double* B, std::size_t M, std::size_t N,
                 std::size_t K, bool ta, bool tb, bool accumulate) {
  if (!accumulate) std::fill(C, C + M * N, 0.0);
  if (N == 1) {  // matrix-vector fast paths
    if (!ta) {
      for (std::size_t i = 0; i < M; ++i) {
        const double* arow = A + i * K;
        double s = 0.0;
        for (std::size_t l = 0; l < K; ++l) s += arow[l] * B[l];
        C[i] += s;
      }
    } else {
      for (std::size_t l = 0; l < K; ++l) {
        double b = B[l];
        if (b == 0.0) continue;
        const double* arow = A + l * M;
        for (std::size_t i = 0; i < M; ++i) C[i] += arow[i] * b;
      }
    }
    return;
  }
  if (!ta && !tb) {
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t l = 0; l < K; ++l) {
        double a = A[i * K + l];
        if (a == 0.0) continue;
        const double* brow = B + l * N;
        double* crow = C + i * N;
        for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < M; ++i) {
      const double* arow = A + i * K;
      for (std::size_t j = 0; j < N; ++j) {
        const double* brow = B + j * K;
        double s = 0.0;
        for (std::size_t l = 0; l < K; ++l) s += arow[l] * brow[l];
        C[i * N + j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t l = 0; l < K; ++l) {
      const double* arow = A + l * M;
      const double* brow = B + l * N;
      for (std::size_t i = 0; i < M; ++i) {
        double a = arow[i];
        if (a == 0.0) continue;
        double* crow = C + i * N;
        for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < K; ++l) s += A[l * M + i] * B[j * K + l];
        C[i * N + j] += s;
      }
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---- builders ----------------------------------------------------------

inline NodePtr make_leaf(Tensor v, std::string name = "leaf") {
  auto n = detail::make_node(Op::leaf, {}, std::move(name));
  n->value = std::move(v);
  return n;
}

inline NodePtr use(const ParamPtr& p) {
  auto n = detail::make_node(Op::param, {}, p->name);
  n->par = p;
  n->value = p->value;  // refreshed every forward()
  return n;
}

inline void set_value(const NodePtr& leaf, const Tensor& v) {
  if (leaf->op != Op::leaf) throw Error("set_value: node '" + leaf->name + "' is not a leaf");
  if (!leaf->value.same_shape(v))
    detail::shape_error(*leaf, "rebind " + shape_str(leaf->value) + " vs " + shape_str(v));
  leaf->value.v = v.v;
}

inline NodePtr matmul(NodePtr a, NodePtr b, bool ta = false, bool tb = false,
                      std::string name = "matmul") {
  auto n = detail::make_node(Op::matmul, {std::move(a), std::move(b)}, std::move(name));
  const Tensor& A = n->inputs[0]->value;
  const Tensor& B = n->inputs[1]->value;
  if (A.rank() != 2) detail::shape_error(*n, "lhs must be rank 2, got " + shape_str(A));
  if (B.rank() != 1 && B.rank() != 2)
    detail::shape_error(*n, "rhs must be rank 1 or 2, got " + shape_str(B));
  if (B.rank() == 1 && tb) detail::shape_error(*n, "cannot transpose rank-1 rhs");
  std::size_t M = ta ? A.shape[1] : A.shape[0];
  std::size_t K = ta ? A.shape[0] : A.shape[1];
  std::size_t Kb = (B.rank() == 1) ? B.shape[0] : (tb ? B.shape[1] : B.shape[0]);
  std::size_t N = (B.rank() == 1) ? 1 : (tb ? B.shape[0] : B.shape[1]);
  if (K != Kb)
    detail::shape_error(*n, "inner dims " + shape_str(A) + " x " + shape_str(B));
  n->ta = ta;
  n->tb = tb;
  n->value = (B.rank() == 1) ? Tensor({M}) : Tensor({M, N});
  return n;
}

namespace detail {
inline NodePtr binary_same_shape(Op op, NodePtr a, NodePtr b, std::string name) {
  auto n = make_node(op, {std::move(a), std::move(b)}, std::move(name));
  if (!n->inputs[0]->value.same_shape(n->inputs[1]->value))
    shape_error(*n, shape_str(n->inputs[0]->value) + " vs " + shape_str(n->inputs[1]->value));
  n->value = Tensor::zeros_like(n->inputs[0]->value);
  return n;
}
inline NodePtr unary_same_shape(Op op, NodePtr a, std::string name) {
  auto n = make_node(op, {std::move(a)}, std::move(name));
  n->value = Tensor::zeros_like(n->inputs[0]->value);
  return n;
}
}  // namespace detail

inline NodePtr add(NodePtr a, NodePtr b) { return detail::binary_same_shape(Op::add, std::move(a), std::move(b), "add"); }
inline NodePtr sub(NodePtr a, NodePtr b) { return detail::binary_same_shape(Op::sub, std::move(a), std::move(b), "sub"); }
inline NodePtr mul(NodePtr a, NodePtr b) { return detail::binary_same_shape(Op::mul, std::move(a), std::move(b), "mul"); }

inline NodePtr add_rowvec(NodePtr a, NodePtr v, std::string name = "add_rowvec") {
  auto n = detail::make_node(Op::add_rowvec, {std::move(a), std::move(v)}, std::move(name));
  const Tensor& A = n->inputs[0]->value;
  const Tensor& V = n->inputs[1]->value;
  if (A.rank() != 2 || V.rank() != 1 || A.shape[1] != V.shape[0])
    detail::shape_error(*n, shape_str(A) + " + row " + shape_str(V));
  n->value = Tensor::zeros_like(A);
  return n;
}

inline NodePtr mul_colvec(NodePtr a, NodePtr v, std::string name = "mul_colvec") {
  auto n = detail::make_node(Op::mul_colvec, {std::move(a), std::move(v)}, std::move(name));
  const Tensor& A = n->inputs[0]->value;
  const Tensor& V = n->inputs[1]->value;
  if (A.rank() != 2 || V.rank() != 1 || A.shape[0] != V.shape[0])
    detail::shape_error(*n, shape_str(A) + " * col " + shape_str(V));
  n->value = Tensor::zeros_like(A);
  return n;
}

inline NodePtr broadcast_rows(NodePtr v, std::size_t nrows, std::string name = "broadcast_rows") {
  auto n = detail::make_node(Op::broadcast_rows, {std::move(v)}, std::move(name));
  const Tensor& V = n->inputs[0]->value;
  std::size_t w = V.size();
  if (V.rank() > 2 || (V.rank() == 2 && V.shape[0] != 1))
    detail::shape_error(*n, "need vector or single row, got " + shape_str(V));
  n->nrows = nrows;
  n->value = Tensor({nrows, w});
  return n;
}

inline NodePtr concat(std::vector<NodePtr> parts, std::string name = "concat") {
  if (parts.empty()) throw Error("concat: no inputs");
  auto n = detail::make_node(Op::concat, std::move(parts), std::move(name));
  std::size_t rank = n->inputs[0]->value.rank();
  if (rank != 1 && rank != 2) detail::shape_error(*n, "concat supports rank 1 or 2");
  std::size_t total = 0;
  for (const auto& in : n->inputs) {
    if (in->value.rank() != rank) detail::shape_error(*n, "mixed ranks");
    if (rank == 2 && in->value.shape[0] != n->inputs[0]->value.shape[0])
      detail::shape_error(*n, "row counts differ");
    total += rank == 1 ? in->value.shape[0] : in->value.shape[1];
  }
  n->value = rank == 1 ? Tensor({total}) : Tensor({n->inputs[0]->value.shape[0], total});
  return n;
}

inline NodePtr slice(NodePtr a, std::size_t off, std::size_t len, std::string name = "slice") {
  auto n = detail::make_node(Op::slice, {std::move(a)}, std::move(name));
  const Tensor& A = n->inputs[0]->value;
  std::size_t width = A.rank() == 1 ? A.shape[0] : A.shape[1];
  if ((A.rank() != 1 && A.rank() != 2) || off + len > width)
    detail::shape_error(*n, "slice [" + std::to_string(off) + "," + std::to_string(off + len) +
                                ") of " + shape_str(A));
  n->off = off;
  n->len = len;
  n->value = A.rank() == 1 ? Tensor({len}) : Tensor({A.shape[0], len});
  return n;
}

inline NodePtr relu(NodePtr a) { return detail::unary_same_shape(Op::relu, std::move(a), "relu"); }
inline NodePtr relu_mask(NodePtr a) { return detail::unary_same_shape(Op::relu_mask, std::move(a), "relu_mask"); }
inline NodePtr tanh_fn(NodePtr a) { return detail::unary_same_shape(Op::tanh_fn, std::move(a), "tanh"); }
inline NodePtr sigmoid_fn(NodePtr a) { return detail::unary_same_shape(Op::sigmoid_fn, std::move(a), "sigmoid"); }
inline NodePtr square(NodePtr a) { return detail::unary_same_shape(Op::square, std::move(a), "square"); }

inline NodePtr rownorm(NodePtr a, std::string name = "rownorm") {
  auto n = detail::make_node(Op::rownorm, {std::move(a)}, std::move(name));
  const Tensor& A = n->inputs[0]->value;
  if (A.rank() == 2)
    n->value = Tensor({A.shape[0]});
  else if (A.rank() == 1)
    n->value = Tensor::scalar(0.0);
  else
    detail::shape_error(*n, "rownorm needs rank 1 or 2");
  return n;
}

inline NodePtr mean_all(NodePtr a) {
  auto n = detail::make_node(Op::mean_all, {std::move(a)}, "mean");
  n->value = Tensor::scalar(0.0);
  return n;
}
inline NodePtr sum_all(NodePtr a) {
  auto n = detail::make_node(Op::sum_all, {std::move(a)}, "sum");
  n->value = Tensor::scalar(0.0);
  return n;
}
inline NodePtr scale(NodePtr a, double c) {
  auto n = detail::unary_same_shape(Op::scale, std::move(a), "scale");
  n->c = c;
  return n;
}
inline NodePtr add_const(NodePtr a, double c) {
  auto n = detail::unary_same_shape(Op::add_const, std::move(a), "add_const");
  n->c = c;
  return n;
}
inline NodePtr neg(NodePtr a) { return scale(std::move(a), -1.0); }

// Mean binary cross-entropy between sigmoid(logits) and constant targets.
inline NodePtr bce_logits(NodePtr logits, Tensor targets, std::string name = "bce_logits") {
  auto n = detail::make_node(Op::bce_logits, {std::move(logits)}, std::move(name));
  if (!n->inputs[0]->value.same_shape(targets))
    detail::shape_error(*n, "targets " + shape_str(targets));
  n->target = std::move(targets);
  n->value = Tensor::scalar(0.0);
  return n;
}

// Softmax cross-entropy of a single logit vector against a class id.
inline NodePtr ce_logits(NodePtr logits, int label, std::string name = "ce_logits") {
  auto n = detail::make_node(Op::ce_logits, {std::move(logits)}, std::move(name));
  const Tensor& L = n->inputs[0]->value;
  if (L.rank() != 1 || label < 0 || static_cast<std::size_t>(label) >= L.shape[0])
    detail::shape_error(*n, "logits " + shape_str(L) + " label " + std::to_string(label));
  n->label = label;
  n->value = Tensor::scalar(0.0);
  return n;
}

// Mean squared error against constant targets.
inline NodePtr mse(NodePtr pred, Tensor targets, std::string name = "mse") {
  auto n = detail::make_node(Op::mse, {std::move(pred)}, std::move(name));
  if (!n->inputs[0]->value.same_shape(targets))
    detail::shape_error(*n, "targets " + shape_str(targets));
  n->target = std::move(targets);
  n->value = Tensor::scalar(0.0);
  return n;
}

// ---- evaluation ---------------------------------------------------------

struct Compiled {
  NodePtr root;
  std::vector<Node*> order;  // topological, leaves first
};

inline Compiled compile(const NodePtr& root) {
  // iterative postorder; 0 = unseen, 1 = expanded (on stack), 2 = emitted
  Compiled c;
  c.root = root;
  std::unordered_map<Node*, int> state;
  std::vector<Node*> stack{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    int& st = state[n];
    if (st == 0) {
      st = 1;
      for (const auto& in : n->inputs)
        if (state[in.get()] == 0) stack.push_back(in.get());
    } else if (st == 1) {
      for (const auto& in : n->inputs)
        if (state[in.get()] != 2)
          throw Error("cycle detected in graph at node '" + n->name + "'");
      st = 2;
      c.order.push_back(n);
      stack.pop_back();
    } else {
      stack.pop_back();  // duplicate stack entry of a finished node
    }
  }
  return c;
}

namespace detail {

inline void compute(Node& n) {
  switch (n.op) {
    case Op::leaf:
      break;
    case Op::param:
      n.value.v = n.par->value.v;
      break;
    case Op::matmul: {
      const Tensor& A = n.inputs[0]->value;
      const Tensor& B = n.inputs[1]->value;
      std::size_t M = n.ta ? A.shape[1] : A.shape[0];
      std::size_t K = n.ta ? A.shape[0] : A.shape[1];
      std::size_t N = (B.rank() == 1) ? 1 : (n.tb ? B.shape[0] : B.shape[1]);
      gemm(n.value.v.data(), A.v.data(), B.v.data(), M, N, K, n.ta, n.tb, false);
      break;
    }
    case Op::add: {
      const auto& a = n.inputs[0]->value.v;
      const auto& b = n.inputs[1]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] + b[i];
      break;
    }
    case Op::sub: {
      const auto& a = n.inputs[0]->value.v;
      const auto& b = n.inputs[1]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] - b[i];
      break;
    }
    case Op::mul: {
      const auto& a = n.inputs[0]->value.v;
      const auto& b = n.inputs[1]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] * b[i];
      break;
    }
    case Op::add_rowvec: {
      const Tensor& A = n.inputs[0]->value;
      const auto& vv = n.inputs[1]->value.v;
      std::size_t m = A.shape[0], w = A.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) n.value.v[i * w + j] = A.v[i * w + j] + vv[j];
      break;
    }
    case Op::mul_colvec: {
      const Tensor& A = n.inputs[0]->value;
      const auto& vv = n.inputs[1]->value.v;
      std::size_t m = A.shape[0], w = A.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) n.value.v[i * w + j] = A.v[i * w + j] * vv[i];
      break;
    }
    case Op::broadcast_rows: {
      const auto& vv = n.inputs[0]->value.v;
      std::size_t w = vv.size();
      for (std::size_t i = 0; i < n.nrows; ++i)
        std::copy(vv.begin(), vv.end(), n.value.v.begin() + i * w);
      break;
    }
    case Op::concat: {
      std::size_t rank = n.value.rank();
      if (rank == 1) {
        std::size_t o = 0;
        for (const auto& in : n.inputs) {
          std::copy(in->value.v.begin(), in->value.v.end(), n.value.v.begin() + o);
          o += in->value.size();
        }
      } else {
        std::size_t m = n.value.shape[0], w = n.value.shape[1];
        std::size_t o = 0;
        for (const auto& in : n.inputs) {
          std::size_t iw = in->value.shape[1];
          for (std::size_t i = 0; i < m; ++i)
            std::copy(in->value.v.begin() + i * iw, in->value.v.begin() + (i + 1) * iw,
                      n.value.v.begin() + i * w + o);
          o += iw;
        }
      }
      break;
    }
    case Op::slice: {
      const Tensor& A = n.inputs[0]->value;
      if (A.rank() == 1) {
        std::copy(A.v.begin() + n.off, A.v.begin() + n.off + n.len, n.value.v.begin());
      } else {
        std::size_t m = A.shape[0], w = A.shape[1];
        for (std::size_t i = 0; i < m; ++i)
          std::copy(A.v.begin() + i * w + n.off, A.v.begin() + i * w + n.off + n.len,
                    n.value.v.begin() + i * n.len);
      }
      break;
    }
    case Op::relu: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case Op::relu_mask: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] > 0.0 ? 1.0 : 0.0;
      break;
    }
    case Op::tanh_fn: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = std::tanh(a[i]);
      break;
    }
    case Op::sigmoid_fn: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = stable_sigmoid(a[i]);
      break;
    }
    case Op::square: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] * a[i];
      break;
    }
    case Op::rownorm: {
      const Tensor& A = n.inputs[0]->value;
      std::size_t m = A.rank() == 2 ? A.shape[0] : 1;
      std::size_t w = A.rank() == 2 ? A.shape[1] : A.shape[0];
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          double x = A.v[i * w + j];
          s += x * x;
        }
        n.value.v[i] = std::sqrt(s);
      }
      break;
    }
    case Op::mean_all: {
      const auto& a = n.inputs[0]->value.v;
      double s = 0.0;
      for (double x : a) s += x;
      n.value.v[0] = s / static_cast<double>(a.size());
      break;
    }
    case Op::sum_all: {
      const auto& a = n.inputs[0]->value.v;
      double s = 0.0;
      for (double x : a) s += x;
      n.value.v[0] = s;
      break;
    }
    case Op::scale: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] * n.c;
      break;
    }
    case Op::add_const: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < a.size(); ++i) n.value.v[i] = a[i] + n.c;
      break;
    }
    case Op::bce_logits: {
      const auto& x = n.inputs[0]->value.v;
      const auto& t = n.target.v;
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i)
        s += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::fabs(x[i])));
      n.value.v[0] = s / static_cast<double>(x.size());
      break;
    }
    case Op::ce_logits: {
      const auto& x = n.inputs[0]->value.v;
      double m = *std::max_element(x.begin(), x.end());
      double s = 0.0;
      for (double xi : x) s += std::exp(xi - m);
      n.value.v[0] = m + std::log(s) - x[static_cast<std::size_t>(n.label)];
      break;
    }
    case Op::mse: {
      const auto& x = n.inputs[0]->value.v;
      const auto& t = n.target.v;
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - t[i];
        s += d * d;
      }
      n.value.v[0] = s / static_cast<double>(x.size());
      break;
    }
  }
}

inline void backprop(Node& n) {
  auto g = [&](std::size_t k) -> Tensor& { return n.inputs[k]->grad; };
  switch (n.op) {
    case Op::leaf:
    case Op::param:
      break;
    case Op::matmul: {
      const Tensor& A = n.inputs[0]->value;
      const Tensor& B = n.inputs[1]->value;
      std::size_t M = n.ta ? A.shape[1] : A.shape[0];
      std::size_t K = n.ta ? A.shape[0] : A.shape[1];
      std::size_t N = (B.rank() == 1) ? 1 : (n.tb ? B.shape[0] : B.shape[1]);
      const double* gC = n.grad.v.data();
      double* gA = g(0).v.data();
      double* gB = g(1).v.data();
      if (!n.ta && !n.tb) {
        gemm(gA, gC, B.v.data(), M, K, N, false, true, true);
        gemm(gB, A.v.data(), gC, K, N, M, true, false, true);
      } else if (!n.ta && n.tb) {
        gemm(gA, gC, B.v.data(), M, K, N, false, false, true);
        gemm(gB, gC, A.v.data(), N, K, M, true, false, true);
      } else if (n.ta && !n.tb) {
        gemm(gA, B.v.data(), gC, K, M, N, false, true, true);
        gemm(gB, A.v.data(), gC, K, N, M, false, false, true);
      } else {
        gemm(gA, B.v.data(), gC, K, M, N, true, true, true);
        gemm(gB, gC, A.v.data(), N, K, M, true, true, true);
      }
      break;
    }
    case Op::add:
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        g(0).v[i] += n.grad.v[i];
        g(1).v[i] += n.grad.v[i];
      }
      break;
    case Op::sub:
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        g(0).v[i] += n.grad.v[i];
        g(1).v[i] -= n.grad.v[i];
      }
      break;
    case Op::mul: {
      const auto& a = n.inputs[0]->value.v;
      const auto& b = n.inputs[1]->value.v;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        g(0).v[i] += n.grad.v[i] * b[i];
        g(1).v[i] += n.grad.v[i] * a[i];
      }
      break;
    }
    case Op::add_rowvec: {
      std::size_t m = n.value.shape[0], w = n.value.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          g(0).v[i * w + j] += n.grad.v[i * w + j];
          g(1).v[j] += n.grad.v[i * w + j];
        }
      break;
    }
    case Op::mul_colvec: {
      const Tensor& A = n.inputs[0]->value;
      const auto& vv = n.inputs[1]->value.v;
      std::size_t m = n.value.shape[0], w = n.value.shape[1];
      for (std::size_t i = 0; i < m; ++i) {
        double gv = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          g(0).v[i * w + j] += n.grad.v[i * w + j] * vv[i];
          gv += n.grad.v[i * w + j] * A.v[i * w + j];
        }
        g(1).v[i] += gv;
      }
      break;
    }
    case Op::broadcast_rows: {
      std::size_t w = n.inputs[0]->value.size();
      for (std::size_t i = 0; i < n.nrows; ++i)
        for (std::size_t j = 0; j < w; ++j) g(0).v[j] += n.grad.v[i * w + j];
      break;
    }
    case Op::concat: {
      if (n.value.rank() == 1) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          std::size_t len = n.inputs[k]->value.size();
          for (std::size_t i = 0; i < len; ++i) g(k).v[i] += n.grad.v[o + i];
          o += len;
        }
      } else {
        std::size_t m = n.value.shape[0], w = n.value.shape[1];
        std::size_t o = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          std::size_t iw = n.inputs[k]->value.shape[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < iw; ++j) g(k).v[i * iw + j] += n.grad.v[i * w + o + j];
          o += iw;
        }
      }
      break;
    }
    case Op::slice: {
      const Tensor& A = n.inputs[0]->value;
      if (A.rank() == 1) {
        for (std::size_t i = 0; i < n.len; ++i) g(0).v[n.off + i] += n.grad.v[i];
      } else {
        std::size_t m = A.shape[0], w = A.shape[1];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n.len; ++j)
            g(0).v[i * w + n.off + j] += n.grad.v[i * n.len + j];
      }
      break;
    }
    case Op::relu: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        if (a[i] > 0.0) g(0).v[i] += n.grad.v[i];
      break;
    }
    case Op::relu_mask:
      break;  // derivative is zero almost everywhere
    case Op::tanh_fn: {
      const auto& y = n.value.v;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        g(0).v[i] += n.grad.v[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::sigmoid_fn: {
      const auto& y = n.value.v;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        g(0).v[i] += n.grad.v[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::square: {
      const auto& a = n.inputs[0]->value.v;
      for (std::size_t i = 0; i < n.grad.size(); ++i) g(0).v[i] += n.grad.v[i] * 2.0 * a[i];
      break;
    }
    case Op::rownorm: {
      const Tensor& A = n.inputs[0]->value;
      std::size_t m = A.rank() == 2 ? A.shape[0] : 1;
      std::size_t w = A.rank() == 2 ? A.shape[1] : A.shape[0];
      for (std::size_t i = 0; i < m; ++i) {
        double r = n.value.v[i];
        if (r < 1e-300) continue;  // subgradient 0 at the origin
        double gi = n.grad.v[i] / r;
        for (std::size_t j = 0; j < w; ++j) g(0).v[i * w + j] += gi * A.v[i * w + j];
      }
      break;
    }
    case Op::mean_all: {
      double gi = n.grad.v[0] / static_cast<double>(n.inputs[0]->value.size());
      for (auto& x : g(0).v) x += gi;
      break;
    }
    case Op::sum_all: {
      double gi = n.grad.v[0];
      for (auto& x : g(0).v) x += gi;
      break;
    }
    case Op::scale:
      for (std::size_t i = 0; i < n.grad.size(); ++i) g(0).v[i] += n.grad.v[i] * n.c;
      break;
    case Op::add_const:
      for (std::size_t i = 0; i < n.grad.size(); ++i) g(0).v[i] += n.grad.v[i];
      break;
    case Op::bce_logits: {
      const auto& x = n.inputs[0]->value.v;
      const auto& t = n.target.v;
      double gi = n.grad.v[0] / static_cast<double>(x.size());
      for (std::size_t i = 0; i < x.size(); ++i)
        g(0).v[i] += gi * (stable_sigmoid(x[i]) - t[i]);
      break;
    }
    case Op::ce_logits: {
      const auto& x = n.inputs[0]->value.v;
      double m = *std::max_element(x.begin(), x.end());
      double s = 0.0;
      for (double xi : x) s += std::exp(xi - m);
      double gi = n.grad.v[0];
      for (std::size_t i = 0; i < x.size(); ++i) {
        double p = std::exp(x[i] - m) / s;
        g(0).v[i] += gi * (p - (static_cast<int>(i) == n.label ? 1.0 : 0.0));
      }
      break;
    }
    case Op::mse: {
      const auto& x = n.inputs[0]->value.v;
      const auto& t = n.target.v;
      double gi = n.grad.v[0] * 2.0 / static_cast<double>(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) g(0).v[i] += gi * (x[i] - t[i]);
      break;
    }
  }
}

}  // namespace detail

inline const Tensor& forward(Compiled& c, bool check_finite = true) {
  for (Node* n : c.order) {
    detail::compute(*n);
    if (check_finite && !n->value.finite())
      throw Error("non-finite value at node '" + n->name + "'");
  }
  return c.root->value;
}

inline Tensor forward(const NodePtr& root, bool check_finite = true) {
  Compiled c = compile(root);
  forward(c, check_finite);
  return root->value;
}

// Accumulates d(root)/d(p) into every reachable unfrozen Parameter's grad.
inline void backward(Compiled& c, bool check_finite = true) {
  if (c.root->value.size() != 1)
    throw Error("backward: root '" + c.root->name + "' is not scalar, shape " +
                shape_str(c.root->value));
  for (Node* n : c.order) {
    if (!n->grad.same_shape(n->value) || n->grad.v.size() != n->value.v.size())
      n->grad = Tensor::zeros_like(n->value);
    else
      n->grad.fill(0.0);
  }
  c.root->grad.v[0] = 1.0;
  for (auto it = c.order.rbegin(); it != c.order.rend(); ++it) detail::backprop(**it);
  for (Node* n : c.order) {
    if (n->op == Op::param && !n->par->frozen) {
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->par->grad.v[i] += n->grad.v[i];
      if (check_finite && !n->par->grad.finite())
        throw Error("non-finite gradient for parameter '" + n->par->name + "'");
    }
  }
}

inline void backward(const NodePtr& root, bool check_finite = true) {
  Compiled c = compile(root);
  forward(c, check_finite);
  backward(c, check_finite);
}

}  // namespace basketgen
