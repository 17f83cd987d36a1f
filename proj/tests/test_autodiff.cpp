#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>

#include "basketgen/adam.hpp"
#include "basketgen/checkpoint.hpp"
#include "basketgen/graph.hpp"
#include "basketgen/mlp.hpp"
#include "basketgen/rng.hpp"
#include "fd_check.hpp"

using namespace basketgen;
using bgtest::fd_gradient;
using bgtest::max_rel_err;
using bgtest::rand_tensor;
using bgtest::rand_tensor_away_from_zero;

TEST_CASE("forward basics") {
  auto a = make_leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  auto b = make_leaf(Tensor({2, 1}, {1, 1}));
  auto c = matmul(a, b);
  forward(c);
  CHECK(c->value.v == std::vector<double>{3, 7});

  auto r = relu(make_leaf(Tensor({3}, {-1, 0, 2})));
  forward(r);
  CHECK(r->value.v == std::vector<double>{0, 0, 2});

  auto t = tanh_fn(make_leaf(Tensor({1}, {0})));
  forward(t);
  CHECK(t->value.v[0] == 0.0);
}

TEST_CASE("backward basics") {
  auto p = std::make_shared<Parameter>("p", Tensor({3}, {1, 2, 3}));
  auto root = sum_all(square(use(p)));
  backward(root);
  CHECK(p->grad.v == std::vector<double>{2, 4, 6});

  auto q = std::make_shared<Parameter>("q", Tensor({4}, {1, 2, 3, 4}));
  auto m = mean_all(use(q));
  backward(m);
  CHECK(q->grad.v == std::vector<double>{0.25, 0.25, 0.25, 0.25});
}

TEST_CASE("gradient accumulation is additive") {
  auto p = std::make_shared<Parameter>("p", Tensor({3}, {1, -2, 3}));
  auto root = sum_all(square(use(p)));
  auto c = compile(root);
  forward(c);
  backward(c);
  std::vector<double> once = p->grad.v;
  backward(c);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(p->grad.v[i] == 2.0 * once[i]);
}

// ---- per-op finite difference suite -------------------------------------

namespace {

double op_fd_err(const Tensor& init, const std::function<NodePtr(NodePtr)>& build) {
  auto p = std::make_shared<Parameter>("p", init);
  auto root = build(use(p));
  auto c = compile(root);
  forward(c);
  backward(c);
  auto eval = [&] {
    forward(c);
    return root->value.v[0];
  };
  Tensor fd = fd_gradient(p->value.v, eval);
  return max_rel_err(p->grad.v, fd.v);
}

NodePtr squash(NodePtr x) { return mean_all(square(x)); }

}  // namespace

TEST_CASE("finite differences per op") {
  std::mt19937_64 rng(7);
  const double tol = 1e-4;

  SECTION("matmul, all transpose combinations") {
    Tensor A = rand_tensor({4, 3}, rng);
    Tensor B = rand_tensor({3, 5}, rng);
    CHECK(op_fd_err(A, [&](NodePtr p) { return squash(matmul(p, make_leaf(B))); }) < tol);
    CHECK(op_fd_err(B, [&](NodePtr p) { return squash(matmul(make_leaf(A), p)); }) < tol);

    Tensor At = rand_tensor({3, 4}, rng);
    CHECK(op_fd_err(At, [&](NodePtr p) { return squash(matmul(p, make_leaf(B), true, false)); }) < tol);
    Tensor Bt = rand_tensor({5, 3}, rng);
    CHECK(op_fd_err(Bt, [&](NodePtr p) { return squash(matmul(make_leaf(A), p, false, true)); }) < tol);
    CHECK(op_fd_err(At, [&](NodePtr p) { return squash(matmul(p, make_leaf(Bt), true, true)); }) < tol);
    CHECK(op_fd_err(Bt, [&](NodePtr p) { return squash(matmul(make_leaf(At), p, true, true)); }) < tol);

    Tensor x = rand_tensor({3}, rng);  // matrix-vector
    CHECK(op_fd_err(x, [&](NodePtr p) { return squash(matmul(make_leaf(A), p)); }) < tol);
    CHECK(op_fd_err(A, [&](NodePtr p) { return squash(matmul(p, make_leaf(x))); }) < tol);
  }

  SECTION("elementwise binary") {
    Tensor a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 3}, rng);
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(add(p, make_leaf(b))); }) < tol);
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(sub(make_leaf(b), p)); }) < tol);
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(mul(p, make_leaf(b))); }) < tol);
    CHECK(op_fd_err(b, [&](NodePtr p) { return squash(mul(make_leaf(a), p)); }) < tol);
  }

  SECTION("broadcast helpers") {
    Tensor A = rand_tensor({4, 3}, rng), v3 = rand_tensor({3}, rng), v4 = rand_tensor({4}, rng);
    CHECK(op_fd_err(A, [&](NodePtr p) { return squash(add_rowvec(p, make_leaf(v3))); }) < tol);
    CHECK(op_fd_err(v3, [&](NodePtr p) { return squash(add_rowvec(make_leaf(A), p)); }) < tol);
    CHECK(op_fd_err(A, [&](NodePtr p) { return squash(mul_colvec(p, make_leaf(v4))); }) < tol);
    CHECK(op_fd_err(v4, [&](NodePtr p) { return squash(mul_colvec(make_leaf(A), p)); }) < tol);
    CHECK(op_fd_err(v3, [&](NodePtr p) { return squash(broadcast_rows(p, 5)); }) < tol);
  }

  SECTION("concat and slice") {
    Tensor a = rand_tensor({3}, rng), b = rand_tensor({2}, rng);
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(concat({p, make_leaf(b), p})); }) < tol);
    Tensor A = rand_tensor({2, 3}, rng), B = rand_tensor({2, 2}, rng);
    CHECK(op_fd_err(A, [&](NodePtr p) { return squash(concat({p, make_leaf(B)})); }) < tol);
    Tensor c = rand_tensor({6}, rng);
    CHECK(op_fd_err(c, [&](NodePtr p) { return squash(slice(p, 1, 3)); }) < tol);
    Tensor C = rand_tensor({3, 6}, rng);
    CHECK(op_fd_err(C, [&](NodePtr p) { return squash(slice(p, 2, 3)); }) < tol);
  }

  SECTION("pointwise nonlinearities") {
    Tensor a = rand_tensor_away_from_zero({2, 4}, rng);
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(relu(p)); }) < tol);
    Tensor b = rand_tensor({2, 4}, rng);
    CHECK(op_fd_err(b, [&](NodePtr p) { return squash(tanh_fn(p)); }) < tol);
    CHECK(op_fd_err(b, [&](NodePtr p) { return squash(sigmoid_fn(p)); }) < tol);
    CHECK(op_fd_err(b, [&](NodePtr p) { return squash(square(p)); }) < tol);
    // relu_mask is piecewise constant: analytic and FD gradients both vanish
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(relu_mask(p)); }) < tol);
  }

  SECTION("reductions and scalar ops") {
    Tensor a = rand_tensor_away_from_zero({3, 4}, rng);
    CHECK(op_fd_err(a, [&](NodePtr p) { return squash(rownorm(p)); }) < tol);
    Tensor v = rand_tensor_away_from_zero({4}, rng);
    CHECK(op_fd_err(v, [&](NodePtr p) { return square(add_const(rownorm(p), -1.0)); }) < tol);
    Tensor b = rand_tensor({6}, rng);
    CHECK(op_fd_err(b, [&](NodePtr p) { return mean_all(p); }) < tol);
    CHECK(op_fd_err(b, [&](NodePtr p) { return sum_all(square(p)); }) < tol);
    CHECK(op_fd_err(b, [&](NodePtr p) { return squash(scale(p, -2.5)); }) < tol);
    CHECK(op_fd_err(b, [&](NodePtr p) { return squash(add_const(p, 0.7)); }) < tol);
  }

  SECTION("losses") {
    Tensor logits = rand_tensor({5}, rng);
    Tensor targets({5}, {1, 0, 1, 1, 0});
    CHECK(op_fd_err(logits, [&](NodePtr p) { return bce_logits(p, targets); }) < tol);
    CHECK(op_fd_err(logits, [&](NodePtr p) { return ce_logits(p, 3); }) < tol);
    Tensor t = rand_tensor({5}, rng);
    CHECK(op_fd_err(logits, [&](NodePtr p) { return mse(p, t); }) < tol);
  }
}

TEST_CASE("random 3-layer mlp matches finite differences") {
  std::mt19937_64 rng(42);
  Mlp net = Mlp::create("net", 5, {7, 4, 1}, {Act::tanh_act, Act::tanh_act, Act::identity}, rng);
  auto x = make_leaf(rand_tensor({5}, rng), "x");
  auto g = mlp_forward(net, x);
  auto root = sum_all(g.out);
  auto c = compile(root);
  forward(c);
  backward(c);
  auto eval = [&] {
    forward(c);
    return root->value.v[0];
  };
  for (const auto& p : net.params()) {
    Tensor fd = fd_gradient(p->value.v, eval);
    INFO(p->name);
    CHECK(max_rel_err(p->grad.v, fd.v) < 1e-4);
  }
}

// ---- input gradient graph ------------------------------------------------

TEST_CASE("input gradient of a linear critic is the weight vector") {
  std::mt19937_64 rng(3);
  Mlp critic = Mlp::create("d", 2, {1}, {Act::identity}, rng);
  critic.layers[0].weight->value.v = {0.6, 0.8};
  critic.layers[0].bias->value.v = {0.25};

  auto x = make_leaf(rand_tensor({4, 2}, rng), "x");
  auto fwd = mlp_forward(critic, x);
  auto g = mlp_input_gradient(critic, fwd);
  forward(g);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g->value.at(i, 0) == 0.6);
    CHECK(g->value.at(i, 1) == 0.8);
  }
}

TEST_CASE("gradient penalty is exactly zero for a unit-norm linear critic") {
  std::mt19937_64 rng(3);
  Mlp critic = Mlp::create("d", 2, {1}, {Act::identity}, rng);
  critic.layers[0].weight->value.v = {0.6, 0.8};  // ||w|| == 1 exactly
  critic.layers[0].bias->value.v = {-1.5};

  auto x = make_leaf(rand_tensor({8, 2}, rng), "x");
  auto fwd = mlp_forward(critic, x);
  auto g = mlp_input_gradient(critic, fwd);
  auto penalty = scale(mean_all(square(add_const(rownorm(g), -1.0))), 10.0);
  auto c = compile(penalty);
  forward(c);
  CHECK(penalty->value.v[0] == 0.0);
  backward(c);
  for (const auto& p : critic.params())
    for (double v : p->grad.v) CHECK(v == 0.0);
}

TEST_CASE("input gradient of a relu critic matches finite differences over x") {
  std::mt19937_64 rng(11);
  Mlp critic = Mlp::create("d", 2, {4, 1}, {Act::relu, Act::identity}, rng);
  auto x = make_leaf(rand_tensor({2}, rng), "x");
  auto fwd = mlp_forward(critic, x);
  auto gc = compile(fwd.out);
  auto eval = [&] {
    forward(gc);
    return fwd.out->value.v[0];
  };
  Tensor fd = fd_gradient(x->value.v, eval);

  auto g = mlp_input_gradient(critic, fwd);
  forward(g);
  CHECK(max_rel_err(g->value.v, fd.v) < 1e-4);
}

TEST_CASE("penalty parameter gradients match finite differences (double backprop)") {
  std::mt19937_64 rng(19);
  for (auto acts : {std::vector<Act>{Act::relu, Act::relu, Act::identity},
                    std::vector<Act>{Act::tanh_act, Act::sigmoid_act, Act::identity}}) {
    Mlp critic = Mlp::create("d", 4, {8, 6, 1}, acts, rng);
    auto x = make_leaf(rand_tensor({3, 4}, rng), "xhat");
    auto fwd = mlp_forward(critic, x);
    auto g = mlp_input_gradient(critic, fwd);
    auto penalty = mean_all(square(add_const(rownorm(g), -1.0)));
    auto c = compile(penalty);
    forward(c);
    backward(c);
    auto eval = [&] {
      forward(c);
      return penalty->value.v[0];
    };
    for (const auto& p : critic.params()) {
      Tensor fd = fd_gradient(p->value.v, eval);
      INFO(act_name(acts[0]) << " " << p->name);
      CHECK(max_rel_err(p->grad.v, fd.v, 1e-6) < 1e-3);
    }
  }
}

// ---- adam ----------------------------------------------------------------

TEST_CASE("adam descends on a quadratic") {
  auto p = std::make_shared<Parameter>("p", Tensor({1}, {1.0}));
  Adam opt({p}, {.lr = 0.1});
  auto root = sum_all(square(use(p)));
  backward(root);
  opt.step();
  CHECK(p->value.v[0] < 1.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  auto p = std::make_shared<Parameter>("p", Tensor({2}, {0.5, -0.5}));
  Adam opt({p}, {.lr = 0.1});
  opt.step();  // no backward call: accumulators are zero
  CHECK(p->value.v == std::vector<double>{0.5, -0.5});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam converges on (p-3)^2") {
  auto p = std::make_shared<Parameter>("p", Tensor({1}, {0.0}));
  Adam opt({p}, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999});
  auto root = mse(use(p), Tensor({1}, {3.0}));
  auto c = compile(root);
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    forward(c);
    backward(c);
    opt.step();
  }
  CHECK(std::fabs(p->value.v[0] - 3.0) < 0.05);
}

TEST_CASE("same seed gives bit-identical trajectories") {
  auto run = [] {
    std::mt19937_64 rng(123);
    Mlp net = Mlp::create("n", 3, {4, 1}, {Act::tanh_act, Act::identity}, rng);
    Adam opt(net.params(), {.lr = 1e-2});
    auto x = make_leaf(rand_tensor({3}, rng));
    auto g = mlp_forward(net, x);
    auto root = sum_all(square(g.out));
    auto c = compile(root);
    for (int i = 0; i < 10; ++i) {
      opt.zero_grad();
      set_value(x, rand_tensor({3}, rng));
      forward(c);
      backward(c);
      opt.step();
    }
    std::vector<double> flat;
    for (const auto& p : net.params()) flat.insert(flat.end(), p->value.v.begin(), p->value.v.end());
    return flat;
  };
  CHECK(run() == run());
}

// ---- frozen parameters -----------------------------------------------------

TEST_CASE("frozen parameters receive no gradient but still propagate") {
  auto w = std::make_shared<Parameter>("w", Tensor({2, 2}, {1, 2, 3, 4}));
  auto p = std::make_shared<Parameter>("p", Tensor({2}, {1, 1}));
  w->frozen = true;
  auto root = sum_all(square(matmul(use(w), use(p))));
  backward(root);
  CHECK(w->grad.v == std::vector<double>{0, 0, 0, 0});
  double gnorm = 0;
  for (double v : p->grad.v) gnorm += std::fabs(v);
  CHECK(gnorm > 0.0);
}

// ---- errors ----------------------------------------------------------------

TEST_CASE("shape mismatch names the offending node") {
  auto a = make_leaf(Tensor({2, 3}), "W_bad");
  auto b = make_leaf(Tensor({2}));
  try {
    matmul(a, b, false, false, "W_bad_matmul");
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("W_bad_matmul") != std::string::npos);
  }
}

TEST_CASE("non-finite values are detected") {
  auto a = make_leaf(Tensor({2}, {1.0, std::numeric_limits<double>::infinity()}));
  auto r = sum_all(a);
  CHECK_THROWS_AS(forward(r), Error);
}

TEST_CASE("backward requires a scalar root") {
  auto a = make_leaf(Tensor({3}, {1, 2, 3}));
  auto r = square(a);
  CHECK_THROWS_AS(backward(r), Error);
}

// ---- checkpoints -----------------------------------------------------------

TEST_CASE("checkpoint round-trips parameters bit-exactly") {
  std::mt19937_64 rng(5);
  Checkpoint out;
  out.add_meta("kind", "unit test model");
  out.add_meta("dim", "7");
  out.params.push_back(std::make_shared<Parameter>("layer.w", rand_tensor({3, 7}, rng)));
  out.params.push_back(std::make_shared<Parameter>("layer.b", rand_tensor({3}, rng)));
  out.params[0]->value.v[0] = 1e-300;
  out.params[0]->value.v[1] = -0.1 + 0.2;  // not exactly representable tenth

  auto path = std::filesystem::temp_directory_path() / "bg_ckpt_test.txt";
  save_checkpoint(path, out);
  Checkpoint in = load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(in.meta_one("kind") == "unit test model");
  CHECK(in.meta_one("dim") == "7");
  REQUIRE(in.params.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(in.params[k]->name == out.params[k]->name);
    CHECK(in.params[k]->value.shape == out.params[k]->value.shape);
    CHECK(in.params[k]->value.v == out.params[k]->value.v);
  }
}
