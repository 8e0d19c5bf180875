#include <cmath>
#include <random>

#include "doctest.h"
#include "dyad/archive.hpp"
#include "dyad/binio.hpp"
#include "dyad/gradcheck.hpp"
#include "dyad/ops.hpp"

using namespace dyad;
using namespace dyad::numerics;

namespace {

Tensor random_tensor(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

double worst(const std::map<std::string, double>& errors) {
  double w = 0.0;
  for (const auto& [_, e] : errors) w = std::max(w, e);
  return w;
}

}  // namespace

TEST_CASE("forward_eval: identity, matmul by I, square") {
  Graph g;
  Var x = g.input("x", {1, 3});
  g.set_output("id", x);
  Var xc = g.input("xc", {3, 1});
  Var eye = g.constant(Tensor::Identity(3, 3));
  g.set_output("mm", matmul(eye, xc));
  Var s = g.input("s", {1, 1});
  g.set_output("sq", s * s);

  NamedTensors in;
  in["x"] = Tensor{{1.0, 2.0, 3.0}};
  in["xc"] = Tensor{{1.0}, {2.0}, {3.0}};
  in["s"] = Tensor{{3.0}};
  NamedTensors out = forward_eval(g, in);
  CHECK(out["id"] == in["x"]);
  CHECK(out["mm"] == in["xc"]);
  CHECK(out["sq"](0, 0) == 9.0);

  NamedTensors again = forward_eval(g, in);
  CHECK(again == out);
}

TEST_CASE("forward_eval: shape mismatch names the offending node") {
  Graph g;
  Var a = g.input("a", {2, 3});
  Var b = g.input("b", {2, 3});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul#") != std::string::npos);
  }

  Var c = a + b;
  g.set_output("c", c);
  NamedTensors in{{"a", Tensor::Zero(2, 3)}, {"b", Tensor::Zero(3, 3)}};
  try {
    forward_eval(g, in);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK_THROWS_AS(forward_eval(g, NamedTensors{{"a", Tensor::Zero(2, 3)}}), GraphError);
}

TEST_CASE("backward: analytic examples") {
  SUBCASE("d(x^2)/dx at 3 is 6") {
    Graph g;
    Var x = g.input("x", {1, 1});
    Var y = x * x;
    auto grads = backward(g, evaluate(g, NamedTensors{{"x", Tensor{{3.0}}}}), y);
    CHECK(grads["x"](0, 0) == doctest::Approx(6.0));
  }
  SUBCASE("gradient of sum is ones") {
    Graph g;
    Var x = g.input("x", {1, 5});
    Var y = sum(x);
    std::mt19937_64 rng(1);
    auto grads = backward(g, evaluate(g, NamedTensors{{"x", random_tensor(1, 5, rng)}}), y);
    CHECK(grads["x"] == Tensor::Ones(1, 5));
  }
  SUBCASE("softmax cross-entropy at uniform logits has zero-mean gradient") {
    Graph g;
    Var logits = g.input("logits", {1, 4});
    Var y = softmax_cross_entropy(logits, g.constant(Tensor{{0.0, 1.0, 0.0, 0.0}}));
    auto grads = backward(g, evaluate(g, NamedTensors{{"logits", Tensor::Constant(1, 4, 0.7)}}), y);
    CHECK(std::abs(grads["logits"].sum()) < 1e-15);
    CHECK(grads["logits"](0, 1) == doctest::Approx(-0.75));
  }
  SUBCASE("non-scalar output is rejected") {
    Graph g;
    Var x = g.input("x", {2, 2});
    CHECK_THROWS_AS(backward(g, evaluate(g, NamedTensors{{"x", Tensor::Zero(2, 2)}}), x), GraphError);
  }
  SUBCASE("unreachable leaves receive zeros") {
    Graph g;
    Var x = g.input("x", {1, 2});
    g.input("unused", {3, 1});
    auto grads = backward(g, evaluate(g, NamedTensors{{"x", Tensor::Ones(1, 2)}, {"unused", Tensor::Ones(3, 1)}}),
                          sum(x));
    CHECK(grads["unused"] == Tensor::Zero(3, 1));
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(7);
  Graph g;
  Var x = g.input("x", {3, 4});
  Var w = g.parameter("w", {4, 2});
  Var h = silu(matmul(x, w));
  Var l1 = mean(square(h));
  Var l2 = sum(sigmoid(h));
  Var both = l1 + l2;
  NamedTensors in{{"x", random_tensor(3, 4, rng)}, {"w", random_tensor(4, 2, rng)}};
  Evaluation ev = evaluate(g, in);
  auto g1 = backward(g, ev, l1), g2 = backward(g, ev, l2), g12 = backward(g, ev, both);
  CHECK((g12["w"] - (g1["w"] + g2["w"])).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradient_check: every primitive within 1e-4") {
  std::mt19937_64 rng(11);
  GradientCheckOptions opt;
  opt.epsilon = 1e-6;

  auto check = [&](auto build, NamedTensors in, const char* what) {
    Graph g;
    std::vector<std::string> leaves;
    for (const auto& [name, t] : in) {
      g.input(name, shape_of(t));
      leaves.push_back(name);
    }
    auto leaf = [&](const std::string& n) { return g.var(*g.find_leaf(n)); };
    Var loss = build(g, leaf);
    double err = worst(gradient_check(g, in, loss, leaves, opt));
    INFO(what << " max rel error " << err);
    CHECK(err < 1e-4);
  };

  Tensor probe = random_tensor(4, 6, rng);
  auto weighted = [&](Graph& g, Var v) {  // generic scalarization with non-uniform weights
    Tensor wts = random_tensor(v.shape().rows, v.shape().cols, rng);
    return sum(v * g.constant(wts));
  };

  check([&](Graph& g, auto leaf) { return weighted(g, matmul(leaf("a"), leaf("b"))); },
        {{"a", random_tensor(3, 4, rng)}, {"b", random_tensor(4, 5, rng)}}, "matmul");
  check([&](Graph& g, auto leaf) { return weighted(g, conv1d(leaf("x"), leaf("w"), 3, 1)); },
        {{"x", random_tensor(7, 3, rng)}, {"w", random_tensor(9, 4, rng)}}, "conv1d stride 1");
  check([&](Graph& g, auto leaf) { return weighted(g, conv1d(leaf("x"), leaf("w"), 3, 2)); },
        {{"x", random_tensor(7, 3, rng)}, {"w", random_tensor(9, 4, rng)}}, "conv1d stride 2");
  check([&](Graph& g, auto leaf) { return weighted(g, layer_norm(leaf("x"))); },
        {{"x", random_tensor(4, 6, rng)}}, "layer_norm");
  check([&](Graph& g, auto leaf) { return weighted(g, attention(leaf("q"), leaf("k"), leaf("v"), 2)); },
        {{"q", random_tensor(5, 4, rng)}, {"k", random_tensor(3, 4, rng)}, {"v", random_tensor(3, 4, rng)}},
        "attention");
  check([&](Graph& g, auto leaf) { return weighted(g, sigmoid(leaf("x"))); }, {{"x", probe}}, "sigmoid");
  check([&](Graph& g, auto leaf) { return weighted(g, silu(leaf("x"))); }, {{"x", probe}}, "silu");
  check([&](Graph& g, auto leaf) { return weighted(g, gelu(leaf("x"))); }, {{"x", probe}}, "gelu");
  check([&](Graph& g, auto leaf) { return weighted(g, leaf("a") * leaf("b") - leaf("a") + leaf("b")); },
        {{"a", random_tensor(3, 4, rng)}, {"b", random_tensor(3, 4, rng)}}, "elementwise");
  check([&](Graph& g, auto leaf) { return weighted(g, leaf("a") * leaf("row") + leaf("col")); },
        {{"a", random_tensor(3, 4, rng)}, {"row", random_tensor(1, 4, rng)}, {"col", random_tensor(3, 1, rng)}},
        "broadcast");
  check([&](Graph& g, auto leaf) {
          return weighted(g, concat_cols({leaf("a"), slice_cols(leaf("b"), 1, 2), slice_rows(leaf("c"), 1, 3)}));
        },
        {{"a", random_tensor(3, 2, rng)}, {"b", random_tensor(3, 4, rng)}, {"c", random_tensor(5, 2, rng)}},
        "concat/slice");
  check([&](Graph&, auto leaf) { return mean(leaf("a")) + sum(leaf("a") * leaf("a")); },
        {{"a", random_tensor(3, 2, rng)}}, "reductions");
  check([&](Graph& g, auto leaf) { return weighted(g, cosine_rows(leaf("a"), leaf("b"))); },
        {{"a", random_tensor(5, 3, rng)}, {"b", random_tensor(5, 3, rng)}}, "cosine");
  check([&](Graph& g, auto leaf) {
          Tensor t = random_tensor(4, 5, rng).array().exp().matrix();
          for (Index r = 0; r < 4; ++r) t.row(r) /= t.row(r).sum();
          return softmax_cross_entropy(leaf("x"), g.constant(t));
        },
        {{"x", random_tensor(4, 5, rng)}}, "softmax cross-entropy");
  check([&](Graph& g, auto leaf) { return weighted(g, rotate_vectors(leaf("r"), leaf("v"))); },
        {{"r", random_tensor(4, 3, rng)}, {"v", random_tensor(4, 6, rng)}}, "rotate_vectors");
  check([&](Graph& g, auto leaf) { return weighted(g, rotate_vectors(leaf("r"), leaf("v"))); },
        {{"r", random_tensor(4, 3, rng, 1e-4)}, {"v", random_tensor(4, 6, rng)}}, "rotate_vectors small angle");
}

TEST_CASE("gradient_check: layer-level examples") {
  std::mt19937_64 rng(3);
  GradientCheckOptions opt;
  opt.epsilon = 1e-6;

  SUBCASE("linear layer < 1e-6") {
    Graph g;
    Var x = g.input("x", {6, 5});
    Var w = g.parameter("w", {5, 3});
    Var b = g.parameter("b", {1, 3});
    Var loss = mean(square(matmul(x, w) + b - g.constant(random_tensor(6, 3, rng))));
    NamedTensors in{{"x", random_tensor(6, 5, rng)}, {"w", random_tensor(5, 3, rng)}, {"b", random_tensor(1, 3, rng)}};
    CHECK(worst(gradient_check(g, in, loss, {"x", "w", "b"}, opt)) < 1e-6);
  }
  SUBCASE("attention block < 1e-4") {
    Graph g;
    Var h = g.input("h", {6, 8});
    Var wq = g.parameter("wq", {8, 8}), wk = g.parameter("wk", {8, 8}), wv = g.parameter("wv", {8, 8});
    Var n = layer_norm(h);
    Var out = h + attention(matmul(n, wq), matmul(n, wk), matmul(n, wv), 2);
    Var loss = mean(square(out - g.constant(random_tensor(6, 8, rng))));
    NamedTensors in{{"h", random_tensor(6, 8, rng)},
                    {"wq", random_tensor(8, 8, rng, 0.4)},
                    {"wk", random_tensor(8, 8, rng, 0.4)},
                    {"wv", random_tensor(8, 8, rng, 0.4)}};
    CHECK(worst(gradient_check(g, in, loss, {"h", "wq", "wk", "wv"}, opt)) < 1e-4);
  }
  SUBCASE("FiLM block < 1e-5") {
    Graph g;
    Var h = g.input("h", {6, 4});
    Var c = g.input("c", {6, 3});
    Var wg = g.parameter("wg", {3, 4}), wb = g.parameter("wb", {3, 4});
    Var out = add_scalar(matmul(c, wg), 1.0) * h + matmul(c, wb);
    Var loss = mean(square(out - g.constant(random_tensor(6, 4, rng))));
    NamedTensors in{{"h", random_tensor(6, 4, rng)},
                    {"c", random_tensor(6, 3, rng)},
                    {"wg", random_tensor(3, 4, rng)},
                    {"wb", random_tensor(3, 4, rng)}};
    CHECK(worst(gradient_check(g, in, loss, {"h", "c", "wg", "wb"}, opt)) < 1e-5);
  }
}

TEST_CASE("gradient_check: argument and loss validation") {
  Graph g;
  Var x = g.input("x", {1, 1});
  Var y = sum(x * x);
  NamedTensors in{{"x", Tensor{{1.0}}}};
  GradientCheckOptions opt;
  opt.epsilon = 1e-2;
  CHECK_THROWS_AS(gradient_check(g, in, y, {"x"}, opt), std::invalid_argument);

  Graph g2;
  Var a = g2.input("a", {1, 2});
  Var cos = sum(cosine_rows(a, g2.constant(Tensor::Zero(1, 2))));  // undefined against the zero vector
  NamedTensors zero{{"a", Tensor{{1.0, 1.0}}}};
  GradientCheckOptions ok;
  ok.epsilon = 1e-3;
  CHECK_THROWS(gradient_check(g2, zero, cos, {"a"}, ok));
}

TEST_CASE("attention probabilities rows sum to one") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto probs = attention_probabilities(random_tensor(7, 8, rng, 3.0), random_tensor(5, 8, rng, 3.0), 4);
    for (const Tensor& p : probs) {
      CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("rotate_vectors matches Eigen::AngleAxis") {
  std::mt19937_64 rng(9);
  Tensor r = random_tensor(5, 3, rng), v = random_tensor(5, 6, rng);
  Graph g;
  Var out = rotate_vectors(g.input("r", {5, 3}), g.input("v", {5, 6}));
  Evaluation ev = evaluate(g, NamedTensors{{"r", r}, {"v", v}});
  for (Index i = 0; i < 5; ++i) {
    Vec3 axis = r.row(i).transpose();
    Mat3 rot = Eigen::AngleAxisd(axis.norm(), axis.normalized()).toRotationMatrix();
    for (Index n = 0; n < 2; ++n) {
      Vec3 expect = rot * v.block<1, 3>(i, 3 * n).transpose();
      CHECK((ev[out].block<1, 3>(i, 3 * n).transpose() - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("checkpoint archive round-trips bit-exactly") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    NamedTensors t;
    const int count = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < count; ++i) {
      t["p" + std::to_string(i) + ".w"] = random_tensor(1 + rng() % 4, 1 + rng() % 6, rng);
    }
    std::string bytes = encode_archive(t);
    CHECK(bytes.substr(0, 4) == "DYD1");
    CHECK(decode_archive(bytes) == t);
  }
  CHECK_THROWS_AS(decode_archive("XXXX\x01\0\0\0"), io::FormatError);
  std::string truncated = encode_archive({{"w", Tensor::Ones(2, 2)}});
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_archive(truncated), io::FormatError);
}
