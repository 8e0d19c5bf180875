#include <random>

#include "doctest.h"
#include "dyad/dualnet.hpp"
#include "dyad/gradcheck.hpp"
#include "dyad/ops.hpp"

using namespace dyad;
using namespace dyad::net;
using numerics::ShapeError;

namespace {

UNetConfig tiny(bool zero_heads) {
  UNetConfig c;
  c.embed_dim = 16;
  c.attention_heads = 4;
  c.audio_dim = 8;
  c.role_dim = 4;
  c.time_dim = 8;
  c.zero_init_output = zero_heads;
  c.zero_init_film = zero_heads;
  return c;
}

Tensor randn(Index r, Index c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Tensor t(r, c);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

Tensor rand_mask(Index len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor m(len, 1);
  for (Index i = 0; i < len; ++i) m(i, 0) = u(rng);
  return m;
}

cond::DyadCondition random_condition(const UNetConfig& cfg, Index len, std::mt19937_64& rng, bool drop = false) {
  const Tensor feats = randn(len, cfg.audio_dim, rng);
  return cond::make_dyad_condition(feats, rand_mask(len, rng), rand_mask(len, rng),
                                   randn(3, 1, rng, 0.1), randn(3, 1, rng, 0.1), drop);
}

cond::DyadCondition swapped(const cond::DyadCondition& c) { return {c.b, c.a}; }

}  // namespace

TEST_CASE("config validation and level lengths") {
  UNetConfig c = tiny(true);
  CHECK_NOTHROW(c.validate());
  CHECK(level_lengths(c, 9) == std::vector<Index>{9, 5});
  c.embed_dim = 18;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny(true);
  c.input_dim = 128;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("zero-initialized output head predicts zeros") {
  const UNetConfig cfg = tiny(true);
  const DualNet net(cfg, 8);
  const NamedTensors params = init_params(cfg, 1);
  std::mt19937_64 rng(2);
  const auto [pa, pb] = net.forward(params, randn(8, 78, rng), randn(8, 78, rng), 0.3, random_condition(cfg, 8, rng));
  CHECK(pa.isZero(0.0));
  CHECK(pb.isZero(0.0));
}

TEST_CASE("forward is pure and stream-swap equivariant") {
  const UNetConfig cfg = tiny(false);
  const NamedTensors params = init_params(cfg, 3);
  std::mt19937_64 rng(4);
  for (Index len : {1, 7, 8}) {
    const DualNet net(cfg, len);
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor xa = randn(len, 78, rng), xb = randn(len, 78, rng);
      const cond::DyadCondition c = random_condition(cfg, len, rng);
      const double t = std::uniform_real_distribution<double>(0, 1)(rng);
      const auto [pa, pb] = net.forward(params, xa, xb, t, c);
      const auto [qa, qb] = net.forward(params, xa, xb, t, c);
      CHECK(pa == qa);
      CHECK(pb == qb);
      const auto [sa, sb] = net.forward(params, xb, xa, t, swapped(c));
      CHECK((sa - pb).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((sb - pa).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(pa.cwiseAbs().maxCoeff() > 1e-3);
    }
  }
}

TEST_CASE("audio-dropped branch ignores audio features bitwise") {
  const UNetConfig cfg = tiny(false);
  const NamedTensors params = init_params(cfg, 5);
  const DualNet net(cfg, 8);
  std::mt19937_64 rng(6);
  const Tensor xa = randn(8, 78, rng), xb = randn(8, 78, rng);
  cond::DyadCondition c = random_condition(cfg, 8, rng, true);
  const auto [pa, pb] = net.forward(params, xa, xb, 0.5, c);
  c.a.audio = randn(8, cfg.audio_dim, rng, 10.0);
  c.b.audio = randn(8, cfg.audio_dim, rng, 10.0);
  const auto [qa, qb] = net.forward(params, xa, xb, 0.5, c);
  CHECK(pa == qa);
  CHECK(pb == qb);
}

TEST_CASE("forward rejects mismatched shapes") {
  const UNetConfig cfg = tiny(false);
  const NamedTensors params = init_params(cfg, 5);
  const DualNet net(cfg, 8);
  std::mt19937_64 rng(6);
  const cond::DyadCondition c = random_condition(cfg, 8, rng);
  CHECK_THROWS(net.forward(params, randn(7, 78, rng), randn(8, 78, rng), 0.5, c));
  CHECK_THROWS(net.forward(params, randn(8, 78, rng), randn(8, 78, rng), 0.5, random_condition(cfg, 6, rng)));
  CHECK_THROWS_AS(net.forward(params, randn(8, 78, rng), randn(8, 78, rng), 1.5, c), std::invalid_argument);
}

TEST_CASE("cross_attend: symmetric inputs, single step, row sums") {
  std::mt19937_64 rng(7);
  numerics::Graph g;
  Var ha = g.input("ha", {5, 8}), hb = g.input("hb", {5, 8});
  Var wq = g.parameter("wq", {8, 8}), wk = g.parameter("wk", {8, 8}), wv = g.parameter("wv", {8, 8});
  auto [oa, ob] = cross_attend(ha, hb, wq, wk, wv, 2);
  g.set_output("a", oa);
  g.set_output("b", ob);
  NamedTensors p{{"wq", randn(8, 8, rng)}, {"wk", randn(8, 8, rng)}, {"wv", randn(8, 8, rng)}};
  const Tensor h = randn(5, 8, rng);
  NamedTensors in = p;
  in["ha"] = h;
  in["hb"] = h;
  NamedTensors out = numerics::forward_eval(g, in);
  CHECK(out["a"] == out["b"]);

  // One timestep per stream: the single softmax weight is 1.
  numerics::Graph g1;
  Var a1 = g1.input("ha", {1, 8}), b1 = g1.input("hb", {1, 8});
  auto [o1, o2] = cross_attend(a1, b1, g1.parameter("wq", {8, 8}), g1.parameter("wk", {8, 8}),
                               g1.parameter("wv", {8, 8}), 2);
  g1.set_output("a", o1);
  g1.set_output("b", o2);
  in = p;
  in["ha"] = randn(1, 8, rng);
  in["hb"] = randn(1, 8, rng);
  out = numerics::forward_eval(g1, in);
  CHECK((out["a"] - in["hb"] * p["wv"]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out["b"] - in["ha"] * p["wv"]).cwiseAbs().maxCoeff() < 1e-12);

  const Tensor q = randn(6, 8, rng), k = randn(9, 8, rng);
  for (const Tensor& probs : numerics::attention_probabilities(q, k, 2)) {
    CHECK((probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("film: zero heads, forced gamma and beta") {
  numerics::Graph g;
  Var h = g.input("h", {4, 3}), gam = g.input("g", {4, 3}), bet = g.input("b", {4, 3});
  g.set_output("y", film(h, gam, bet));
  std::mt19937_64 rng(8);
  const Tensor hv = randn(4, 3, rng);
  NamedTensors in{{"h", hv}, {"g", Tensor::Zero(4, 3)}, {"b", Tensor::Zero(4, 3)}};
  CHECK(numerics::forward_eval(g, in)["y"] == hv);
  in["g"] = Tensor::Ones(4, 3);
  CHECK(numerics::forward_eval(g, in)["y"] == 2.0 * hv);

  numerics::Graph g1;
  Var h1 = g1.input("h", {5, 1}), g1v = g1.input("g", {5, 1}), b1 = g1.input("b", {5, 1});
  g1.set_output("y", film(h1, g1v, b1));
  const Tensor hh = randn(5, 1, rng), gg = randn(5, 1, rng);
  const Tensor bb = -((gg.array() + 1.0) * hh.array()).matrix();
  CHECK(numerics::forward_eval(g1, {{"h", hh}, {"g", gg}, {"b", bb}})["y"].cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("init_params zeroes FiLM heads when configured") {
  const UNetConfig cfg = tiny(true);
  const NamedTensors params = init_params(cfg, 9);
  for (const auto& [name, t] : params) {
    if (name.find(".gamma.") != std::string::npos || name.find(".beta.") != std::string::npos) {
      CHECK(t.isZero(0.0));
    }
  }
}

TEST_CASE("gradient check through the dual network") {
  const UNetConfig cfg = tiny(false);
  numerics::Graph g;
  DualVars d = build_dual_net(g, cfg, 8);
  std::mt19937_64 rng(10);
  const Tensor ta = randn(8, 78, rng), tb = randn(8, 78, rng);
  Var loss = numerics::mean(numerics::square(d.pred_a - g.constant(ta))) +
             numerics::mean(numerics::square(d.pred_b - g.constant(tb)));
  NamedTensors bind = init_params(cfg, 11);
  for (auto& [_, t] : bind) t += randn(t.rows(), t.cols(), rng, 0.05);
  const NamedTensors in =
      bind_inputs(cfg, randn(8, 78, rng), randn(8, 78, rng), 0.4, random_condition(cfg, 8, rng));
  bind.insert(in.begin(), in.end());
  numerics::GradientCheckOptions opt;
  opt.max_components = 4;
  opt.seed = 3;
  opt.epsilon = 1e-5;
  const auto errs = numerics::gradient_check(g, bind, loss, g.leaf_names(numerics::NodeKind::kParameter), opt);
  double worst = 0.0;
  std::string where;
  for (const auto& [name, e] : errs) {
    if (e > worst) worst = e, where = name;
  }
  INFO("worst leaf: " << where);
  CHECK(worst < 1e-4);
}
