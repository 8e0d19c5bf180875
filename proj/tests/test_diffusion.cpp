#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "dyad/diffusion.hpp"
#include "dyad/dualnet.hpp"

using namespace dyad;
using namespace dyad::diffusion;

namespace {

Tensor randn(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor t(r, c);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

cond::DyadCondition some_condition(Index len, Index audio_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return cond::make_dyad_condition(randn(len, audio_dim, rng), Tensor::Constant(len, 1, 1.0),
                                   Tensor::Zero(len, 1), Vec3(0, 0, -0.5), Vec3(0, 0, 0.5), false);
}

}  // namespace

TEST_CASE("schedule: midpoint, clamps, complement symmetry, monotone") {
  const NoiseSchedule s;
  CHECK(std::abs(s.logsnr(0.5)) < 1e-15);
  CHECK(s.logsnr(0.0) == 15.0);
  CHECK(s.logsnr(1e-12) == 15.0);
  CHECK(s.logsnr(1.0) == -15.0);
  CHECK(std::abs(s.logsnr(0.25) + s.logsnr(0.75)) < 1e-12);
  // tan(pi/8) = sqrt(2) - 1.
  CHECK(std::abs(s.logsnr(0.25) + 2.0 * std::log(std::sqrt(2.0) - 1.0)) < 1e-12);
  double prev = s.logsnr(0.001);
  for (int i = 2; i < 1000; ++i) {
    const double t = i / 1000.0;
    const double v = s.logsnr(t);
    CHECK(v < prev);
    prev = v;
    CHECK(std::abs(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) - 1.0) < 1e-12);
  }
}

TEST_CASE("noise examples") {
  const NoiseSchedule s;
  std::mt19937_64 rng(1);
  const Tensor x0 = randn(4, 78, rng), eps = randn(4, 78, rng);
  CHECK((noise(s, x0, 0.5, eps) - (x0 + eps) / std::sqrt(2.0)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(noise(s, x0, 0.3, Tensor::Zero(4, 78)) == s.alpha(0.3) * x0);
  // Clean endpoint: sigma = sqrt(sigmoid(-15)) ~ 5.5e-4.
  CHECK((noise(s, x0, 0.0, eps) - x0).cwiseAbs().maxCoeff() < 1e-3 * (1.0 + eps.cwiseAbs().maxCoeff()));
  CHECK_THROWS_AS(noise(s, x0, 0.5, eps.leftCols(3)), std::invalid_argument);
}

TEST_CASE("cfg_combine endpoints and affinity") {
  std::mt19937_64 rng(2);
  const Tensor c = randn(3, 5, rng), u = randn(3, 5, rng);
  CHECK(cfg_combine(c, u, 1.0) == c);
  CHECK(cfg_combine(c, u, 0.0) == u);
  CHECK(cfg_combine(c, c, 7.3) == c);
  const Tensor mid = cfg_combine(c, u, 0.5 * (1.0 + 3.0));
  CHECK((mid - 0.5 * (cfg_combine(c, u, 1.0) + cfg_combine(c, u, 3.0))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ddim with an oracle predictor returns the oracle for any step count") {
  std::mt19937_64 rng(3);
  const Tensor ta = randn(10, 78, rng), tb = randn(10, 78, rng);
  const Denoiser oracle = [&](const Tensor&, const Tensor&, double, const cond::DyadCondition&) {
    return std::pair<Tensor, Tensor>{ta, tb};
  };
  const cond::DyadCondition c = some_condition(10, 6, 4);
  for (int steps : {1, 4, 8}) {
    for (double w : {1.0, 2.5}) {
      const auto [a, b] = ddim_sample(oracle, c, 10, {steps, w, 99});
      CHECK((a - ta).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((b - tb).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("ddim: the update walks the uniform grid and uses both guidance passes") {
  std::vector<double> times;
  int dropped = 0;
  const Denoiser probe = [&](const Tensor& xa, const Tensor& xb, double t, const cond::DyadCondition& c) {
    if (c.a.audio_dropped) {
      ++dropped;
      CHECK(c.a.audio.isZero(0.0));
    } else {
      times.push_back(t);
    }
    return std::pair<Tensor, Tensor>{0.5 * xa, 0.5 * xb};
  };
  ddim_sample(probe, some_condition(6, 4, 1), 6, {4, 2.5, 0});
  CHECK(times == std::vector<double>{1.0, 0.75, 0.5, 0.25});
  CHECK(dropped == 4);
}

TEST_CASE("ddim: bit-identical under reruns, seed-dependent, non-finite guarded") {
  net::UNetConfig cfg;
  cfg.embed_dim = 16;
  cfg.audio_dim = 6;
  cfg.role_dim = 4;
  cfg.time_dim = 8;
  cfg.zero_init_output = false;
  const net::DualNet model(cfg, 8);
  const NamedTensors params = net::init_params(cfg, 5);
  const Denoiser d = [&](const Tensor& a, const Tensor& b, double t, const cond::DyadCondition& c) {
    return model.forward(params, a, b, t, c);
  };
  const cond::DyadCondition c = some_condition(8, 6, 7);
  const auto r1 = ddim_sample(d, c, 8, {8, 2.5, 11});
  const auto r2 = ddim_sample(d, c, 8, {8, 2.5, 11});
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
  const auto r3 = ddim_sample(d, c, 8, {8, 2.5, 12});
  CHECK(r3.first != r1.first);

  const Denoiser bad = [](const Tensor& a, const Tensor& b, double t, const cond::DyadCondition&) {
    Tensor x = a;
    if (t < 0.6) x(0, 0) = std::nan("");
    return std::pair<Tensor, Tensor>{x, b};
  };
  CHECK_THROWS_WITH_AS(ddim_sample(bad, c, 8, {4, 1.0, 0}), "ddim_sample: non-finite prediction at step 2",
                       NonFiniteError);
  CHECK_THROWS_AS(ddim_sample(d, c, 8, {0, 2.5, 0}), std::invalid_argument);
  CHECK_THROWS_AS(ddim_sample(d, c, 8, {4, -1.0, 0}), std::invalid_argument);
}

TEST_CASE("model space round trip restores absolute translations") {
  std::mt19937_64 rng(6);
  face::MotionSequence m;
  m.expression = randn(5, 63, rng);
  m.rotation = 0.1 * randn(5, 12, rng);
  m.translation = 0.25 * (randn(5, 3, rng) * 8.0).array().round().matrix();
  const Tensor x = to_model_space(m);
  CHECK(x.block(0, face::kTranslationOffset, 1, 3).isZero(0.0));
  const face::MotionSequence back = to_motion(x, m.translation.row(0).transpose(), 25.0, m.identity);
  CHECK(face::identical(back, m));
}
