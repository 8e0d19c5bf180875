#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "dyad/conditioning.hpp"

using namespace dyad;
using namespace dyad::cond;

namespace {

constexpr double kFps = 25.0;

Waveform tone(Index frames, double amp, double hz = 220.0) {
  Waveform w;
  const Index n = frames * frame_hop(kFps);
  w.samples.resize(n);
  for (Index i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate);
  return w;
}

Waveform noise(Index frames, std::uint64_t seed, double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  Waveform w;
  w.samples.resize(frames * frame_hop(kFps));
  for (double& s : w.samples) s = u(rng);
  return w;
}

Tensor column(std::initializer_list<double> v) {
  Tensor t(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) t(i++, 0) = x;
  return t;
}

}  // namespace

TEST_CASE("frame bookkeeping") {
  CHECK(frame_hop(25.0) == 640);
  CHECK(frame_count(tone(12, 0.5), kFps) == 12);
  CHECK_THROWS_AS(frame_hop(0.0), std::invalid_argument);
}

TEST_CASE("vad: silence, saturation, half-active fixture") {
  Waveform silent;
  silent.samples.assign(10 * 640, 0.0);
  CHECK(compute_vad_mask(silent, kFps, -40.0).isZero(0.0));

  Waveform full;
  full.samples.assign(10 * 640, 1.0);
  CHECK((compute_vad_mask(full, kFps, -40.0).array() == 1.0).all());

  const Index len = 20;
  Waveform half = tone(len, 0.5);
  for (Index i = len / 2 * 640; i < len * 640; ++i) half.samples[i] = 0.0;
  const Tensor m = compute_vad_mask(half, kFps, -40.0);
  REQUIRE(m.rows() == len);
  // Oracle: per-frame RMS computed directly, then the 2-frame box.
  for (Index k = 0; k < len; ++k) {
    double p = 0.0;
    for (Index i = k * 640; i < (k + 1) * 640; ++i) p += half.samples[i] * half.samples[i];
    const bool on = 20.0 * std::log10(std::sqrt(p / 640.0) + 1e-300) > -40.0;
    CHECK(on == (k < len / 2));
  }
  for (Index k = 0; k < len / 2; ++k) CHECK(m(k, 0) == 1.0);
  CHECK(m(len / 2, 0) == 0.5);
  for (Index k = len / 2 + 1; k < len; ++k) CHECK(m(k, 0) == 0.0);

  CHECK_THROWS_AS(compute_vad_mask(Waveform{}, kFps, -40.0), std::invalid_argument);
}

TEST_CASE("vad: sign flip invariance and range") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Waveform w = noise(15, seed, 0.02 * static_cast<double>(seed % 5));
    Waveform flipped = w;
    for (double& s : flipped.samples) s = -s;
    const Tensor a = compute_vad_mask(w, kFps, -40.0), b = compute_vad_mask(flipped, kFps, -40.0);
    CHECK(a == b);
    CHECK((a.array() >= 0.0).all());
    CHECK((a.array() <= 1.0).all());
  }
}

TEST_CASE("audio features: silence floor, determinism, log-power scaling") {
  const AudioFeatureExtractor fx(64, 7);
  Waveform silent;
  silent.samples.assign(8 * 640, 0.0);
  const Tensor f0 = fx(silent, kFps, 8);
  CHECK(f0.rows() == 8);
  CHECK(f0.cols() == 64);
  for (Index k = 1; k < 8; ++k) CHECK(f0.row(k) == f0.row(0));

  const Waveform w = noise(8, 3, 0.3);
  CHECK(fx(w, kFps, 8) == fx(w, kFps, 8));

  Waveform w2 = w;
  for (double& s : w2.samples) s *= 2.0;
  const Tensor e1 = log_band_energies(w, kFps, 8), e2 = log_band_energies(w2, kFps, 8);
  // The energy floor contributes at most ~1e-10 relative, far below this tolerance.
  CHECK(((e2 - e1).array() - std::log(4.0)).abs().maxCoeff() < 1e-6);

  const AudioFeatureExtractor same(64, 7), other(64, 8);
  CHECK(same.projection() == fx.projection());
  CHECK(other.projection() != fx.projection());
}

TEST_CASE("role_embed endpoints, midpoint and affinity") {
  const RoleEmbeddings e = make_role_embeddings(16, 2);
  CHECK(role_embed(1.0, e) == e.speak);
  CHECK(role_embed(0.0, e) == e.listen);
  CHECK((role_embed(0.5, e) - 0.5 * (e.speak + e.listen)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(role_embed(1.5, e), std::invalid_argument);
  CHECK_THROWS_AS(role_embed(-0.1, e), std::invalid_argument);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double m1 = u(rng), m2 = u(rng), a = u(rng);
    const RowVector lhs = role_embed(a * m1 + (1 - a) * m2, e);
    const RowVector rhs = a * role_embed(m1, e) + (1 - a) * role_embed(m2, e);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("assemble_condition: layout, dropout, swap symmetry") {
  const ConditionConfig cfg{.audio_dim = 5, .role_dim = 3};
  const RoleEmbeddings e = make_role_embeddings(cfg.role_dim, 1);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Tensor feats(4, cfg.audio_dim);
  for (Index i = 0; i < feats.size(); ++i) feats.data()[i] = n(rng);
  const Tensor ma = column({1, 1, 0.5, 0}), mb = column({0, 0.25, 0.5, 1});
  const Vec3 ta(0.1, 0.2, 0.3), tb(-1, 0, 0.5);

  const ConditionSequence c = assemble_condition(feats, ma, mb, e, ta, tb, false);
  REQUIRE(c.values.cols() == condition_dim(cfg));
  CHECK(c.values.leftCols(5) == feats);
  CHECK(c.values.block(0, 5, 1, 3) == e.speak);
  CHECK(c.values.block(0, 8, 1, 3) == e.listen);
  CHECK(c.values(2, 11) == 0.5);
  CHECK(c.values.block(3, 13, 1, 3) == ta.transpose());
  CHECK(c.values.block(3, 16, 1, 3) == tb.transpose());

  const ConditionSequence d = assemble_condition(feats, ma, mb, e, ta, tb, true);
  CHECK(d.audio_dropped);
  CHECK(d.values.leftCols(5).isZero(0.0));
  CHECK(d.values.rightCols(14) == c.values.rightCols(14));

  const ConditionSequence s = assemble_condition(feats, mb, ma, e, tb, ta, false);
  CHECK(s.values.middleCols(5, 3) == c.values.middleCols(8, 3));
  CHECK(s.values.middleCols(8, 3) == c.values.middleCols(5, 3));
  CHECK(s.values.col(11) == c.values.col(12));
  CHECK(s.values.middleCols(13, 3) == c.values.middleCols(16, 3));

  CHECK_THROWS_AS(assemble_condition(feats, column({1, 0}), mb, e, ta, tb, false), LengthMismatch);

  const DyadCondition dy = make_dyad_condition(feats, ma, mb, ta, tb, false);
  CHECK(assemble_condition(dy.a, e).values == c.values);
  CHECK(assemble_condition(dy.b, e).values == s.values);
  CHECK(make_dyad_condition(feats, ma, mb, ta, tb, true).a.audio.isZero(0.0));
}

TEST_CASE("timestep embedding") {
  const RowVector z = timestep_embedding(0.0, 16);
  CHECK(z.head(8).isZero(0.0));
  CHECK((z.tail(8).array() == 1.0).all());
  const RowVector e = timestep_embedding(0.37, 16);
  for (Index i = 0; i < 8; ++i) CHECK(std::abs(e(i) * e(i) + e(8 + i) * e(8 + i) - 1.0) < 1e-14);
  CHECK_THROWS_AS(timestep_embedding(0.1, 7), std::invalid_argument);
}
