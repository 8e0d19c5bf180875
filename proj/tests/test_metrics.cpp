#include <cmath>
#include <complex>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "dyad/metrics.hpp"

using namespace dyad;
using namespace dyad::metrics;

namespace {

Tensor randn(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor t(r, c);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

Stats random_stats(Index d, std::mt19937_64& rng) {
  const Tensor a = randn(d, d, rng);
  Stats s;
  s.mean = randn(d, 1, rng);
  s.cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
  return s;
}

// Tr((S_a S_b)^{1/2}) as the sum of square roots of the (real, non-negative)
// eigenvalues of the non-symmetric product.
double fd_oracle(const Stats& a, const Stats& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.cov * b.cov);
  double tr = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr;
}

Tensor sequence_from_features(const Tensor& f) {
  Tensor seq = Tensor::Zero(f.rows(), 78);
  seq.leftCols(f.cols()) = f;
  return seq;
}

}  // namespace

TEST_CASE("frechet distance: analytic cases, symmetry and an eigenvalue oracle") {
  std::mt19937_64 rng(1);
  const Stats a = random_stats(6, rng), b = random_stats(6, rng);
  CHECK(std::abs(frechet_distance(a, a)) < 1e-9);
  CHECK(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-9);
  CHECK(frechet_distance(a, b) == doctest::Approx(fd_oracle(a, b)).epsilon(1e-9));

  Stats z, m;
  z.mean = Eigen::VectorXd::Zero(4);
  z.cov = Eigen::MatrixXd::Identity(4, 4);
  m = z;
  m.mean << 1.0, -2.0, 0.5, 3.0;
  CHECK(std::abs(frechet_distance(z, m) - m.mean.squaredNorm()) < 1e-8);

  Stats p, q;
  p.mean = Eigen::VectorXd::Constant(1, 0.3);
  p.cov = Eigen::MatrixXd::Constant(1, 1, 2.25);
  q.mean = Eigen::VectorXd::Constant(1, -1.1);
  q.cov = Eigen::MatrixXd::Constant(1, 1, 0.49);
  CHECK(std::abs(frechet_distance(p, q) - (1.4 * 1.4 + (1.5 - 0.7) * (1.5 - 0.7))) < 1e-8);
  CHECK_THROWS_AS(frechet_distance(p, z), std::invalid_argument);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("empirical FD of two draws of one Gaussian is small") {
  std::mt19937_64 rng(2);
  const Tensor x = randn(1000, 8, rng), y = randn(1000, 8, rng);
  const double v = frechet_distance(fit_gaussian(x), fit_gaussian(y));
  CHECK(v >= -1e-8);
  CHECK(v < 0.05);
  CHECK_THROWS_AS(fit_gaussian(randn(8, 8, rng)), DegenerateStats);
}

TEST_CASE("paired FD: identity, swap invariance, correlation sensitivity") {
  std::mt19937_64 rng(3);
  const FeatureExtractor fx = block_extractor("first4", 0, 4);
  std::vector<SequencePair> correlated, independent, other;
  for (int i = 0; i < 20; ++i) {
    const Tensor a = randn(100, 4, rng);
    correlated.emplace_back(sequence_from_features(a), sequence_from_features(a));
    independent.emplace_back(sequence_from_features(randn(100, 4, rng)), sequence_from_features(randn(100, 4, rng)));
    other.emplace_back(sequence_from_features(randn(100, 4, rng)), sequence_from_features(randn(100, 4, rng)));
  }
  CHECK(std::abs(paired_fd(independent, independent, fx)) < 1e-8);
  CHECK(paired_fd(correlated, independent, fx) > 0.1);

  std::vector<Tensor> ca, ia, cb, ib;
  for (const auto& [a, b] : correlated) ca.push_back(a), cb.push_back(b);
  for (const auto& [a, b] : independent) ia.push_back(a), ib.push_back(b);
  CHECK(fd(ca, ia, fx) < 0.05);
  CHECK(fd(cb, ib, fx) < 0.05);

  auto swapped = [](std::vector<SequencePair> v) {
    for (auto& p : v) std::swap(p.first, p.second);
    return v;
  };
  CHECK(std::abs(paired_fd(swapped(independent), swapped(other), fx) - paired_fd(independent, other, fx)) < 1e-9);

  std::vector<SequencePair> few{{Tensor::Zero(4, 78), Tensor::Zero(4, 78)}};
  CHECK_THROWS_AS(paired_fd(few, few, fx), DegenerateStats);
}

TEST_CASE("projection extractor is deterministic and pose-normalized") {
  const FeatureExtractor fx = projection_extractor(64, 5);
  std::mt19937_64 rng(4);
  const Tensor seq = randn(10, 78, rng);
  CHECK(fx(seq) == projection_extractor(64, 5)(seq));
  CHECK(fx(seq).cols() == 64);
  Tensor shifted = seq;
  shifted.rightCols(15).rowwise() += randn(1, 15, rng).row(0);
  CHECK((fx(shifted) - fx(seq)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("region MSE blocks") {
  std::mt19937_64 rng(5);
  const Tensor gt = randn(7, 78, rng);
  for (Region r : {Region::kExp, Region::kTransl, Region::kRot, Region::kEye, Region::kLip}) {
    CHECK(region_mse(gt, gt, r) == 0.0);
  }
  Tensor pred = gt;
  pred.col(76).array() += 0.5;
  CHECK(region_mse(pred, gt, Region::kTransl) == doctest::Approx(0.25 / 3.0));
  for (Region r : {Region::kExp, Region::kRot, Region::kEye, Region::kLip}) CHECK(region_mse(pred, gt, r) == 0.0);

  pred = gt;
  pred.col(40).array() += 1.0;
  CHECK(region_mse(pred, gt, Region::kExp) == doctest::Approx(1.0 / 63.0).epsilon(1e-14));

  // Blocks are disjoint and cover all 78 columns; LIP lies inside EXP.
  std::vector<int> hits(78, 0);
  for (Region r : {Region::kExp, Region::kTransl, Region::kRot, Region::kEye}) {
    for (Index c : region_columns(r)) ++hits[static_cast<std::size_t>(c)];
  }
  for (int h : hits) CHECK(h == 1);
  for (Index c : region_columns(Region::kLip)) CHECK(c < 63);
  CHECK(region_columns(Region::kLip).size() == 20);
}

TEST_CASE("vertex MSE buckets") {
  const face::FaceBasis basis = face::make_synthetic_basis(30, 3);
  const face::Rig rig = face::make_synthetic_rig(basis);
  std::mt19937_64 rng(6);
  auto motion = [&]() {
    return face::MotionSequence::from_parameters(0.1 * randn(6, 78, rng), 25.0, RowVector::Zero(50));
  };
  const face::MotionSequence a = motion(), b = motion();
  const Tensor ones = Tensor::Ones(6, 1), zeros = Tensor::Zero(6, 1);
  const VmseResult same = vmse({a, b}, {a, b}, ones, zeros, basis, rig);
  CHECK(same.speaker.value() == 0.0);
  CHECK(same.listener.value() == 0.0);

  face::MotionSequence a2 = a, b2 = b;
  a2.translation.col(0).array() += 1.0;
  b2.translation.col(2).array() -= 1.0;
  const VmseResult shift = vmse({a2, b2}, {a, b}, ones, zeros, basis, rig);
  CHECK(shift.speaker.value() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(shift.listener.value() == doctest::Approx(1.0).epsilon(1e-12));

  // Only A's error: all of A is in the speaker bucket, so the listener bucket stays clean.
  const VmseResult only_a = vmse({a2, b}, {a, b}, ones, zeros, basis, rig);
  CHECK(only_a.speaker.value() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(only_a.listener.value() == 0.0);

  const VmseResult no_speaker = vmse({a, b}, {a, b}, zeros, zeros, basis, rig);
  CHECK_FALSE(no_speaker.speaker.has_value());
  CHECK(no_speaker.listener.has_value());
}

TEST_CASE("SID: identical corpus, separated blobs, bounds and determinism") {
  const Tensor same = Tensor::Constant(50, 3, 0.7);
  CHECK(sid_of_features(same, 40, 1) == 0.0);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 0.1);
  Tensor blobs(40 * 10, 2);
  for (Index c = 0; c < 40; ++c) {
    for (Index i = 0; i < 10; ++i) {
      blobs(10 * c + i, 0) = 100.0 * static_cast<double>(c % 8) + n(rng);
      blobs(10 * c + i, 1) = 100.0 * static_cast<double>(c / 8) + n(rng);
    }
  }
  const double h40 = sid_of_features(blobs, 40, 3);
  CHECK(std::abs(h40 - std::log(40.0)) < 0.01);
  CHECK(h40 <= std::log(40.0) + 1e-12);
  CHECK(sid_of_features(blobs, 40, 3) == h40);

  Tensor two(20, 2);
  for (Index i = 0; i < 20; ++i) two.row(i) << (i < 10 ? -50.0 : 50.0) + n(rng), n(rng);
  CHECK(sid_of_features(two, 2, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor pts = randn(60, 4, rng);
    const double h = sid_of_features(pts, 40, seed);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(40.0) + 1e-12);
  }
  CHECK(sid_of_features(randn(5, 2, rng), 40, 0) <= std::log(5.0) + 1e-12);
  CHECK_THROWS_AS(sid_of_features(Tensor(0, 2), 40, 0), std::invalid_argument);

  std::vector<Tensor> seqs(12, Tensor::Constant(4, 78, 0.2));
  CHECK(sid(seqs, block_extractor("EXP", 0, 63), 40, 0) == 0.0);
}
