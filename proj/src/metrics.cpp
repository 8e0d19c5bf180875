#include "dyad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <random>

#include <Eigen/Eigenvalues>

#include "dyad/rng.hpp"

namespace dyad::metrics {

namespace {

using DenseMatrix = Eigen::MatrixXd;  // column-major scratch for the decompositions

DenseMatrix psd_sqrt(const DenseMatrix& m) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

template <typename Scalar>
void GaussianStats<Scalar>::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("GaussianStats: covariance must be d x d");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-9)) {
    throw std::invalid_argument("GaussianStats: covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(cov);
  if (es.eigenvalues().minCoeff() < Scalar(-1e-9)) {
    throw std::invalid_argument("GaussianStats: covariance not positive semidefinite");
  }
}

template struct GaussianStats<double>;

Stats fit_gaussian(const Tensor& samples) {
  const Index n = samples.rows(), d = samples.cols();
  if (n < d + 1) {
    throw DegenerateStats("fit_gaussian: " + std::to_string(n) + " samples for dimension " + std::to_string(d) +
                          " give a degenerate covariance");
  }
  Stats s;
  s.mean = samples.colwise().mean().transpose();
  const DenseMatrix centered = samples.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

double frechet_distance(const Stats& a, const Stats& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const DenseMatrix ra = psd_sqrt(a.cov);
  const DenseMatrix cross = psd_sqrt(ra * b.cov * ra);
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
}

FeatureExtractor projection_extractor(Index dim, std::uint64_t seed) {
  std::mt19937_64 rng = derived_rng(seed, {0xfea7});
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(face::kMotionDim)));
  Tensor proj(face::kMotionDim, dim);
  for (Index i = 0; i < proj.size(); ++i) proj.data()[i] = n(rng);
  FeatureExtractor fx;
  fx.name = "projection";
  fx.dim = dim;
  fx.extract = [proj](const Tensor& seq) -> Tensor {
    if (seq.cols() != face::kMotionDim) throw std::invalid_argument("projection_extractor: expected L x 78");
    Tensor x = seq;
    const Index pose = face::kRotationOffset;
    const Index width = face::kRotationDim + face::kTranslationDim;
    x.middleCols(pose, width).rowwise() -= seq.middleCols(pose, width).colwise().mean();
    return x * proj;
  };
  return fx;
}

FeatureExtractor block_extractor(std::string name, Index offset, Index count) {
  FeatureExtractor fx;
  fx.name = std::move(name);
  fx.dim = count;
  fx.extract = [offset, count](const Tensor& seq) -> Tensor { return seq.middleCols(offset, count); };
  return fx;
}

Tensor corpus_features(const std::vector<Tensor>& seqs, const FeatureExtractor& fx) {
  Index rows = 0;
  for (const Tensor& s : seqs) rows += s.rows();
  Tensor out(rows, fx.dim);
  Index r = 0;
  for (const Tensor& s : seqs) {
    const Tensor f = fx(s);
    out.middleRows(r, f.rows()) = f;
    r += f.rows();
  }
  return out;
}

double fd(const std::vector<Tensor>& generated, const std::vector<Tensor>& real, const FeatureExtractor& fx) {
  return frechet_distance(fit_gaussian(corpus_features(generated, fx)), fit_gaussian(corpus_features(real, fx)));
}

namespace {

Tensor paired_features(const std::vector<SequencePair>& pairs, const FeatureExtractor& fx) {
  Index rows = 0;
  for (const auto& p : pairs) {
    if (p.first.rows() != p.second.rows()) throw std::invalid_argument("paired_fd: pair length mismatch");
    rows += p.first.rows();
  }
  Tensor out(rows, 2 * fx.dim);
  Index r = 0;
  for (const auto& [a, b] : pairs) {
    out.block(r, 0, a.rows(), fx.dim) = fx(a);
    out.block(r, fx.dim, b.rows(), fx.dim) = fx(b);
    r += a.rows();
  }
  return out;
}

}  // namespace

double paired_fd(const std::vector<SequencePair>& generated, const std::vector<SequencePair>& real,
                 const FeatureExtractor& fx) {
  return frechet_distance(fit_gaussian(paired_features(generated, fx)), fit_gaussian(paired_features(real, fx)));
}

std::string_view to_string(Region r) {
  switch (r) {
    case Region::kExp: return "EXP";
    case Region::kTransl: return "TRANSL";
    case Region::kRot: return "ROT";
    case Region::kEye: return "EYE";
    case Region::kLip: return "LIP";
  }
  return "?";
}

std::vector<Index> region_columns(Region r, const std::vector<Index>& lip_indices) {
  std::vector<Index> cols;
  auto range = [&](Index off, Index n) {
    for (Index i = 0; i < n; ++i) cols.push_back(off + i);
  };
  switch (r) {
    case Region::kExp: range(face::kExpressionOffset, face::kExpressionDim); break;
    case Region::kTransl: range(face::kTranslationOffset, face::kTranslationDim); break;
    case Region::kRot: range(face::kRotationOffset, 6); break;
    case Region::kEye: range(face::kRotationOffset + face::joint_offset(face::Joint::kLeftEye), 6); break;
    case Region::kLip: cols = lip_indices; break;
  }
  return cols;
}

double region_mse(const Tensor& pred, const Tensor& gt, Region r, const std::vector<Index>& lip_indices) {
  if (pred.rows() != gt.rows() || pred.cols() != face::kMotionDim || gt.cols() != face::kMotionDim) {
    throw std::invalid_argument("region_mse: expected aligned L x 78 sequences");
  }
  const std::vector<Index> cols = region_columns(r, lip_indices);
  double acc = 0.0;
  for (Index c : cols) acc += (pred.col(c) - gt.col(c)).squaredNorm();
  return acc / static_cast<double>(cols.size() * static_cast<std::size_t>(pred.rows()));
}

VmseResult vmse(const std::pair<face::MotionSequence, face::MotionSequence>& pred,
                const std::pair<face::MotionSequence, face::MotionSequence>& gt, const Tensor& mask_a,
                const Tensor& mask_b, const face::FaceBasis& basis, const face::Rig& rig) {
  double sums[2] = {0.0, 0.0};
  Index counts[2] = {0, 0};
  auto accumulate = [&](const face::MotionSequence& p, const face::MotionSequence& g, const Tensor& mask) {
    if (p.length() != g.length() || mask.rows() != p.length()) {
      throw std::invalid_argument("vmse: sequences and masks must be aligned");
    }
    const Tensor d = face::posed_sequence(basis, rig, p) - face::posed_sequence(basis, rig, g);
    const double per_vertex = 1.0 / static_cast<double>(basis.vertex_count());
    for (Index k = 0; k < d.rows(); ++k) {
      const int bucket = mask(k, 0) > 0.5 ? 0 : 1;
      sums[bucket] += d.row(k).squaredNorm() * per_vertex;
      ++counts[bucket];
    }
  };
  accumulate(pred.first, gt.first, mask_a);
  accumulate(pred.second, gt.second, mask_b);
  VmseResult r;
  if (counts[0] > 0) r.speaker = sums[0] / static_cast<double>(counts[0]);
  if (counts[1] > 0) r.listener = sums[1] / static_cast<double>(counts[1]);
  return r;
}

KMeansResult kmeans(const Tensor& points, Index k, std::uint64_t seed, int max_iterations) {
  const Index n = points.rows(), d = points.cols();
  if (n == 0) throw std::invalid_argument("kmeans: no points");
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: k must lie in [1, N]");
  std::mt19937_64 rng = derived_rng(seed, {0x6b6d});
  std::uniform_real_distribution<double> u(0.0, 1.0);

  KMeansResult r;
  r.centers.resize(k, d);
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index first = std::min<Index>(n - 1, static_cast<Index>(u(rng) * static_cast<double>(n)));
  r.centers.row(0) = points.row(first);
  for (Index c = 1; c < k; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      dist[static_cast<std::size_t>(i)] =
          std::min(dist[static_cast<std::size_t>(i)], (points.row(i) - r.centers.row(c - 1)).squaredNorm());
      total += dist[static_cast<std::size_t>(i)];
    }
    Index pick = 0;
    if (total > 0.0) {
      double target = u(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        target -= dist[static_cast<std::size_t>(pick)];
        if (target < 0.0) break;
      }
    }
    r.centers.row(c) = points.row(pick);
  }

  r.assignment.assign(static_cast<std::size_t>(n), -1);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double dd = (points.row(i) - r.centers.row(c)).squaredNorm();
        if (dd < best_d) best_d = dd, best = c;
      }
      if (r.assignment[static_cast<std::size_t>(i)] != best) {
        r.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Tensor sums = Tensor::Zero(k, d);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.assignment[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(i)])];
    }
    // Empty clusters keep their previous center.
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
  return r;
}

double sid_of_features(const Tensor& points, Index k, std::uint64_t seed) {
  const Index n = points.rows();
  if (n == 0) throw std::invalid_argument("sid: empty corpus");
  if (k > n) {
    std::cerr << "sid: k=" << k << " exceeds " << n << " sequences; using k=" << n << '\n';
    k = n;
  }
  const KMeansResult km = kmeans(points, k, seed);
  std::map<Index, Index> histogram;
  for (Index a : km.assignment) ++histogram[a];
  double h = 0.0;
  for (const auto& [c, count] : histogram) {
    const double p = static_cast<double>(count) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return std::max(0.0, h);
}

double sid(const std::vector<Tensor>& seqs, const FeatureExtractor& fx, Index k, std::uint64_t seed) {
  if (seqs.empty()) throw std::invalid_argument("sid: empty corpus");
  Tensor points(static_cast<Index>(seqs.size()), fx.dim);
  for (std::size_t i = 0; i < seqs.size(); ++i) points.row(static_cast<Index>(i)) = fx(seqs[i]).colwise().mean();
  return sid_of_features(points, k, seed);
}

}  // namespace dyad::metrics
