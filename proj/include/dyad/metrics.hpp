#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dyad/facemodel.hpp"

namespace dyad::metrics {

template <typename Scalar>
struct GaussianStats {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cov;

  Index dim() const { return mean.size(); }
  /// Symmetric within 1e-9 and eigenvalues >= -1e-9.
  void validate() const;
};

using Stats = GaussianStats<double>;

class DegenerateStats : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mean and unbiased covariance of the rows of `samples` (N x d). Needs N > d.
Stats fit_gaussian(const Tensor& samples);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the root taken
/// through the symmetric product S_a^{1/2} S_b S_a^{1/2}.
double frechet_distance(const Stats& a, const Stats& b);

/// Per-frame features of one L x 78 sequence (L x d out).
struct FeatureExtractor {
  std::string name;
  Index dim = 0;
  std::function<Tensor(const Tensor&)> extract;

  Tensor operator()(const Tensor& seq) const { return extract(seq); }
};

/// Pose-normalized parameters (translation and rotation blocks centred on their
/// sequence means) through a fixed seeded projection to `dim`.
FeatureExtractor projection_extractor(Index dim = 64, std::uint64_t seed = 99);

/// Raw columns [offset, offset + count) of each frame.
FeatureExtractor block_extractor(std::string name, Index offset, Index count);

/// Stacked per-frame features of a corpus.
Tensor corpus_features(const std::vector<Tensor>& seqs, const FeatureExtractor& fx);

double fd(const std::vector<Tensor>& generated, const std::vector<Tensor>& real, const FeatureExtractor& fx);

using SequencePair = std::pair<Tensor, Tensor>;

/// FD over per-frame [features(A) | features(B)].
double paired_fd(const std::vector<SequencePair>& generated, const std::vector<SequencePair>& real,
                 const FeatureExtractor& fx);

enum class Region { kExp, kTransl, kRot, kEye, kLip };

std::string_view to_string(Region r);

/// Parameter columns of a region inside a 78-wide row.
std::vector<Index> region_columns(Region r, const std::vector<Index>& lip_indices = face::default_lip_indices());

double region_mse(const Tensor& pred, const Tensor& gt, Region r,
                  const std::vector<Index>& lip_indices = face::default_lip_indices());

struct VmseResult {
  std::optional<double> speaker;
  std::optional<double> listener;
};

/// Mean squared vertex distance of posed meshes, bucketed per participant-frame
/// by mask > 0.5 (speaker) or not (listener).
VmseResult vmse(const std::pair<face::MotionSequence, face::MotionSequence>& pred,
                const std::pair<face::MotionSequence, face::MotionSequence>& gt, const Tensor& mask_a,
                const Tensor& mask_b, const face::FaceBasis& basis, const face::Rig& rig);

struct KMeansResult {
  std::vector<Index> assignment;
  Tensor centers;
  int iterations = 0;
};

/// Lloyd iterations from a seeded k-means++ start; stops early on convergence.
KMeansResult kmeans(const Tensor& points, Index k, std::uint64_t seed, int max_iterations = 100);

/// Entropy (nats) of the cluster-assignment histogram of `points`. k is
/// reduced to the number of points when fewer are given.
double sid_of_features(const Tensor& points, Index k = 40, std::uint64_t seed = 0);

/// SID over sequences, each summarized by the time mean of its features.
double sid(const std::vector<Tensor>& seqs, const FeatureExtractor& fx, Index k = 40, std::uint64_t seed = 0);

}  // namespace dyad::metrics
