#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dyad/types.hpp"

namespace dyad::face {

inline constexpr Index kExpressionDim = 63;
inline constexpr Index kIdentityDim = 50;
inline constexpr Index kJointCount = 4;
inline constexpr Index kRotationDim = 3 * kJointCount;
inline constexpr Index kTranslationDim = 3;
inline constexpr Index kMotionDim = kExpressionDim + kRotationDim + kTranslationDim;  // 78
inline constexpr Index kLipCount = 20;

// Column offsets inside a 78-wide motion row: [expression | rotation | translation].
inline constexpr Index kExpressionOffset = 0;
inline constexpr Index kRotationOffset = kExpressionDim;
inline constexpr Index kTranslationOffset = kExpressionDim + kRotationDim;

enum class Joint : Index { kNeck = 0, kHead = 1, kLeftEye = 2, kRightEye = 3 };

inline constexpr Index joint_offset(Joint j) { return 3 * static_cast<Index>(j); }

/// Canonical gaze-forward direction of an unrotated eye.
inline const Vec3 kGazeForward{0.0, 0.0, 1.0};

/// Largest rotation angle accepted; longer axis-angle vectors are clamped to it.
inline constexpr double kMaxRotationAngle = std::numbers::pi;

template <typename Scalar>
Matrix3<Scalar> skew(const Vector3<Scalar>& v) {
  Matrix3<Scalar> s;
  s << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return s;
}

/// Rotation matrix of an axis-angle vector via the closed-form exponential map.
template <typename Scalar>
Matrix3<Scalar> rotation_from_axis_angle(const Vector3<Scalar>& r) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  Scalar theta = r.norm();
  if (theta < Scalar(1e-12)) return Matrix3<Scalar>::Identity() + skew(r);
  Vector3<Scalar> axis = r / theta;
  if (theta > Scalar(kMaxRotationAngle)) theta = Scalar(kMaxRotationAngle);
  const Matrix3<Scalar> k = skew(axis);
  return Matrix3<Scalar>::Identity() + sin(theta) * k + (Scalar(1) - cos(theta)) * k * k;
}

/// Linear face model: mean shape plus identity and expression bases.
/// Vertex data is flattened vertex-major: (x0, y0, z0, x1, ...).
struct FaceBasis {
  RowVector mean_shape;     // 1 x 3V
  Tensor identity_bases;    // 50 x 3V
  Tensor expression_bases;  // 63 x 3V
  std::vector<Index> lip_indices;

  Index vertex_count() const { return mean_shape.cols() / 3; }
  void validate() const;
};

std::vector<Index> default_lip_indices();

/// Ellipsoidal mean head with seeded random bases (orthonormal within each set
/// whenever 3V is large enough to allow it).
FaceBasis make_synthetic_basis(Index vertex_count, std::uint64_t seed,
                               std::vector<Index> lip_indices = default_lip_indices());

NamedTensors basis_to_tensors(const FaceBasis& basis);
FaceBasis basis_from_tensors(const NamedTensors& tensors);

/// Four-joint skeleton (neck -> head -> {left eye, right eye}) with skinning weights.
struct Rig {
  std::array<Vec3, kJointCount> rest;
  std::array<int, kJointCount> parent{-1, 0, 1, 1};
  Tensor weights;  // V x 4, rows sum to one

  void validate() const;
};

Rig make_synthetic_rig(const FaceBasis& basis);

struct MotionFrame {
  Eigen::VectorXd expression;                              // 63
  Eigen::Matrix<double, 4, 3, Eigen::RowMajor> rotation;  // axis-angle per joint
  Vec3 translation;
};

/// Per-participant animation track, stored as column blocks over L frames.
struct MotionSequence {
  Tensor expression;   // L x 63
  Tensor rotation;     // L x 12
  Tensor translation;  // L x 3
  double fps = 25.0;
  RowVector identity = RowVector::Zero(kIdentityDim);

  Index length() const { return expression.rows(); }
  MotionFrame frame(Index k) const;
  /// L x 78 concatenation [expression | rotation | translation].
  Tensor parameters() const;
  static MotionSequence from_parameters(const Tensor& params, double fps, RowVector identity);
  void validate() const;
};

/// Bitwise equality of every field (sizes included).
bool identical(const MotionSequence& a, const MotionSequence& b);

/// S + sum_i beta_i S_i + sum_j psi_j E_j, as V x 3.
Tensor synthesize_mesh(const FaceBasis& basis, const RowVector& identity, const RowVector& expression);

/// Linear blend skinning with forward kinematics along the parent chain, then
/// a global translation. `rotation` is 1 x 12 (axis-angle per joint).
Tensor pose_mesh(const Tensor& vertices, const Rig& rig, const RowVector& rotation, const Vec3& translation);

/// Posed vertices for every frame: L x 3V.
Tensor posed_sequence(const FaceBasis& basis, const Rig& rig, const MotionSequence& motion);

class DegenerateGaze : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Unit gaze direction: normalized mean of both eyes' forward vectors, each
/// rotated by neck, head and eye rotations composed along the chain.
Vec3 gaze_vector(const RowVector& rotation);

struct TranslationDeltas {
  Vec3 first;
  Tensor deltas;  // L x 3, first row zero
};

TranslationDeltas delta_translation(const Tensor& translation);
Tensor apply_translation_deltas(const Vec3& first, const Tensor& deltas);

// Motion file: "DYDM", u32 version, u64 L, f64 fps, u32 dims (63, 12, 3, 50),
// identity (50 x f64), then L frames of 78 little-endian f64 (frame-major).
inline constexpr std::string_view kMotionMagic = "DYDM";
std::string encode_motion(const MotionSequence& motion);
MotionSequence decode_motion(std::string_view bytes);
void save_motion(const std::filesystem::path& path, const MotionSequence& motion);
MotionSequence load_motion(const std::filesystem::path& path);

}  // namespace dyad::face
