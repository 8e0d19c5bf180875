#include "dyad/facemodel.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "dyad/archive.hpp"
#include "dyad/binio.hpp"

namespace dyad::face {
namespace {

constexpr std::uint32_t kMotionVersion = 1;

bool same_shape(const Tensor& a, const Tensor& b) { return a.rows() == b.rows() && a.cols() == b.cols(); }

Tensor random_rows(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

// Orthonormal rows when rows <= cols, otherwise unit-norm rows.
Tensor orthonormal_rows(Tensor t) {
  if (t.rows() <= t.cols()) {
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(t.transpose()).householderQ();
    return q.leftCols(t.rows()).transpose();
  }
  for (Index r = 0; r < t.rows(); ++r) t.row(r).normalize();
  return t;
}

// Affine map (M, c) of each joint's global transform, x -> M x + c.
struct JointTransform {
  Mat3 m;
  Vec3 c;
};

std::array<JointTransform, kJointCount> joint_transforms(const Rig& rig, const RowVector& rotation) {
  std::array<JointTransform, kJointCount> g;
  for (Index j = 0; j < kJointCount; ++j) {
    const Mat3 r = rotation_from_axis_angle<double>(rotation.segment<3>(3 * j).transpose());
    const Vec3& p = rig.rest[j];
    const int parent = rig.parent[j];
    if (parent < 0) {
      g[j] = {r, p - r * p};
    } else {
      const JointTransform& gp = g[parent];
      g[j] = {gp.m * r, gp.m * (p - r * p) + gp.c};
    }
  }
  return g;
}

}  // namespace

std::vector<Index> default_lip_indices() {
  std::vector<Index> idx(kLipCount);
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

void FaceBasis::validate() const {
  const Index n = mean_shape.cols();
  if (n < 3 || n % 3 != 0) throw std::invalid_argument("FaceBasis: mean shape must hold 3V values");
  if (identity_bases.rows() != kIdentityDim || identity_bases.cols() != n) {
    throw std::invalid_argument("FaceBasis: identity bases must be 50 x 3V");
  }
  if (expression_bases.rows() != kExpressionDim || expression_bases.cols() != n) {
    throw std::invalid_argument("FaceBasis: expression bases must be 63 x 3V");
  }
  if (static_cast<Index>(lip_indices.size()) != kLipCount) {
    throw std::invalid_argument("FaceBasis: lip index set must have 20 entries");
  }
  std::vector<Index> sorted = lip_indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0 ||
      sorted.back() >= kExpressionDim) {
    throw std::invalid_argument("FaceBasis: lip indices must be distinct and < 63");
  }
}

FaceBasis make_synthetic_basis(Index vertex_count, std::uint64_t seed, std::vector<Index> lip_indices) {
  if (vertex_count < 1) throw std::invalid_argument("make_synthetic_basis: vertex_count must be >= 1");
  FaceBasis b;
  b.mean_shape.resize(3 * vertex_count);
  // Fibonacci points on an ellipsoid around the head joint.
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (Index v = 0; v < vertex_count; ++v) {
    const double y = vertex_count == 1 ? 0.0 : 1.0 - 2.0 * (static_cast<double>(v) + 0.5) / vertex_count;
    const double radius = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double phi = golden * static_cast<double>(v);
    b.mean_shape.segment<3>(3 * v) << 0.075 * radius * std::cos(phi), 0.10 * y, 0.09 * radius * std::sin(phi);
  }
  std::mt19937_64 rng(seed);
  b.identity_bases = orthonormal_rows(random_rows(kIdentityDim, 3 * vertex_count, rng));
  b.expression_bases = orthonormal_rows(random_rows(kExpressionDim, 3 * vertex_count, rng));
  b.lip_indices = std::move(lip_indices);
  b.validate();
  return b;
}

NamedTensors basis_to_tensors(const FaceBasis& basis) {
  Tensor lips(1, static_cast<Index>(basis.lip_indices.size()));
  for (std::size_t i = 0; i < basis.lip_indices.size(); ++i) lips(0, static_cast<Index>(i)) = static_cast<double>(basis.lip_indices[i]);
  return {{"basis.mean_shape", basis.mean_shape},
          {"basis.identity", basis.identity_bases},
          {"basis.expression", basis.expression_bases},
          {"basis.lip_indices", lips}};
}

FaceBasis basis_from_tensors(const NamedTensors& tensors) {
  FaceBasis b;
  b.mean_shape = tensors.at("basis.mean_shape");
  b.identity_bases = tensors.at("basis.identity");
  b.expression_bases = tensors.at("basis.expression");
  const Tensor& lips = tensors.at("basis.lip_indices");
  for (Index i = 0; i < lips.size(); ++i) b.lip_indices.push_back(static_cast<Index>(lips.data()[i]));
  b.validate();
  return b;
}

void Rig::validate() const {
  if (weights.cols() != kJointCount) throw std::invalid_argument("Rig: weights must be V x 4");
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("Rig: negative skinning weight");
  if (((weights.rowwise().sum().array() - 1.0).abs() > 1e-9).any()) {
    throw std::invalid_argument("Rig: skinning weight rows must sum to 1");
  }
  if (parent[0] != -1) throw std::invalid_argument("Rig: joint 0 (neck) must be the root");
  for (Index j = 1; j < kJointCount; ++j) {
    if (parent[j] < 0 || parent[j] >= j) throw std::invalid_argument("Rig: parents must precede children");
  }
}

Rig make_synthetic_rig(const FaceBasis& basis) {
  Rig rig;
  rig.rest = {Vec3(0.0, -0.12, -0.02), Vec3(0.0, 0.0, 0.0), Vec3(0.032, 0.03, 0.08), Vec3(-0.032, 0.03, 0.08)};
  const Index n = basis.vertex_count();
  rig.weights.resize(n, kJointCount);
  for (Index v = 0; v < n; ++v) {
    const Vec3 p = basis.mean_shape.segment<3>(3 * v).transpose();
    const double neck = std::clamp((-0.05 - p.y()) / 0.05, 0.0, 1.0);
    const double left = std::max(0.0, 1.0 - (p - rig.rest[2]).norm() / 0.025);
    const double right = std::max(0.0, 1.0 - (p - rig.rest[3]).norm() / 0.025);
    const double eyes = left + right;
    const double scale = eyes + neck > 1.0 ? 1.0 / (eyes + neck) : 1.0;
    rig.weights.row(v) << neck * scale, 0.0, left * scale, right * scale;
    rig.weights(v, 1) = 1.0 - rig.weights(v, 0) - rig.weights(v, 2) - rig.weights(v, 3);
  }
  rig.validate();
  return rig;
}

MotionFrame MotionSequence::frame(Index k) const {
  MotionFrame f;
  f.expression = expression.row(k).transpose();
  for (Index j = 0; j < kJointCount; ++j) f.rotation.row(j) = rotation.block<1, 3>(k, 3 * j);
  f.translation = translation.row(k).transpose();
  return f;
}

Tensor MotionSequence::parameters() const {
  Tensor p(length(), kMotionDim);
  p << expression, rotation, translation;
  return p;
}

MotionSequence MotionSequence::from_parameters(const Tensor& params, double fps, RowVector identity) {
  if (params.cols() != kMotionDim) throw std::invalid_argument("from_parameters: expected 78 columns");
  MotionSequence m;
  m.expression = params.middleCols(kExpressionOffset, kExpressionDim);
  m.rotation = params.middleCols(kRotationOffset, kRotationDim);
  m.translation = params.middleCols(kTranslationOffset, kTranslationDim);
  m.fps = fps;
  m.identity = std::move(identity);
  return m;
}

void MotionSequence::validate() const {
  const Index len = length();
  if (len < 2) throw std::invalid_argument("MotionSequence: at least 2 frames required");
  if (!(fps > 0.0)) throw std::invalid_argument("MotionSequence: fps must be positive");
  if (expression.cols() != kExpressionDim || rotation.rows() != len || rotation.cols() != kRotationDim ||
      translation.rows() != len || translation.cols() != kTranslationDim || identity.cols() != kIdentityDim) {
    throw std::invalid_argument("MotionSequence: block shapes inconsistent");
  }
  if (!parameters().allFinite() || !identity.allFinite()) {
    throw std::invalid_argument("MotionSequence: non-finite values");
  }
}

bool identical(const MotionSequence& a, const MotionSequence& b) {
  return same_shape(a.expression, b.expression) && same_shape(a.rotation, b.rotation) &&
         same_shape(a.translation, b.translation) && a.identity.cols() == b.identity.cols() &&
         a.fps == b.fps && a.expression == b.expression && a.rotation == b.rotation &&
         a.translation == b.translation && a.identity == b.identity;
}

Tensor synthesize_mesh(const FaceBasis& basis, const RowVector& identity, const RowVector& expression) {
  if (identity.cols() != basis.identity_bases.rows()) {
    throw std::invalid_argument("synthesize_mesh: identity coefficient count mismatch");
  }
  if (expression.cols() != basis.expression_bases.rows()) {
    throw std::invalid_argument("synthesize_mesh: expression coefficient count mismatch");
  }
  RowVector flat = basis.mean_shape + identity * basis.identity_bases + expression * basis.expression_bases;
  return Eigen::Map<const Tensor>(flat.data(), basis.vertex_count(), 3);
}

Tensor pose_mesh(const Tensor& vertices, const Rig& rig, const RowVector& rotation, const Vec3& translation) {
  if (vertices.cols() != 3 || vertices.rows() != rig.weights.rows()) {
    throw std::invalid_argument("pose_mesh: vertices must be V x 3 matching the rig");
  }
  if (rotation.cols() != kRotationDim) throw std::invalid_argument("pose_mesh: rotation must hold 4 joints");
  const auto g = joint_transforms(rig, rotation);
  Tensor out = Tensor::Zero(vertices.rows(), 3);
  for (Index j = 0; j < kJointCount; ++j) {
    Tensor moved = (vertices * g[j].m.transpose()).rowwise() + g[j].c.transpose();
    out += rig.weights.col(j).asDiagonal() * moved;
  }
  out.rowwise() += translation.transpose();
  return out;
}

Tensor posed_sequence(const FaceBasis& basis, const Rig& rig, const MotionSequence& motion) {
  const Index n = basis.vertex_count();
  Tensor out(motion.length(), 3 * n);
  for (Index k = 0; k < motion.length(); ++k) {
    Tensor mesh = synthesize_mesh(basis, motion.identity, motion.expression.row(k));
    Tensor posed = pose_mesh(mesh, rig, motion.rotation.row(k), motion.translation.row(k).transpose());
    out.row(k) = Eigen::Map<const RowVector>(posed.data(), 3 * n);
  }
  return out;
}

Vec3 gaze_vector(const RowVector& rotation) {
  if (rotation.cols() != kRotationDim) throw std::invalid_argument("gaze_vector: rotation must hold 4 joints");
  auto rot = [&](Joint j) {
    return rotation_from_axis_angle<double>(rotation.segment<3>(joint_offset(j)).transpose());
  };
  const Mat3 head = rot(Joint::kNeck) * rot(Joint::kHead);
  const Vec3 mean = 0.5 * (head * rot(Joint::kLeftEye) * kGazeForward + head * rot(Joint::kRightEye) * kGazeForward);
  const double n = mean.norm();
  if (n < 1e-9) throw DegenerateGaze("gaze_vector: eye directions cancel");
  return mean / n;
}

TranslationDeltas delta_translation(const Tensor& translation) {
  if (translation.rows() < 1 || translation.cols() != 3) {
    throw std::invalid_argument("delta_translation: expected L x 3 with L >= 1");
  }
  TranslationDeltas d;
  d.first = translation.row(0).transpose();
  d.deltas = translation.rowwise() - translation.row(0);
  return d;
}

Tensor apply_translation_deltas(const Vec3& first, const Tensor& deltas) {
  return deltas.rowwise() + first.transpose();
}

std::string encode_motion(const MotionSequence& motion) {
  motion.validate();
  io::ByteWriter w;
  w.bytes(kMotionMagic);
  w.u32(kMotionVersion);
  w.u64(static_cast<std::uint64_t>(motion.length()));
  w.f64(motion.fps);
  for (Index d : {kExpressionDim, kRotationDim, kTranslationDim, kIdentityDim}) w.u32(static_cast<std::uint32_t>(d));
  w.f64s({motion.identity.data(), static_cast<std::size_t>(motion.identity.size())});
  const Tensor p = motion.parameters();
  w.f64s({p.data(), static_cast<std::size_t>(p.size())});
  return w.take();
}

MotionSequence decode_motion(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kMotionMagic);
  if (r.u32() != kMotionVersion) throw io::FormatError("unsupported motion file version");
  const auto len = static_cast<Index>(r.u64());
  const double fps = r.f64();
  for (Index d : {kExpressionDim, kRotationDim, kTranslationDim, kIdentityDim}) {
    if (r.u32() != static_cast<std::uint32_t>(d)) throw io::FormatError("motion file dimension mismatch");
  }
  if (static_cast<std::size_t>(len) * kMotionDim * 8 > r.remaining()) throw io::FormatError("motion file truncated");
  RowVector identity(kIdentityDim);
  r.f64s({identity.data(), static_cast<std::size_t>(identity.size())});
  Tensor p(len, kMotionDim);
  r.f64s({p.data(), static_cast<std::size_t>(p.size())});
  MotionSequence m = MotionSequence::from_parameters(p, fps, std::move(identity));
  m.validate();
  return m;
}

void save_motion(const std::filesystem::path& path, const MotionSequence& motion) {
  io::write_file(path, encode_motion(motion));
}

MotionSequence load_motion(const std::filesystem::path& path) { return decode_motion(io::read_file(path)); }

}  // namespace dyad::face
