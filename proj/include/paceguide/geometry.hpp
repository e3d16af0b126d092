#pragma once

#include "paceguide/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace paceguide {

// ---------------------------------------------------------------------------
// Rotations (continuous 6D representation)

/// Gram-Schmidt decode of the 6D rotation representation: the two halves are
/// orthonormalized into the first two columns, the third is their cross
/// product. Throws NumericError on (near-)parallel halves.
Mat3 rot6d_to_matrix(const Eigen::Matrix<Real, 6, 1>& r6);
Eigen::Matrix<Real, 6, 1> matrix_to_rot6d(const Mat3& R);

/// dR/dr6 as nine 6-vectors: jac[3*i + j] = d R(i,j) / d r6.
std::array<Eigen::Matrix<Real, 6, 1>, 9> rot6d_jacobian(const Eigen::Matrix<Real, 6, 1>& r6);

/// Applies the chain rule through rot6d_to_matrix: given dL/dR, returns
/// dL/dr6.
Eigen::Matrix<Real, 6, 1> rot6d_backward(const Eigen::Matrix<Real, 6, 1>& r6, const Mat3& dR);

// ---------------------------------------------------------------------------
// Point sets

/// Minimum Euclidean distance from p to the rows of points (M x 3), M >= 1.
Real point_to_set_distance(const Vec3& p, const Mat& points);
/// Same, also reporting the index of the nearest point.
Real point_to_set_distance(const Vec3& p, const Mat& points, int* nearest);

/// R * p + t applied to every row of points.
Mat apply_pose(const Mat& points, const Vec3& trans, const Eigen::Matrix<Real, 6, 1>& rot6d);
Mat apply_pose(const Mat& points, const Vec3& trans, const Mat3& R);

// ---------------------------------------------------------------------------
// Basis point set encoding

inline constexpr uint64_t kBpsBasisSeed = 0x42507342617369ull;  // frozen repo-wide
inline constexpr int kBpsPointsPaper = 1024;

/// `count` points drawn uniformly in the unit ball from the frozen seed. A
/// smaller count is a prefix of a larger one.
Mat bps_basis(int count, uint64_t seed = kBpsBasisSeed);

struct BpsEncoding {
  Vec raw;     // nearest-point distance per basis point, original cloud
  Vec norm;    // same, after rescaling about the centroid to max radius 0.95
  Real scale;  // largest point-to-centroid radius of the original cloud
};

/// bps[i] = min over the cloud of |basis_i - p|. The normalized variant
/// rescales the cloud about its centroid so the maximal point-to-centroid
/// distance is exactly 0.95.
BpsEncoding bps_encode(const Mat& points, const Mat& basis);

// ---------------------------------------------------------------------------
// Object geometry

struct ObjectGeometry {
  std::string name;
  std::string category;
  Mat points;  // N x 3, canonical frame
  BpsEncoding bps;

  int size() const { return static_cast<int>(points.rows()); }
  Vec3 centroid() const { return points.colwise().mean().transpose(); }
  /// Feature vector fed to the denoiser's geometry MLP: raw ++ norm ++ scale.
  Vec feature() const;
};

/// Unit outward normals estimated per cloud point: PCA plane fit over the k
/// nearest neighbours, oriented away from the centroid.
Mat estimate_normals(const Mat& points, int k = 8);

// ---------------------------------------------------------------------------
// Parametric shape families (desk-scale object library)

enum class ShapeFamily { Box, Cylinder, Ellipsoid };
const char* shape_family_name(ShapeFamily f);

/// Deterministic surface sampling of a parametric shape, centred at the
/// origin. dims: box = (lx, ly, lz) full extents; cylinder = (r, r, h);
/// ellipsoid = (a, b, c) semi-axes.
Mat sample_shape_surface(ShapeFamily family, const Vec3& dims, int n, uint64_t seed);

struct ObjectLibrary {
  std::vector<ObjectGeometry> objects;

  const ObjectGeometry& by_id(int id) const;
  std::optional<int> find(const std::string& name) const;
  std::vector<int> in_category(const std::string& category) const;
  std::vector<std::string> categories() const;
};

void save_object_library(const ObjectLibrary& lib, const std::string& path);
ObjectLibrary load_object_library(const std::string& path, int bps_count);

// ---------------------------------------------------------------------------
// Toy body SDF: one sphere per skeleton joint.

struct ToyBodySDF {
  SkeletonConfig skel;

  Real radius(int joint) const {
    return joint < skel.body_joints ? skel.body_radius : skel.hand_radius;
  }

  /// min over joints of (|q - c_j| - r_j); negative inside. `joints` is the
  /// (J_b + J_h) x 3 stack of joint centres for one frame.
  Real value(const Vec3& q, const Mat& joints) const;
  Real value(const Vec3& q, const Mat& joints, int* nearest) const;
  /// Gradient w.r.t. the query point (unit vector away from the nearest
  /// centre; subgradient at ties).
  Vec3 gradient(const Vec3& q, const Mat& joints) const;
};

/// Joint centres for one frame as a (J_b + J_h) x 3 matrix.
Mat frame_joints(const HOISequence& seq, int t, const SkeletonConfig& skel);

}  // namespace paceguide
