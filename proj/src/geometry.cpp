#include "paceguide/geometry.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace paceguide {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Rotations

Mat3 rot6d_to_matrix(const Eigen::Matrix<Real, 6, 1>& r6) {
  const Vec3 a = r6.head<3>();
  const Vec3 b = r6.tail<3>();
  const Real an = a.norm();
  if (an < 1e-12) throw NumericError("rot6d: first half is (near) zero");
  const Vec3 u = a / an;
  const Vec3 w = b - u.dot(b) * u;
  const Real wn = w.norm();
  if (wn < 1e-9 * std::max(Real(1), b.norm()))
    throw NumericError("rot6d: halves are (near) parallel");
  const Vec3 v = w / wn;
  Mat3 R;
  R.col(0) = u;
  R.col(1) = v;
  R.col(2) = u.cross(v);
  return R;
}

Eigen::Matrix<Real, 6, 1> matrix_to_rot6d(const Mat3& R) {
  Eigen::Matrix<Real, 6, 1> r6;
  r6.head<3>() = R.col(0);
  r6.tail<3>() = R.col(1);
  return r6;
}

std::array<Eigen::Matrix<Real, 6, 1>, 9> rot6d_jacobian(const Eigen::Matrix<Real, 6, 1>& r6) {
  const Vec3 a = r6.head<3>();
  const Vec3 b = r6.tail<3>();
  const Real an = a.norm();
  const Vec3 u = a / an;
  const Vec3 w = b - u.dot(b) * u;
  const Real wn = w.norm();
  const Vec3 v = w / wn;

  const Mat3 du_da = (Mat3::Identity() - u * u.transpose()) / an;
  const Mat3 dv_dw = (Mat3::Identity() - v * v.transpose()) / wn;
  const Mat3 dw_du = -(u.dot(b) * Mat3::Identity() + u * b.transpose());
  const Mat3 dw_db = Mat3::Identity() - u * u.transpose();
  const Mat3 dv_da = dv_dw * dw_du * du_da;
  const Mat3 dv_db = dv_dw * dw_db;

  auto cross_mat = [](const Vec3& x) {
    Mat3 m;
    m << 0, -x.z(), x.y(), x.z(), 0, -x.x(), -x.y(), x.x(), 0;
    return m;
  };
  // n = u x v  =>  dn = -[v]x du + [u]x dv
  const Mat3 dn_da = -cross_mat(v) * du_da + cross_mat(u) * dv_da;
  const Mat3 dn_db = cross_mat(u) * dv_db;

  std::array<Eigen::Matrix<Real, 6, 1>, 9> jac;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) {
      const Mat3 *col_da, *col_db;
      if (c == 0) {
        col_da = &du_da;
        col_db = nullptr;
      } else if (c == 1) {
        col_da = &dv_da;
        col_db = &dv_db;
      } else {
        col_da = &dn_da;
        col_db = &dn_db;
      }
      Eigen::Matrix<Real, 6, 1>& g = jac[3 * i + c];
      g.head<3>() = col_da->row(i).transpose();
      g.tail<3>() = col_db ? Vec3(col_db->row(i).transpose()) : Vec3::Zero();
    }
  }
  return jac;
}

Eigen::Matrix<Real, 6, 1> rot6d_backward(const Eigen::Matrix<Real, 6, 1>& r6, const Mat3& dR) {
  const auto jac = rot6d_jacobian(r6);
  Eigen::Matrix<Real, 6, 1> g = Eigen::Matrix<Real, 6, 1>::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g += dR(i, j) * jac[3 * i + j];
  return g;
}

// ---------------------------------------------------------------------------
// Point sets

Real point_to_set_distance(const Vec3& p, const Mat& points, int* nearest) {
  if (points.rows() < 1) throw ShapeError("point_to_set_distance: empty point set");
  if (points.cols() != 3) throw ShapeError("point_to_set_distance: points must be Nx3");
  Real best = std::numeric_limits<Real>::infinity();
  int best_i = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Real dx = points(i, 0) - p.x();
    const Real dy = points(i, 1) - p.y();
    const Real dz = points(i, 2) - p.z();
    const Real d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best) {
      best = d2;
      best_i = static_cast<int>(i);
    }
  }
  if (nearest) *nearest = best_i;
  return std::sqrt(best);
}

Real point_to_set_distance(const Vec3& p, const Mat& points) {
  return point_to_set_distance(p, points, nullptr);
}

Mat apply_pose(const Mat& points, const Vec3& trans, const Mat3& R) {
  if (points.cols() != 3) throw ShapeError("apply_pose: points must be Nx3");
  Mat out = points * R.transpose();
  out.rowwise() += trans.transpose();
  return out;
}

Mat apply_pose(const Mat& points, const Vec3& trans, const Eigen::Matrix<Real, 6, 1>& rot6d) {
  return apply_pose(points, trans, rot6d_to_matrix(rot6d));
}

// ---------------------------------------------------------------------------
// BPS

Mat bps_basis(int count, uint64_t seed) {
  if (count < 1) throw ConfigError("bps basis count must be positive");
  Rng rng(seed);
  Mat basis(count, 3);
  int filled = 0;
  while (filled < count) {
    const Real x = rng.uniform(-1.0, 1.0);
    const Real y = rng.uniform(-1.0, 1.0);
    const Real z = rng.uniform(-1.0, 1.0);
    if (x * x + y * y + z * z <= 1.0) {
      basis(filled, 0) = x;
      basis(filled, 1) = y;
      basis(filled, 2) = z;
      ++filled;
    }
  }
  return basis;
}

static Vec bps_distances(const Mat& points, const Mat& basis) {
  Vec out(basis.rows());
  for (Eigen::Index i = 0; i < basis.rows(); ++i)
    out(i) = point_to_set_distance(basis.row(i).transpose(), points);
  return out;
}

BpsEncoding bps_encode(const Mat& points, const Mat& basis) {
  if (points.rows() < 1) throw ShapeError("bps_encode: empty cloud");
  if (points.cols() != 3) throw ShapeError("bps_encode: points must be Nx3");
  BpsEncoding enc;
  enc.raw = bps_distances(points, basis);
  const Vec3 c = points.colwise().mean().transpose();
  Real max_r = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    max_r = std::max(max_r, (points.row(i).transpose() - c).norm());
  enc.scale = max_r;
  if (max_r <= 0) {
    // Single point (or fully degenerate) cloud: nothing to rescale.
    enc.norm = enc.raw;
    return enc;
  }
  Mat rescaled = points;
  const Real f = 0.95 / max_r;
  rescaled.rowwise() -= c.transpose();
  rescaled *= f;
  rescaled.rowwise() += c.transpose();
  enc.norm = bps_distances(rescaled, basis);
  return enc;
}

Vec ObjectGeometry::feature() const {
  Vec f(bps.raw.size() + bps.norm.size() + 1);
  f << bps.raw, bps.norm, bps.scale;
  return f;
}

// ---------------------------------------------------------------------------
// Normal estimation

Mat estimate_normals(const Mat& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (n < 3) throw ShapeError("estimate_normals: need at least 3 points");
  k = std::min(k, n - 1);
  const Vec3 centroid = points.colwise().mean().transpose();
  Mat normals(n, 3);
  std::vector<std::pair<Real, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 p = points.row(i).transpose();
    for (int j = 0; j < n; ++j)
      dist[j] = {(points.row(j).transpose() - p).squaredNorm(), j};
    std::partial_sort(dist.begin(), dist.begin() + k + 1, dist.end());
    Vec3 mean = Vec3::Zero();
    for (int j = 0; j <= k; ++j) mean += points.row(dist[j].second).transpose();
    mean /= Real(k + 1);
    Mat3 cov = Mat3::Zero();
    for (int j = 0; j <= k; ++j) {
      const Vec3 d = points.row(dist[j].second).transpose() - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 normal = eig.eigenvectors().col(0);  // smallest eigenvalue
    if (normal.dot(p - centroid) < 0) normal = -normal;
    normals.row(i) = normal.transpose();
  }
  return normals;
}

// ---------------------------------------------------------------------------
// Parametric shapes

const char* shape_family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Box: return "box";
    case ShapeFamily::Cylinder: return "cylinder";
    case ShapeFamily::Ellipsoid: return "ellipsoid";
  }
  return "?";
}

Mat sample_shape_surface(ShapeFamily family, const Vec3& dims, int n, uint64_t seed) {
  if (n < 1) throw ConfigError("shape sampling needs n >= 1");
  Rng rng(seed);
  Mat pts(n, 3);
  switch (family) {
    case ShapeFamily::Box: {
      const Vec3 h = dims / 2;
      // Area-weighted face selection keeps the sampling roughly uniform.
      const Real ax = dims.y() * dims.z(), ay = dims.x() * dims.z(), az = dims.x() * dims.y();
      const Real total = 2 * (ax + ay + az);
      for (int i = 0; i < n; ++i) {
        Real r = rng.uniform() * total;
        int axis;
        if (r < 2 * ax)
          axis = 0;
        else if (r < 2 * (ax + ay))
          axis = 1;
        else
          axis = 2;
        const Real side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        Vec3 p;
        for (int d = 0; d < 3; ++d) p(d) = rng.uniform(-h(d), h(d));
        p(axis) = side * h(axis);
        pts.row(i) = p.transpose();
      }
      break;
    }
    case ShapeFamily::Cylinder: {
      const Real radius = dims.x();
      const Real half_h = dims.z() / 2;
      const Real side_area = 2 * M_PI * radius * dims.z();
      const Real cap_area = M_PI * radius * radius;
      const Real total = side_area + 2 * cap_area;
      for (int i = 0; i < n; ++i) {
        const Real r = rng.uniform() * total;
        const Real theta = rng.uniform(0.0, 2 * M_PI);
        Vec3 p;
        if (r < side_area) {
          p << radius * std::cos(theta), radius * std::sin(theta), rng.uniform(-half_h, half_h);
        } else {
          const Real rr = radius * std::sqrt(rng.uniform());
          const Real z = (r < side_area + cap_area) ? half_h : -half_h;
          p << rr * std::cos(theta), rr * std::sin(theta), z;
        }
        pts.row(i) = p.transpose();
      }
      break;
    }
    case ShapeFamily::Ellipsoid: {
      for (int i = 0; i < n; ++i) {
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        d.normalize();
        pts.row(i) = d.cwiseProduct(dims).transpose();
      }
      break;
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Object library

const ObjectGeometry& ObjectLibrary::by_id(int id) const {
  if (id < 0 || id >= static_cast<int>(objects.size()))
    throw RangeError("object id out of range: " + std::to_string(id));
  return objects[id];
}

std::optional<int> ObjectLibrary::find(const std::string& name) const {
  for (size_t i = 0; i < objects.size(); ++i)
    if (objects[i].name == name) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<int> ObjectLibrary::in_category(const std::string& category) const {
  std::vector<int> ids;
  for (size_t i = 0; i < objects.size(); ++i)
    if (objects[i].category == category) ids.push_back(static_cast<int>(i));
  return ids;
}

std::vector<std::string> ObjectLibrary::categories() const {
  std::vector<std::string> out;
  for (const auto& o : objects)
    if (std::find(out.begin(), out.end(), o.category) == out.end()) out.push_back(o.category);
  return out;
}

void save_object_library(const ObjectLibrary& lib, const std::string& path) {
  json root;
  root["format_version"] = 1;
  root["bps_basis_seed"] = kBpsBasisSeed;
  json objs = json::array();
  for (const auto& o : lib.objects) {
    json jo;
    jo["name"] = o.name;
    jo["category"] = o.category;
    std::vector<Real> flat(o.points.data(), o.points.data() + o.points.size());
    jo["points"] = flat;
    objs.push_back(std::move(jo));
  }
  root["objects"] = std::move(objs);
  std::ofstream f(path);
  if (!f) throw IoError("cannot write object library: " + path);
  f << root.dump(2) << "\n";
}

ObjectLibrary load_object_library(const std::string& path, int bps_count) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read object library: " + path);
  json root = json::parse(f);
  ObjectLibrary lib;
  const Mat basis = bps_basis(bps_count);
  for (const auto& jo : root.at("objects")) {
    ObjectGeometry g;
    g.name = jo.at("name").get<std::string>();
    g.category = jo.at("category").get<std::string>();
    const auto flat = jo.at("points").get<std::vector<Real>>();
    if (flat.size() % 3 != 0) throw IoError("object library: point array not divisible by 3");
    g.points = Eigen::Map<const Mat>(flat.data(), flat.size() / 3, 3);
    g.bps = bps_encode(g.points, basis);
    lib.objects.push_back(std::move(g));
  }
  return lib;
}

// ---------------------------------------------------------------------------
// Toy body SDF

Real ToyBodySDF::value(const Vec3& q, const Mat& joints, int* nearest) const {
  const int n = static_cast<int>(joints.rows());
  if (n != skel.total_joints()) throw ShapeError("body sdf: joint stack has wrong size");
  Real best = std::numeric_limits<Real>::infinity();
  int best_j = 0;
  for (int j = 0; j < n; ++j) {
    const Real d = (q - Vec3(joints.row(j).transpose())).norm() - radius(j);
    if (d < best) {
      best = d;
      best_j = j;
    }
  }
  if (nearest) *nearest = best_j;
  return best;
}

Real ToyBodySDF::value(const Vec3& q, const Mat& joints) const { return value(q, joints, nullptr); }

Vec3 ToyBodySDF::gradient(const Vec3& q, const Mat& joints) const {
  int j;
  value(q, joints, &j);
  const Vec3 d = q - Vec3(joints.row(j).transpose());
  const Real n = d.norm();
  if (n < 1e-12) return Vec3::UnitZ();  // at the centre the direction is arbitrary
  return d / n;
}

Mat frame_joints(const HOISequence& seq, int t, const SkeletonConfig& skel) {
  Mat joints(skel.total_joints(), 3);
  for (int j = 0; j < skel.body_joints; ++j) joints.row(j) = seq.body_joints.block<1, 3>(t, 3 * j);
  for (int j = 0; j < skel.hand_joints; ++j)
    joints.row(skel.body_joints + j) = seq.hand_joints.block<1, 3>(t, 3 * j);
  return joints;
}

}  // namespace paceguide
