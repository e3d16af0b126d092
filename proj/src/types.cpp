#include "paceguide/types.hpp"

#include <cmath>
#include <sstream>

namespace paceguide {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Body: return "body";
    case Modality::Hand: return "hand";
    case Modality::Object: return "object";
  }
  return "?";
}

int SkeletonConfig::width(Modality m) const {
  switch (m) {
    case Modality::Body: return body_width();
    case Modality::Hand: return hand_width();
    case Modality::Object: return object_width();
  }
  return 0;
}

void SkeletonConfig::validate() const {
  if (body_joints < 1 || hand_joints < 1)
    throw ConfigError("skeleton: joint counts must be positive");
  for (int j : foot_label_joints)
    if (j < 0 || j >= body_joints) throw ConfigError("skeleton: foot label joint out of range");
  for (int j : foot_joints)
    if (j < 0 || j >= body_joints) throw ConfigError("skeleton: foot joint out of range");
  if (body_radius <= 0 || hand_radius <= 0) throw ConfigError("skeleton: radii must be positive");
}

Vec3 HOISequence::joint(int t, int j, const SkeletonConfig& skel) const {
  return j < skel.body_joints ? body_joint(t, j) : hand_joint(t, j - skel.body_joints);
}

static void check_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "sequence field " << name << " has shape " << m.rows() << "x" << m.cols()
       << ", expected " << rows << "x" << cols;
    throw ShapeError(os.str());
  }
}

void HOISequence::validate(const SkeletonConfig& skel) const {
  const Eigen::Index T = body_joints.rows();
  if (T < 2) throw ShapeError("sequence must have at least 2 frames");
  check_shape(body_joints, T, skel.body_joints * 3, "body_joints");
  check_shape(hand_joints, T, skel.hand_joints * 3, "hand_joints");
  check_shape(hand_angles, T, skel.hand_joints, "hand_angles");
  check_shape(obj_trans, T, 3, "obj_trans");
  check_shape(obj_rot6d, T, 6, "obj_rot6d");
  if (!(body_joints.allFinite() && hand_joints.allFinite() && hand_angles.allFinite() &&
        obj_trans.allFinite() && obj_rot6d.allFinite()))
    throw ShapeError("sequence contains non-finite values");
  if (!(fps > 0) || !std::isfinite(fps)) throw ShapeError("fps must be positive and finite");
  for (Eigen::Index t = 0; t < T; ++t) {
    const Vec3 a = obj_rot6d.block<1, 3>(t, 0).transpose();
    const Vec3 b = obj_rot6d.block<1, 3>(t, 3).transpose();
    // Linear independence of the two halves; cross product of the
    // normalized vectors stays away from zero.
    const Real an = a.norm(), bn = b.norm();
    if (an < 1e-12 || bn < 1e-12 || (a / an).cross(b / bn).norm() < 1e-9) {
      std::ostringstream os;
      os << "obj_rot6d row " << t << " is degenerate";
      throw ShapeError(os.str());
    }
  }
}

bool HOISequence::operator==(const HOISequence& o) const {
  return fps == o.fps && body_joints == o.body_joints && hand_joints == o.hand_joints &&
         hand_angles == o.hand_angles && obj_trans == o.obj_trans && obj_rot6d == o.obj_rot6d;
}

ModalityPartition ModalityPartition::of_m1(std::initializer_list<Modality> ms) {
  ModalityPartition p;
  for (Modality m : ms) p.m1[static_cast<int>(m)] = true;
  validate_partition(p);
  return p;
}

ModalityPartition ModalityPartition::parse(const std::string& s) {
  const auto bar = s.find('|');
  if (bar == std::string::npos) throw ConfigError("partition must look like \"bh|o\"");
  std::array<int, 3> seen = {0, 0, 0};
  ModalityPartition p;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i == bar) continue;
    int m;
    switch (s[i]) {
      case 'b': m = 0; break;
      case 'h': m = 1; break;
      case 'o': m = 2; break;
      default: throw ConfigError(std::string("partition: unknown modality '") + s[i] + "'");
    }
    seen[m]++;
    if (i < bar) p.m1[m] = true;
  }
  for (int c : seen)
    if (c != 1) throw ConfigError("partition must mention each of b,h,o exactly once");
  validate_partition(p);
  return p;
}

std::string ModalityPartition::str() const {
  static const char sym[3] = {'b', 'h', 'o'};
  std::string a, b;
  for (int m = 0; m < 3; ++m) (m1[m] ? a : b) += sym[m];
  return a + "|" + b;
}

void validate_partition(const std::array<bool, 3>& m1, const std::array<bool, 3>& m2) {
  int n1 = 0, n2 = 0;
  for (int m = 0; m < 3; ++m) {
    if (m1[m] && m2[m]) throw ConfigError("partition groups overlap");
    if (!m1[m] && !m2[m]) throw ConfigError("partition groups do not cover all modalities");
    n1 += m1[m];
    n2 += m2[m];
  }
  if (n1 == 0 || n2 == 0) throw ConfigError("partition groups must both be non-empty");
}

void validate_partition(const ModalityPartition& p) {
  std::array<bool, 3> m2;
  for (int m = 0; m < 3; ++m) m2[m] = !p.m1[m];
  validate_partition(p.m1, m2);
}

Mat& TokenGrid::channel(Modality m) {
  switch (m) {
    case Modality::Body: return body;
    case Modality::Hand: return hand;
    default: return obj;
  }
}

const Mat& TokenGrid::channel(Modality m) const {
  return const_cast<TokenGrid*>(this)->channel(m);
}

TokenGrid TokenGrid::zeros(int T, const SkeletonConfig& skel) {
  return {Mat::Zero(T, skel.body_width()), Mat::Zero(T, skel.hand_width()),
          Mat::Zero(T, SkeletonConfig::object_width())};
}

TokenGrid TokenGrid::gaussian(int T, const SkeletonConfig& skel, Rng& rng) {
  return {rng.normal_mat(T, skel.body_width()), rng.normal_mat(T, skel.hand_width()),
          rng.normal_mat(T, SkeletonConfig::object_width())};
}

bool TokenGrid::same_shape(const TokenGrid& o) const {
  return body.rows() == o.body.rows() && body.cols() == o.body.cols() &&
         hand.cols() == o.hand.cols() && obj.cols() == o.obj.cols();
}

bool TokenGrid::all_finite() const {
  return body.allFinite() && hand.allFinite() && obj.allFinite();
}

bool TokenGrid::operator==(const TokenGrid& o) const {
  return same_shape(o) && body == o.body && hand == o.hand && obj == o.obj;
}

TokenGrid TokenGrid::operator+(const TokenGrid& o) const {
  return {body + o.body, hand + o.hand, obj + o.obj};
}
TokenGrid TokenGrid::operator-(const TokenGrid& o) const {
  return {body - o.body, hand - o.hand, obj - o.obj};
}
TokenGrid TokenGrid::operator*(Real s) const { return {body * s, hand * s, obj * s}; }

Real TokenGrid::dot(const TokenGrid& o) const {
  return body.cwiseProduct(o.body).sum() + hand.cwiseProduct(o.hand).sum() +
         obj.cwiseProduct(o.obj).sum();
}

Vec TokenGrid::flatten() const {
  Vec v(total_size());
  Eigen::Index off = 0;
  for (const Mat* m : {&body, &hand, &obj}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r)
      for (Eigen::Index c = 0; c < m->cols(); ++c) v(off++) = (*m)(r, c);
  }
  return v;
}

TokenGrid pack(const HOISequence& seq, const SkeletonConfig& skel) {
  seq.validate(skel);
  TokenGrid g;
  g.body = seq.body_joints;
  g.hand.resize(seq.frames(), skel.hand_width());
  g.hand.leftCols(skel.hand_joints * 3) = seq.hand_joints;
  g.hand.rightCols(skel.hand_joints) = seq.hand_angles;
  g.obj.resize(seq.frames(), SkeletonConfig::object_width());
  g.obj.leftCols(3) = seq.obj_trans;
  g.obj.rightCols(6) = seq.obj_rot6d;
  return g;
}

HOISequence unpack(const TokenGrid& grid, const SkeletonConfig& skel, Real fps) {
  const Eigen::Index T = grid.body.rows();
  if (grid.hand.rows() != T || grid.obj.rows() != T)
    throw ShapeError("token grid channels disagree on frame count");
  if (grid.body.cols() != skel.body_width() || grid.hand.cols() != skel.hand_width() ||
      grid.obj.cols() != SkeletonConfig::object_width()) {
    std::ostringstream os;
    os << "token grid widths (" << grid.body.cols() << "," << grid.hand.cols() << ","
       << grid.obj.cols() << ") do not match skeleton (" << skel.body_width() << ","
       << skel.hand_width() << "," << SkeletonConfig::object_width() << ")";
    throw ShapeError(os.str());
  }
  HOISequence seq;
  seq.fps = fps;
  seq.body_joints = grid.body;
  seq.hand_joints = grid.hand.leftCols(skel.hand_joints * 3);
  seq.hand_angles = grid.hand.rightCols(skel.hand_joints);
  seq.obj_trans = grid.obj.leftCols(3);
  seq.obj_rot6d = grid.obj.rightCols(6);
  return seq;
}

}  // namespace paceguide
