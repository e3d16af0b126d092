#pragma once

#include "paceguide/common.hpp"

#include <array>
#include <string>

namespace paceguide {

enum class Modality : int { Body = 0, Hand = 1, Object = 2 };
inline constexpr int kNumModalities = 3;
inline constexpr std::array<Modality, 3> kAllModalities = {Modality::Body, Modality::Hand,
                                                           Modality::Object};

const char* modality_name(Modality m);

/// Skeleton dimensions for one dataset. The paper-scale skeleton has 22 body
/// and 30 hand joints; the desk-scale default is much smaller and the whole
/// pipeline is dimension-agnostic.
struct SkeletonConfig {
  int body_joints = 8;
  int hand_joints = 4;
  // Indices into the body-joint list used for foot-contact supervision and
  // the foot-skating metrics. Four labels (ankle/toe per side); at desk
  // scale the two lowest chain joints are duplicated.
  std::array<int, 4> foot_label_joints = {3, 4, 3, 4};
  std::array<int, 2> foot_joints = {3, 4};
  // Per-joint sphere radii for the toy body SDF. Hand joints are thin so a
  // grasp at a few millimetres does not read as penetration.
  Real body_radius = 0.05;
  Real hand_radius = 0.008;

  int total_joints() const { return body_joints + hand_joints; }
  int body_width() const { return body_joints * 3; }
  int hand_width() const { return hand_joints * 3 + hand_joints; }
  static constexpr int object_width() { return 3 + 6; }
  int width(Modality m) const;

  void validate() const;
};

/// One human-object interaction clip. Joint positions are metres; hand
/// angles radians; object rotation uses the continuous 6D representation.
struct HOISequence {
  Mat body_joints;  // T x (J_b*3)
  Mat hand_joints;  // T x (J_h*3)
  Mat hand_angles;  // T x J_h
  Mat obj_trans;    // T x 3
  Mat obj_rot6d;    // T x 6
  Real fps = 30.0;

  int frames() const { return static_cast<int>(body_joints.rows()); }

  Vec3 body_joint(int t, int j) const { return body_joints.block<1, 3>(t, 3 * j).transpose(); }
  Vec3 hand_joint(int t, int j) const { return hand_joints.block<1, 3>(t, 3 * j).transpose(); }
  void set_body_joint(int t, int j, const Vec3& p) { body_joints.block<1, 3>(t, 3 * j) = p.transpose(); }
  void set_hand_joint(int t, int j, const Vec3& p) { hand_joints.block<1, 3>(t, 3 * j) = p.transpose(); }
  /// Position of joint index j in the combined [body ++ hand] ordering.
  Vec3 joint(int t, int j, const SkeletonConfig& skel) const;

  /// Throws ShapeError unless shapes match `skel`, T >= 2, all values are
  /// finite and every rot6d entry has linearly independent halves.
  void validate(const SkeletonConfig& skel) const;

  bool operator==(const HOISequence& o) const;
};

/// Disjoint cover of {body, hand, object} by two non-empty groups.
struct ModalityPartition {
  std::array<bool, 3> m1 = {false, false, false};

  bool in_m1(Modality m) const { return m1[static_cast<int>(m)]; }
  bool in_m2(Modality m) const { return !in_m1(m); }

  static ModalityPartition of_m1(std::initializer_list<Modality> ms);
  /// Parses e.g. "bh|o" or "o|bh". Each of b,h,o must appear exactly once.
  static ModalityPartition parse(const std::string& s);
  std::string str() const;
};

/// Throws ConfigError unless (m1, m2) is one of the 6 valid non-trivial
/// ordered partitions (given as membership sets; overlap and non-cover are
/// both rejected).
void validate_partition(const std::array<bool, 3>& m1, const std::array<bool, 3>& m2);
void validate_partition(const ModalityPartition& p);

/// Per-frame (body, hand, object) token triples with the raw channel widths
/// fixed by the skeleton; pack/unpack are exact inverses.
struct TokenGrid {
  Mat body;  // T x body_width
  Mat hand;  // T x hand_width
  Mat obj;   // T x 9

  int frames() const { return static_cast<int>(body.rows()); }
  Mat& channel(Modality m);
  const Mat& channel(Modality m) const;

  static TokenGrid zeros(int T, const SkeletonConfig& skel);
  static TokenGrid gaussian(int T, const SkeletonConfig& skel, Rng& rng);

  TokenGrid like_shape() const { return {Mat::Zero(body.rows(), body.cols()), Mat::Zero(hand.rows(), hand.cols()), Mat::Zero(obj.rows(), obj.cols())}; }
  bool same_shape(const TokenGrid& o) const;
  bool all_finite() const;
  /// Exact elementwise equality.
  bool operator==(const TokenGrid& o) const;

  TokenGrid operator+(const TokenGrid& o) const;
  TokenGrid operator-(const TokenGrid& o) const;
  TokenGrid operator*(Real s) const;
  Real dot(const TokenGrid& o) const;
  Real squared_norm() const { return dot(*this); }
  Eigen::Index total_size() const { return body.size() + hand.size() + obj.size(); }
  Vec flatten() const;
};

/// Deterministic flattening of a sequence into the token grid: body channel
/// is the flattened body joints, hand channel concatenates hand joint
/// positions and angles, object channel concatenates translation and rot6d.
TokenGrid pack(const HOISequence& seq, const SkeletonConfig& skel);

/// Exact inverse of pack. Width mismatches throw ShapeError.
HOISequence unpack(const TokenGrid& grid, const SkeletonConfig& skel, Real fps = 30.0);

}  // namespace paceguide
