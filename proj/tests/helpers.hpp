#pragma once

#include "paceguide/geometry.hpp"
#include "paceguide/types.hpp"

namespace paceguide::testing {

/// Random but valid sequence: finite values, well-conditioned rot6d rows.
inline HOISequence random_sequence(Rng& rng, const SkeletonConfig& skel, int T) {
  HOISequence s;
  s.fps = 30.0;
  s.body_joints = rng.normal_mat(T, skel.body_joints * 3);
  s.hand_joints = rng.normal_mat(T, skel.hand_joints * 3);
  s.hand_angles = rng.normal_mat(T, skel.hand_joints);
  s.obj_trans = rng.normal_mat(T, 3);
  s.obj_rot6d.resize(T, 6);
  for (int t = 0; t < T; ++t) {
    Mat3 R = rot6d_to_matrix((Eigen::Matrix<Real, 6, 1>() << 1 + rng.normal(), rng.normal(),
                              rng.normal(), rng.normal(), 1 + rng.normal(), rng.normal())
                                 .finished());
    s.obj_rot6d.row(t) = matrix_to_rot6d(R).transpose();
  }
  return s;
}

inline Mat3 random_rotation(Rng& rng) {
  Eigen::Matrix<Real, 6, 1> r6;
  do {
    for (int i = 0; i < 6; ++i) r6(i) = rng.normal();
  } while (r6.head<3>().norm() < 0.3 ||
           (r6.head<3>().normalized().cross(r6.tail<3>().normalized())).norm() < 0.3);
  return rot6d_to_matrix(r6);
}

}  // namespace paceguide::testing
