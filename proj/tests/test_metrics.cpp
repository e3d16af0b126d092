#include "doctest.h"
#include "helpers.hpp"

#include "paceguide/metrics.hpp"

#include <cmath>

using namespace paceguide;
using paceguide::testing::random_rotation;
using paceguide::testing::random_sequence;

namespace {

SkeletonConfig tiny_skel(int jb = 2, int jh = 2) {
  SkeletonConfig s;
  s.body_joints = jb;
  s.hand_joints = jh;
  s.foot_label_joints = {0, 1, 0, 1};
  s.foot_joints = {0, 1};
  return s;
}

ObjectGeometry make_geom(const Mat& points) {
  ObjectGeometry g;
  g.name = "test";
  g.category = "test";
  g.points = points;
  g.bps = bps_encode(points, bps_basis(4));
  return g;
}

HOISequence identity_pose_seq(Rng& rng, const SkeletonConfig& skel, int T) {
  HOISequence s = random_sequence(rng, skel, T);
  s.obj_trans.setZero();
  for (int t = 0; t < T; ++t) s.obj_rot6d.row(t) << 1, 0, 0, 0, 1, 0;
  return s;
}

// Straightforward double-loop reimplementations used as oracles.

Real contact_oracle(const HOISequence& seq, const ObjectGeometry& geom,
                    const SkeletonConfig& skel, Real gamma) {
  int hits = 0, total = 0;
  for (int t = 0; t < seq.frames(); ++t) {
    Mat3 R = rot6d_to_matrix(seq.obj_rot6d.row(t).transpose());
    for (int j = 0; j < skel.total_joints(); ++j) {
      Real best = 1e30;
      for (int i = 0; i < geom.points.rows(); ++i) {
        Vec3 v = R * Vec3(geom.points.row(i).transpose()) + Vec3(seq.obj_trans.row(t).transpose());
        best = std::min(best, (v - seq.joint(t, j, skel)).norm());
      }
      ++total;
      if (best < gamma) ++hits;
    }
  }
  return Real(hits) / total;
}

std::pair<Real, Real> penetration_oracle(const HOISequence& seq, const ObjectGeometry& geom,
                                         const SkeletonConfig& skel) {
  Real depth = 0, frac = 0;
  for (int t = 0; t < seq.frames(); ++t) {
    Mat3 R = rot6d_to_matrix(seq.obj_rot6d.row(t).transpose());
    Real d_t = 0;
    int inside = 0;
    for (int i = 0; i < geom.points.rows(); ++i) {
      Vec3 v = R * Vec3(geom.points.row(i).transpose()) + Vec3(seq.obj_trans.row(t).transpose());
      Real sdf = 1e30;
      for (int j = 0; j < skel.total_joints(); ++j) {
        const Real r = j < skel.body_joints ? skel.body_radius : skel.hand_radius;
        sdf = std::min(sdf, (v - seq.joint(t, j, skel)).norm() - r);
      }
      if (sdf < 0) {
        d_t += -sdf;
        ++inside;
      }
    }
    depth += d_t;
    frac += Real(inside) / geom.points.rows();
  }
  return {depth / seq.frames(), frac / seq.frames()};
}

Real fsr_oracle(const HOISequence& seq, const SkeletonConfig& skel, Real eps, Real h) {
  int contact = 0, sliding = 0;
  for (int t = 1; t < seq.frames(); ++t)
    for (int f : skel.foot_joints) {
      Vec3 p = seq.body_joint(t, f);
      if (p.z() >= h) continue;
      ++contact;
      Vec3 q = seq.body_joint(t - 1, f);
      if (std::hypot(p.x() - q.x(), p.y() - q.y()) * seq.fps >= eps) ++sliding;
    }
  return contact ? Real(sliding) / contact : 0.0;
}

}  // namespace

TEST_CASE("contact_ratio: far object gives 0; hand-placed distances give 0.5") {
  SkeletonConfig skel = tiny_skel(2, 2);  // J = 4
  Rng rng(1);
  HOISequence s = identity_pose_seq(rng, skel, 2);
  Mat far(1, 3);
  far << 100, 100, 100;
  CHECK(contact_ratio(s, make_geom(far), skel) == 0.0);

  // One vertex at the origin; joints at hand-placed distances.
  Mat v(1, 3);
  v << 0, 0, 0;
  s.set_body_joint(0, 0, Vec3(0.01, 0, 0));
  s.set_body_joint(0, 1, Vec3(0.10, 0, 0));
  s.set_hand_joint(0, 0, Vec3(0.04, 0, 0));
  s.set_hand_joint(0, 1, Vec3(0.20, 0, 0));
  s.set_body_joint(1, 0, Vec3(0.01, 0, 0));
  s.set_body_joint(1, 1, Vec3(0.10, 0, 0));
  s.set_hand_joint(1, 0, Vec3(0.04, 0, 0));
  s.set_hand_joint(1, 1, Vec3(0.20, 0, 0));
  CHECK(contact_ratio(s, make_geom(v), skel) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("contact_ratio equals the brute-force oracle on random scenes") {
  SkeletonConfig skel = tiny_skel();
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    HOISequence s = random_sequence(rng, skel, 3);
    ObjectGeometry g = make_geom(rng.normal_mat(6, 3) * 0.5);
    const Real gamma = rng.uniform(0.3, 1.5);
    CHECK(std::abs(contact_ratio(s, g, skel, gamma) - contact_oracle(s, g, skel, gamma)) < 1e-9);
  }
}

TEST_CASE("contact_ratio is monotone non-decreasing in gamma") {
  SkeletonConfig skel = tiny_skel();
  Rng rng(3);
  HOISequence s = random_sequence(rng, skel, 3);
  ObjectGeometry g = make_geom(rng.normal_mat(8, 3));
  Real prev = 0;
  for (Real gamma : {0.1, 0.3, 0.6, 1.0, 2.0, 4.0}) {
    const Real c = contact_ratio(s, g, skel, gamma);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(prev <= 1.0);
}

TEST_CASE("penetration closed-form sphere case") {
  // One vertex exactly at a body joint centre (radius 0.1), N=4, T=1... the
  // sequence needs two frames, so duplicate the scene in both frames.
  SkeletonConfig skel = tiny_skel(1, 1);
  skel.foot_label_joints = {0, 0, 0, 0};
  skel.foot_joints = {0, 0};
  skel.body_radius = 0.1;
  skel.hand_radius = 0.01;
  Rng rng(4);
  HOISequence s = identity_pose_seq(rng, skel, 2);
  for (int t = 0; t < 2; ++t) {
    s.set_body_joint(t, 0, Vec3(0, 0, 0));
    s.set_hand_joint(t, 0, Vec3(5, 5, 5));
  }
  Mat pts(4, 3);
  pts << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;  // one vertex at the sphere centre
  auto [depth, frac] = penetration(s, make_geom(pts), skel);
  CHECK(depth == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(frac == doctest::Approx(0.25).epsilon(1e-12));

  // fully outside
  HOISequence far = s;
  far.obj_trans.setConstant(50.0);
  auto [d0, f0] = penetration(far, make_geom(pts), skel);
  CHECK(d0 == 0.0);
  CHECK(f0 == 0.0);
}

TEST_CASE("penetration equals the brute-force oracle; depth==0 iff fraction==0") {
  SkeletonConfig skel = tiny_skel();
  skel.body_radius = 0.4;
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    HOISequence s = random_sequence(rng, skel, 3);
    ObjectGeometry g = make_geom(rng.normal_mat(5, 3));
    auto [d, f] = penetration(s, g, skel);
    auto [od, of] = penetration_oracle(s, g, skel);
    CHECK(std::abs(d - od) < 1e-9);
    CHECK(std::abs(f - of) < 1e-9);
    CHECK((d == 0.0) == (f == 0.0));
  }
}

TEST_CASE("foot skating ratio: stationary, sliding and airborne cases") {
  SkeletonConfig skel = tiny_skel();
  Rng rng(6);
  HOISequence s = identity_pose_seq(rng, skel, 3);
  s.fps = 30.0;
  // both feet planted and stationary below the height threshold
  for (int t = 0; t < 3; ++t) {
    s.set_body_joint(t, 0, Vec3(0.1, 0.2, 0.01));
    s.set_body_joint(t, 1, Vec3(-0.1, 0.2, 0.01));
  }
  CHECK(foot_skating_ratio(s, skel) == 0.0);

  // one of two contact frames slides at 0.1 m/s (displacement 0.1/30 per frame)
  HOISequence slide = s;
  slide.set_body_joint(2, 0, Vec3(0.1 + 0.1 / 30.0, 0.2, 0.01));
  // restrict to a single foot joint so the two contact frames belong to it
  SkeletonConfig one_foot = skel;
  one_foot.foot_joints = {0, 0};
  // frames t=1,2 for joint 0 are the two contact observations (duplicated
  // foot slots would double-count, so use the distinct-joint pair).
  Real r = foot_skating_ratio(slide, skel);
  // feet: joint0 has 2 transitions (1 sliding), joint1 has 2 (0 sliding) -> 1/4
  CHECK(r == doctest::Approx(0.25).epsilon(1e-12));
  // with only joint 0 counted twice: 2 sliding of 4 -> 0.5
  CHECK(foot_skating_ratio(slide, one_foot) == doctest::Approx(0.5).epsilon(1e-12));

  // feet above the height threshold: vacuously 0
  HOISequence air = s;
  for (int t = 0; t < 3; ++t) {
    air.set_body_joint(t, 0, Vec3(0.1 * t, 0, 0.5));
    air.set_body_joint(t, 1, Vec3(-0.1 * t, 0, 0.5));
  }
  CHECK(foot_skating_ratio(air, skel) == 0.0);

  HOISequence single = s;
  single.body_joints.conservativeResize(1, Eigen::NoChange);
  CHECK_THROWS_AS(foot_skating_ratio(single, skel), ShapeError);
}

TEST_CASE("fsr equals oracle on random scenes") {
  SkeletonConfig skel = tiny_skel();
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    HOISequence s = random_sequence(rng, skel, 6);
    s.body_joints *= 0.05;  // keep feet near the ground sometimes
    CHECK(foot_skating_ratio(s, skel) == fsr_oracle(s, skel, kFsrVelocityEps, kGroundHeight));
  }
}

TEST_CASE("contact_prf hand cases") {
  SkeletonConfig skel = tiny_skel(1, 1);
  skel.foot_label_joints = {0, 0, 0, 0};
  skel.foot_joints = {0, 0};
  Rng rng(8);
  const int T = 4;
  HOISequence gt = identity_pose_seq(rng, skel, T);
  Mat v(1, 3);
  v << 0, 0, 0;
  ObjectGeometry g = make_geom(v);
  // gt contact on half the frames; everything else far away
  for (int t = 0; t < T; ++t) {
    gt.set_body_joint(t, 0, t < 2 ? Vec3(0.01, 0, 0) : Vec3(1, 1, 1));
    gt.set_hand_joint(t, 0, Vec3(2, 2, 2));
  }
  // identical events -> (1,1,1)
  ContactPRF same = contact_prf(gt, gt, g, skel);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  // generated always-contact: prec 0.5, rec 1.0, f1 2/3
  HOISequence gen = gt;
  for (int t = 0; t < T; ++t) gen.set_body_joint(t, 0, Vec3(0.01, 0, 0));
  ContactPRF prf = contact_prf(gen, gt, g, skel);
  CHECK(prf.precision == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(prf.recall == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(prf.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // no events on either side -> (0,0,0)
  HOISequence none = gt;
  for (int t = 0; t < T; ++t) none.set_body_joint(t, 0, Vec3(1, 1, 1));
  ContactPRF zero = contact_prf(none, none, g, skel);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  HOISequence longer = identity_pose_seq(rng, skel, T + 1);
  CHECK_THROWS_AS(contact_prf(longer, gt, g, skel), ShapeError);
}

TEST_CASE("metrics are invariant under a global rigid transform") {
  SkeletonConfig skel = tiny_skel();
  skel.body_radius = 0.3;
  Rng rng(9);
  HOISequence s = random_sequence(rng, skel, 4);
  ObjectGeometry g = make_geom(rng.normal_mat(6, 3) * 0.4);

  Mat3 R = random_rotation(rng);
  Vec3 t = rng.normal_vec(3);
  auto transform = [&](const HOISequence& in) {
    HOISequence out = in;
    for (int f = 0; f < in.frames(); ++f) {
      for (int j = 0; j < skel.body_joints; ++j)
        out.set_body_joint(f, j, R * in.body_joint(f, j) + t);
      for (int j = 0; j < skel.hand_joints; ++j)
        out.set_hand_joint(f, j, R * in.hand_joint(f, j) + t);
      out.obj_trans.row(f) = (R * Vec3(in.obj_trans.row(f).transpose()) + t).transpose();
      Mat3 Ro = rot6d_to_matrix(in.obj_rot6d.row(f).transpose());
      out.obj_rot6d.row(f) = matrix_to_rot6d(R * Ro).transpose();
    }
    return out;
  };
  HOISequence s2 = transform(s);

  CHECK(std::abs(contact_ratio(s, g, skel) - contact_ratio(s2, g, skel)) < 1e-9);
  auto [d1, f1] = penetration(s, g, skel);
  auto [d2, f2] = penetration(s2, g, skel);
  CHECK(std::abs(d1 - d2) < 1e-9);
  CHECK(f1 == f2);
  ContactPRF p1 = contact_prf(s, s, g, skel);
  ContactPRF p2 = contact_prf(s2, s2, g, skel);
  CHECK(p1.precision == p2.precision);

  // FSR references the ground plane, so its invariance holds for
  // ground-preserving transforms (yaw + horizontal shift).
  Mat3 yaw;
  const Real a = 0.7;
  yaw << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  Vec3 shift(0.4, -0.2, 0.0);
  HOISequence s3 = s;
  for (int f = 0; f < s.frames(); ++f)
    for (int j = 0; j < skel.body_joints; ++j)
      s3.set_body_joint(f, j, yaw * s.body_joint(f, j) + shift);
  CHECK(std::abs(foot_skating_ratio(s, skel) - foot_skating_ratio(s3, skel)) < 1e-12);
}

TEST_CASE("report aggregation and serialization") {
  MetricReport a, b;
  a.contact = 0.2;
  b.contact = 0.4;
  a.fsr = 0.1;
  b.fsr = 0.3;
  MetricReport m = mean_report({a, b});
  CHECK(m.contact == doctest::Approx(0.3));
  CHECK(m.fsr == doctest::Approx(0.2));
  CHECK(m.to_json().find("\"contact\"") != std::string::npos);
  CHECK(MetricReport::csv_header().rfind("contact,", 0) == 0);
}
