#include "doctest.h"
#include "helpers.hpp"

#include "paceguide/augmentation.hpp"
#include "paceguide/metrics.hpp"
#include "paceguide/synthetic.hpp"

#include <cmath>

using namespace paceguide;
using paceguide::testing::random_rotation;

namespace {

ObjectGeometry box_object(const Vec3& dims, uint64_t seed, const std::string& name = "box") {
  ObjectGeometry g;
  g.name = name;
  g.category = "box";
  g.points = sample_shape_surface(ShapeFamily::Box, dims, 96, seed);
  g.bps = bps_encode(g.points, bps_basis(8));
  return g;
}

struct Scene {
  GeneratorConfig cfg;
  GeneratedData data;
  int seq_index = -1;  // a pick-up sequence on a box object

  Scene() {
    cfg.n_sequences = 32;
    cfg.frames = 40;
    cfg.n_objects = 6;
    cfg.points_per_object = 96;
    cfg.seed = 77;
    data = generate(cfg);
    for (size_t i = 0; i < data.dataset.sequences.size(); ++i) {
      const auto& s = data.dataset.sequences[i];
      if (cfg.tasks[s.task_label] == "pick-up" &&
          data.library.by_id(s.object_id).category == "box") {
        seq_index = static_cast<int>(i);
        break;
      }
    }
    REQUIRE(seq_index >= 0);
  }

  const DatasetSequence& seq() const { return data.dataset.sequences[seq_index]; }
  const ObjectGeometry& src_geom() const { return data.library.by_id(seq().object_id); }
};

}  // namespace

TEST_CASE("correspondence: identity map and corner preservation") {
  ObjectGeometry src = box_object(Vec3(0.2, 0.16, 0.12), 5);
  CorrespondenceMap map = build_correspondence(src, src);
  CHECK((map.target_points - src.points).cwiseAbs().maxCoeff() < 1e-9);
  // AABB corner maps to the corresponding corner
  const Vec3 corner = map.src_center + map.src_ext / 2;
  CHECK((map.map_point(corner) - (map.tgt_center + map.tgt_ext / 2)).norm() < 1e-12);
  const Vec3 corner2 = map.src_center - map.src_ext / 2;
  CHECK((map.map_point(corner2) - (map.tgt_center - map.tgt_ext / 2)).norm() < 1e-12);
}

TEST_CASE("correspondence: uniform scaling maps points to their scaled positions") {
  ObjectGeometry src = box_object(Vec3(0.2, 0.16, 0.12), 5);
  ObjectGeometry tgt = box_object(Vec3(0.4, 0.32, 0.24), 5, "box2x");
  CHECK((tgt.points - 2.0 * src.points).cwiseAbs().maxCoeff() < 1e-12);
  CorrespondenceMap map = build_correspondence(src, tgt);
  CHECK((map.target_points - 2.0 * src.points).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("correspondence: degenerate AABB axis is rejected") {
  ObjectGeometry src = box_object(Vec3(0.2, 0.16, 0.12), 5);
  ObjectGeometry flat = src;
  flat.points.col(2).setZero();
  CHECK_THROWS_AS(build_correspondence(src, flat), NumericError);
}

TEST_CASE("transfer_init preserves the source trajectory exactly") {
  Scene scene;
  CorrespondenceMap map = build_correspondence(scene.src_geom(), scene.src_geom());
  ObjectTrajectory init = transfer_init(scene.seq().seq, map);
  CHECK(init.trans == scene.seq().seq.obj_trans);
  CHECK(init.rot6d == scene.seq().seq.obj_rot6d);
}

TEST_CASE("identity target: all five objective terms vanish at the initialization") {
  Scene scene;
  const auto& seq = scene.seq().seq;
  CorrespondenceMap map = build_correspondence(scene.src_geom(), scene.src_geom());
  auto contacts =
      extract_contacts(seq, scene.src_geom(), map, scene.cfg.skel, &scene.seq().labels.joint_contact);
  CHECK(!contacts.empty());
  ObjectTrajectory init = transfer_init(seq, map);
  AugWeights w;
  AugTerms terms = aug_objective(seq, init, init, map, contacts, w, scene.cfg.skel);
  CHECK(terms.contact < 1e-12);
  CHECK(terms.normal < 1e-9);
  CHECK(terms.collision == 0.0);
  CHECK(terms.init == 0.0);
  CHECK(terms.accel == 0.0);
}

TEST_CASE("constant offset raises init by T*|c|^2 and leaves accel unchanged") {
  Scene scene;
  const auto& seq = scene.seq().seq;
  CorrespondenceMap map = build_correspondence(scene.src_geom(), scene.src_geom());
  auto contacts =
      extract_contacts(seq, scene.src_geom(), map, scene.cfg.skel, &scene.seq().labels.joint_contact);
  ObjectTrajectory init = transfer_init(seq, map);
  AugWeights w;
  AugTerms base = aug_objective(seq, init, init, map, contacts, w, scene.cfg.skel);

  const Vec3 c(0.05, -0.02, 0.03);
  ObjectTrajectory shifted = init;
  shifted.trans.rowwise() += c.transpose();
  AugTerms terms = aug_objective(seq, shifted, init, map, contacts, w, scene.cfg.skel);
  CHECK(terms.init ==
        doctest::Approx(seq.frames() * c.squaredNorm()).epsilon(1e-9));
  CHECK(terms.accel == doctest::Approx(base.accel).epsilon(1e-12));
}

TEST_CASE("single-frame jump: accel strictly positive, geometry terms unchanged") {
  Scene scene;
  const auto& seq = scene.seq().seq;
  CorrespondenceMap map = build_correspondence(scene.src_geom(), scene.src_geom());
  auto contacts =
      extract_contacts(seq, scene.src_geom(), map, scene.cfg.skel, &scene.seq().labels.joint_contact);
  ObjectTrajectory init = transfer_init(seq, map);
  AugWeights w;
  AugTerms base = aug_objective(seq, init, init, map, contacts, w, scene.cfg.skel);
  CHECK(base.accel == 0.0);

  // jump at an early rest frame: no contacts there, object far from the body
  int jump_frame = 1;
  bool has_contact;
  do {
    has_contact = false;
    for (const auto& c : contacts) has_contact |= (c.frame == jump_frame);
    if (has_contact) ++jump_frame;
  } while (has_contact);
  ObjectTrajectory jumped = init;
  jumped.trans.row(jump_frame) += Vec3(0.0, 0.0, 0.02).transpose();
  AugTerms terms = aug_objective(seq, jumped, init, map, contacts, w, scene.cfg.skel);
  CHECK(terms.accel > 0.0);
  CHECK(terms.contact == doctest::Approx(base.contact).epsilon(1e-12));
  CHECK(terms.normal == doctest::Approx(base.normal).epsilon(1e-12));
  CHECK(terms.collision == base.collision);
}

TEST_CASE("objective gradient matches central finite differences") {
  Scene scene;
  const auto& seq = scene.seq().seq;
  ObjectGeometry tgt = scene.src_geom();
  tgt.points *= 1.5;  // make every term active
  CorrespondenceMap map = build_correspondence(scene.src_geom(), tgt);
  auto contacts =
      extract_contacts(seq, scene.src_geom(), map, scene.cfg.skel, &scene.seq().labels.joint_contact);
  ObjectTrajectory init = transfer_init(seq, map);
  AugWeights w;
  Rng rng(3);
  ObjectTrajectory traj = init;
  traj.trans += 0.01 * rng.normal_mat(traj.trans.rows(), 3);
  traj.rot6d += 0.01 * rng.normal_mat(traj.rot6d.rows(), 6);

  ObjectTrajectory grad;
  aug_objective(seq, traj, init, map, contacts, w, scene.cfg.skel, &grad);
  auto value = [&](const ObjectTrajectory& x) {
    return aug_objective(seq, x, init, map, contacts, w, scene.cfg.skel).total(w);
  };
  const Real h = 1e-6;
  Rng pick(9);
  for (int trial = 0; trial < 40; ++trial) {
    const int t = static_cast<int>(pick.uniform_int(0, traj.frames() - 1));
    const int c = static_cast<int>(pick.uniform_int(0, 8));
    ObjectTrajectory hi = traj, lo = traj;
    Real* hi_v = c < 3 ? &hi.trans(t, c) : &hi.rot6d(t, c - 3);
    Real* lo_v = c < 3 ? &lo.trans(t, c) : &lo.rot6d(t, c - 3);
    *hi_v += h;
    *lo_v -= h;
    const Real fd = (value(hi) - value(lo)) / (2 * h);
    const Real an = c < 3 ? grad.trans(t, c) : grad.rot6d(t, c - 3);
    CHECK(std::abs(fd - an) < 1e-4 * std::max<Real>(1.0, std::abs(fd)));
  }
}

TEST_CASE("optimize: identity target is a fixed point; objective never increases") {
  Scene scene;
  const auto& seq = scene.seq().seq;
  CorrespondenceMap map = build_correspondence(scene.src_geom(), scene.src_geom());
  auto contacts =
      extract_contacts(seq, scene.src_geom(), map, scene.cfg.skel, &scene.seq().labels.joint_contact);
  ObjectTrajectory init = transfer_init(seq, map);
  AugWeights w;
  OptimizeReport report;
  OptimizeOptions opts;
  opts.max_iterations = 100;
  ObjectTrajectory out = optimize(seq, init, map, contacts, w, scene.cfg.skel, &report, opts);
  CHECK((out.trans - init.trans).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((out.rot6d - init.rot6d).cwiseAbs().maxCoeff() < 1e-3);
  for (size_t i = 1; i < report.objective_trace.size(); ++i)
    CHECK(report.objective_trace[i] <= report.objective_trace[i - 1] + 1e-15);
}

TEST_CASE("optimize: scaled target recovers contact alignment") {
  Scene scene;
  const auto& src_seq = scene.seq().seq;
  ObjectGeometry tgt = scene.src_geom();
  tgt.points *= 1.6;
  tgt.name = "scaled";
  tgt.bps = bps_encode(tgt.points, bps_basis(8));

  AugWeights w;
  AugmentedSequence aug =
      augment_sequence(src_seq, scene.seq().labels.joint_contact, scene.src_geom(), tgt,
                       scene.seq().object_id, w, scene.cfg.skel);
  CHECK(aug.report.initial.contact > 0.0);
  CHECK(aug.report.final_terms.contact <= 0.1 * aug.report.initial.contact);
  CHECK(aug.report.final_terms.total(w) <= aug.report.initial.total(w));

  // penetration stays comparable to the source sequence
  auto [src_depth, src_frac] = penetration(src_seq, scene.src_geom(), scene.cfg.skel);
  CHECK(aug.quality.penetration_fraction <= std::max(2.0 * src_frac, 0.02));
  CHECK(aug.quality.floating <= 0.5);
  CHECK(aug.quality.c_rec > 0.0);
}

TEST_CASE("objective is invariant under a joint global rigid transform") {
  Scene scene;
  const auto& seq = scene.seq().seq;
  ObjectGeometry tgt = scene.src_geom();
  tgt.points *= 1.3;
  CorrespondenceMap map = build_correspondence(scene.src_geom(), tgt);
  auto contacts =
      extract_contacts(seq, scene.src_geom(), map, scene.cfg.skel, &scene.seq().labels.joint_contact);
  ObjectTrajectory init = transfer_init(seq, map);
  Rng rng(4);
  ObjectTrajectory traj = init;
  traj.trans += 0.02 * rng.normal_mat(traj.trans.rows(), 3);
  AugWeights w;
  AugTerms before = aug_objective(seq, traj, init, map, contacts, w, scene.cfg.skel);

  const Mat3 R = random_rotation(rng);
  const Vec3 shift = rng.normal_vec(3);
  HOISequence seq2 = seq;
  ObjectTrajectory traj2 = traj, init2 = init;
  auto contacts2 = contacts;
  for (int t = 0; t < seq.frames(); ++t) {
    for (int j = 0; j < scene.cfg.skel.body_joints; ++j)
      seq2.set_body_joint(t, j, R * seq.body_joint(t, j) + shift);
    for (int j = 0; j < scene.cfg.skel.hand_joints; ++j)
      seq2.set_hand_joint(t, j, R * seq.hand_joint(t, j) + shift);
    traj2.trans.row(t) = (R * Vec3(traj.trans.row(t).transpose()) + shift).transpose();
    init2.trans.row(t) = (R * Vec3(init.trans.row(t).transpose()) + shift).transpose();
    Mat3 Rt = rot6d_to_matrix(traj.rot6d.row(t).transpose());
    traj2.rot6d.row(t) = matrix_to_rot6d(R * Rt).transpose();
    Mat3 Ri = rot6d_to_matrix(init.rot6d.row(t).transpose());
    init2.rot6d.row(t) = matrix_to_rot6d(R * Ri).transpose();
  }
  for (auto& c : contacts2) {
    c.world_point = R * c.world_point + shift;
    c.world_normal = R * c.world_normal;
  }
  AugTerms after = aug_objective(seq2, traj2, init2, map, contacts2, w, scene.cfg.skel);
  CHECK(after.contact == doctest::Approx(before.contact).epsilon(1e-7));
  CHECK(after.normal == doctest::Approx(before.normal).epsilon(1e-7));
  CHECK(after.collision == doctest::Approx(before.collision).epsilon(1e-7));
  CHECK(after.accel == doctest::Approx(before.accel).epsilon(1e-7));
}
