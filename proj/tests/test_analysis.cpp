#include "doctest.h"
#include "helpers.hpp"

#include "paceguide/analysis.hpp"

#include <cmath>

using namespace paceguide;
using paceguide::testing::random_sequence;

namespace {

SkeletonConfig tiny_skel() {
  SkeletonConfig s;
  s.body_joints = 2;
  s.hand_joints = 1;
  s.foot_label_joints = {0, 1, 0, 1};
  s.foot_joints = {0, 1};
  s.body_radius = 0.35;
  s.hand_radius = 0.1;
  return s;
}

ObjectGeometry small_ball(uint64_t seed) {
  ObjectGeometry g;
  g.name = "ball";
  g.category = "ellipsoid";
  g.points = sample_shape_surface(ShapeFamily::Ellipsoid, Vec3(0.12, 0.12, 0.12), 24, seed);
  g.bps = bps_encode(g.points, bps_basis(4));
  return g;
}

struct CouplingDenoiser final : DenoiserInterface {
  int K;
  explicit CouplingDenoiser(int K_) : K(K_) {}
  TokenGrid predict(const TokenGrid& x, const ModalityNoiseLevels& lam,
                    const ConditionBundle& cond) const override {
    TokenGrid out = x;
    const Real shift = cond.is_null ? 0.1 : -0.02;
    const Real mix = std::tanh(0.02 * (x.body.sum() + x.obj.sum()));
    for (Modality m : kAllModalities) {
      const Real s = 1.0 / (1.0 + Real(lam.level(m)) / K);
      out.channel(m) = (x.channel(m) * (0.8 * s)).array().tanh() + shift + 0.05 * mix;
    }
    return out;
  }
};

}  // namespace

TEST_CASE("normalized dot: self-similarity is 1, zero vectors are absent") {
  SkeletonConfig skel = tiny_skel();
  Rng rng(1);
  TokenGrid g = TokenGrid::gaussian(3, skel, rng);
  auto self_sim = normalized_dot(g, g);
  REQUIRE(self_sim.has_value());
  CHECK(*self_sim == doctest::Approx(1.0).epsilon(1e-12));

  TokenGrid zero = TokenGrid::zeros(3, skel);
  CHECK(!normalized_dot(g, zero).has_value());
  CHECK(!normalized_dot(zero, g).has_value());

  // scale invariance
  TokenGrid h = TokenGrid::gaussian(3, skel, rng);
  auto s1 = normalized_dot(g, h);
  auto s2 = normalized_dot(g * 2.5, h * 7.0);
  CHECK(*s1 == doctest::Approx(*s2).epsilon(1e-12));
  CHECK(*s1 >= -1.0);
  CHECK(*s1 <= 1.0);
}

TEST_CASE("mean_similarities: hand values, idempotent duplication, orthogonality") {
  DirectionRecord r1;
  r1.cfg_gt = 0.5;
  r1.pace_gt = 0.25;
  r1.cfg_pen = -0.5;
  r1.pace_pen = 1.0;
  DirectionRecord r2;
  r2.cfg_gt = 0.7;
  // pace_gt absent
  r2.cfg_pen = 0.5;
  r2.pace_pen = 0.0;  // orthogonal contributes zero

  SimilarityMeans m = mean_similarities({r1, r2});
  CHECK(m.cfg_gt == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.pace_gt == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m.cfg_pen == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.pace_pen == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.n_pace_gt == 1);

  SimilarityMeans dup = mean_similarities({r1, r2, r1, r2});
  CHECK(dup.cfg_gt == doctest::Approx(m.cfg_gt).epsilon(1e-12));
  CHECK(dup.pace_pen == doctest::Approx(m.pace_pen).epsilon(1e-12));

  CHECK_THROWS_AS(mean_similarities({}), NumericError);
  DirectionRecord empty;
  CHECK_THROWS_AS(mean_similarities({empty, empty}), NumericError);
}

TEST_CASE("penetration loss gradient matches central finite differences") {
  SkeletonConfig skel = tiny_skel();
  ObjectGeometry geom = small_ball(3);
  Rng rng(5);
  int states_checked = 0;
  while (states_checked < 5) {
    HOISequence seq = random_sequence(rng, skel, 3);
    seq.body_joints *= 0.2;
    seq.hand_joints *= 0.2;
    seq.obj_trans *= 0.1;  // keep the object near the joints so spheres overlap
    TokenGrid x0 = pack(seq, skel);

    // Reject states too close to a kink: vertices near the sdf zero level
    // or near argmin ties make the finite-difference oracle meaningless.
    bool clean = true;
    Real loss_probe = 0;
    {
      const ToyBodySDF sdf{skel};
      for (int t = 0; t < seq.frames() && clean; ++t) {
        const Mat joints = frame_joints(seq, t, skel);
        const Mat posed = apply_pose(geom.points, seq.obj_trans.row(t).transpose(),
                                     Eigen::Matrix<Real, 6, 1>(seq.obj_rot6d.row(t).transpose()));
        for (int i = 0; i < posed.rows() && clean; ++i) {
          Real best = 1e30, second = 1e30;
          for (int j = 0; j < joints.rows(); ++j) {
            const Real d = (Vec3(posed.row(i).transpose()) - Vec3(joints.row(j).transpose())).norm() -
                           sdf.radius(j);
            if (d < best) {
              second = best;
              best = d;
            } else
              second = std::min(second, d);
          }
          if (std::abs(best) < 1e-4 || second - best < 1e-4) clean = false;
          if (best < 0) loss_probe += -best;
        }
      }
    }
    if (!clean || loss_probe == 0) continue;
    ++states_checked;

    TokenGrid grad;
    const Real loss = penetration_loss(x0, geom, skel, &grad);
    CHECK(loss > 0);
    auto value = [&](const TokenGrid& g) { return penetration_loss(g, geom, skel); };
    const Real h = 1e-7;
    Rng pick(100 + states_checked);
    for (int trial = 0; trial < 30; ++trial) {
      const int chan = static_cast<int>(pick.uniform_int(0, 2));
      TokenGrid hi = x0, lo = x0;
      Mat& mh = hi.channel(static_cast<Modality>(chan));
      Mat& ml = lo.channel(static_cast<Modality>(chan));
      const int r = static_cast<int>(pick.uniform_int(0, mh.rows() - 1));
      const int c = static_cast<int>(pick.uniform_int(0, mh.cols() - 1));
      mh(r, c) += h;
      ml(r, c) -= h;
      const Real fd = (value(hi) - value(lo)) / (2 * h);
      const Real an = grad.channel(static_cast<Modality>(chan))(r, c);
      CHECK(std::abs(fd - an) <= 1e-4 * std::max<Real>(1.0, std::abs(fd)));
    }
    // hand-angle entries never influence penetration
    CHECK(grad.hand.rightCols(skel.hand_joints).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("directions: delta = 0 collapse leaves the pace cosines absent") {
  SkeletonConfig skel = tiny_skel();
  const int K = 10;
  NoiseSchedule sched = NoiseSchedule::cosine(K);
  CouplingDenoiser G(K);
  ObjectGeometry geom = small_ball(4);
  Rng rng(7);
  TokenGrid gt = pack(random_sequence(rng, skel, 4), skel);
  ConditionBundle cond;
  cond.label_ids = {0};
  cond.geometry = Vec::Ones(3);

  GuidanceConfig cfg;
  cfg.delta = 0;
  cfg.omega1 = 0.5;
  cfg.omega2 = 2.0;
  auto records = analyze_sequence(G, sched, skel, cond, cfg, 3, gt, geom);
  CHECK(records.size() == size_t(K));
  for (const auto& r : records) {
    CHECK(!r.pace_gt.has_value());
    CHECK(!r.pace_pen.has_value());
    if (r.cfg_gt) {
      CHECK(*r.cfg_gt >= -1.0);
      CHECK(*r.cfg_gt <= 1.0);
    }
  }
}

TEST_CASE("analyze_sequence records exactly the guidance window") {
  SkeletonConfig skel = tiny_skel();
  const int K = 12;
  NoiseSchedule sched = NoiseSchedule::cosine(K);
  CouplingDenoiser G(K);
  ObjectGeometry geom = small_ball(5);
  Rng rng(8);
  TokenGrid gt = pack(random_sequence(rng, skel, 4), skel);
  ConditionBundle cond;
  cond.label_ids = {0};
  cond.geometry = Vec::Ones(3);

  GuidanceConfig cfg;
  cfg.delta = 5;
  auto records = analyze_sequence(G, sched, skel, cond, cfg, 4, gt, geom);
  CHECK(records.size() == size_t(K - 5 + 1));
  CHECK(records.front().k == K);
  CHECK(records.back().k == 5);
  for (const auto& r : records) {
    if (r.pace_gt) {
      CHECK(*r.pace_gt >= -1.0);
      CHECK(*r.pace_gt <= 1.0);
    }
  }
}

TEST_CASE("directions_at_step rejects unguided steps") {
  SkeletonConfig skel = tiny_skel();
  StagedStepRecord rec;
  rec.guided = false;
  Rng rng(4);
  TokenGrid gt = TokenGrid::gaussian(3, skel, rng);
  CHECK_THROWS_AS(directions_at_step(rec, gt, small_ball(6), skel), RangeError);
}

TEST_CASE("sign test tail probabilities") {
  CHECK(sign_test_p_value(10, 10) == doctest::Approx(std::pow(0.5, 10)).epsilon(1e-9));
  CHECK(sign_test_p_value(0, 10) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sign_test_p_value(5, 10) == doctest::Approx(0.623046875).epsilon(1e-9));
  // 50 wins of 64 is decisively one-sided
  CHECK(sign_test_p_value(50, 64) < 1e-5);
  CHECK_THROWS_AS(sign_test_p_value(11, 10), RangeError);
}
