#include "paceguide/analysis.hpp"

#include <cmath>

namespace paceguide {

std::optional<Real> normalized_dot(const TokenGrid& a, const TokenGrid& b) {
  const Real na = std::sqrt(a.squared_norm());
  const Real nb = std::sqrt(b.squared_norm());
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return a.dot(b) / (na * nb);
}

Real penetration_loss(const TokenGrid& x0, const ObjectGeometry& geom, const SkeletonConfig& skel,
                      TokenGrid* grad) {
  const int T = x0.frames();
  const HOISequence seq = unpack(x0, skel);
  const ToyBodySDF sdf{skel};
  if (grad) *grad = x0.like_shape();
  Real loss = 0;
  for (int t = 0; t < T; ++t) {
    const Mat joints = frame_joints(seq, t, skel);
    const Eigen::Matrix<Real, 6, 1> r6 = seq.obj_rot6d.row(t).transpose();
    const Mat3 R = rot6d_to_matrix(r6);
    const Vec3 trans = seq.obj_trans.row(t).transpose();
    for (int i = 0; i < geom.size(); ++i) {
      const Vec3 p = geom.points.row(i).transpose();
      const Vec3 v = R * p + trans;
      int nearest;
      const Real d = sdf.value(v, joints, &nearest);
      if (d >= 0) continue;
      loss += -d / T;
      if (grad) {
        // depth = -(|v - c| - r): d(depth)/dv = -(v - c)/|v - c|, the joint
        // centre picks up the opposite sign.
        const Vec3 dir = sdf.gradient(v, joints);
        const Vec3 dv = -dir / T;
        grad->obj.block<1, 3>(t, 0) += dv.transpose();
        const Mat3 dR = dv * p.transpose();
        grad->obj.block<1, 6>(t, 3) += rot6d_backward(r6, dR).transpose();
        if (nearest < skel.body_joints)
          grad->body.block<1, 3>(t, 3 * nearest) += (dir / T).transpose();
        else
          grad->hand.block<1, 3>(t, 3 * (nearest - skel.body_joints)) += (dir / T).transpose();
      }
    }
  }
  return loss;
}

DirectionRecord directions_at_step(const StagedStepRecord& step, const TokenGrid& gt_grid,
                                   const ObjectGeometry& geom, const SkeletonConfig& skel) {
  if (!step.guided)
    throw RangeError("directions_at_step: step outside the guidance-active window");
  if (!step.null_pred || step.null_pred->frames() == 0)
    throw RangeError("directions_at_step: the step record lacks a null prediction");

  DirectionRecord rec;
  rec.k = step.k;
  const TokenGrid g_cfg = *step.cond_pred - *step.null_pred;
  const TokenGrid g_pace = *step.merged_pred - *step.cond_pred;
  const TokenGrid g_gt = gt_grid - *step.x_state;

  TokenGrid pen_grad;
  penetration_loss(*step.cond_pred, geom, skel, &pen_grad);
  const TokenGrid pen_descent = pen_grad * Real(-1);

  rec.cfg_gt = normalized_dot(g_cfg, g_gt);
  rec.pace_gt = normalized_dot(g_pace, g_gt);
  rec.cfg_pen = normalized_dot(g_cfg, pen_descent);
  rec.pace_pen = normalized_dot(g_pace, pen_descent);
  return rec;
}

SimilarityMeans mean_similarities(const std::vector<DirectionRecord>& records) {
  if (records.empty()) throw NumericError("mean_similarities: no records");
  SimilarityMeans m;
  for (const auto& r : records) {
    if (r.cfg_gt) {
      m.cfg_gt += *r.cfg_gt;
      ++m.n_cfg_gt;
    }
    if (r.pace_gt) {
      m.pace_gt += *r.pace_gt;
      ++m.n_pace_gt;
    }
    if (r.cfg_pen) {
      m.cfg_pen += *r.cfg_pen;
      ++m.n_cfg_pen;
    }
    if (r.pace_pen) {
      m.pace_pen += *r.pace_pen;
      ++m.n_pace_pen;
    }
  }
  if (m.n_cfg_gt + m.n_pace_gt + m.n_cfg_pen + m.n_pace_pen == 0)
    throw NumericError("mean_similarities: every cosine is absent");
  if (m.n_cfg_gt) m.cfg_gt /= m.n_cfg_gt;
  if (m.n_pace_gt) m.pace_gt /= m.n_pace_gt;
  if (m.n_cfg_pen) m.cfg_pen /= m.n_cfg_pen;
  if (m.n_pace_pen) m.pace_pen /= m.n_pace_pen;
  return m;
}

std::vector<DirectionRecord> analyze_sequence(const DenoiserInterface& G,
                                              const NoiseSchedule& sched,
                                              const SkeletonConfig& skel,
                                              const ConditionBundle& cond,
                                              const GuidanceConfig& cfg, uint64_t seed,
                                              const TokenGrid& gt_grid,
                                              const ObjectGeometry& geom) {
  std::vector<DirectionRecord> records;
  StagedObserver obs = [&](const StagedStepRecord& step) {
    if (!step.guided) return;
    records.push_back(directions_at_step(step, gt_grid, geom, skel));
  };
  run_guided_grids(G, sched, skel, gt_grid.frames(), cond, cfg, seed, &obs);
  return records;
}

Real sign_test_p_value(int wins, int n) {
  if (n < 1) throw RangeError("sign_test_p_value: need n >= 1");
  if (wins < 0 || wins > n) throw RangeError("sign_test_p_value: wins outside [0, n]");
  // P[Bin(n, 1/2) >= wins], summed in log space for stability.
  Real p = 0;
  for (int k = wins; k <= n; ++k) {
    const Real log_c =
        std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    p += std::exp(log_c - n * std::log(2.0));
  }
  return std::min(p, Real(1));
}

}  // namespace paceguide
