#pragma once

#include "paceguide/geometry.hpp"
#include "paceguide/sampler.hpp"
#include "paceguide/types.hpp"

#include <optional>
#include <vector>

namespace paceguide {

/// Normalized dot product ⟨a, b⟩ = (a/|a|)·(b/|b|); absent when either norm
/// is zero.
std::optional<Real> normalized_dot(const TokenGrid& a, const TokenGrid& b);

/// Differentiable penetration depth-sum of the posed object vertices into
/// the toy body, both read from a clean-sample grid; optionally its gradient
/// w.r.t. the grid (joint positions and object pose; hand-angle entries are
/// zero).
Real penetration_loss(const TokenGrid& x0, const ObjectGeometry& geom, const SkeletonConfig& skel,
                      TokenGrid* grad = nullptr);

/// Guidance-direction cosines for one guided step: the pace and CFG
/// directions against the displacement toward ground truth and against the
/// penetration-reducing direction (the negative penetration gradient,
/// evaluated at the conditional clean prediction). Zero-norm cosines are
/// recorded as absent.
struct DirectionRecord {
  int k = 0;
  std::optional<Real> cfg_gt, pace_gt;
  std::optional<Real> cfg_pen, pace_pen;
};

DirectionRecord directions_at_step(const StagedStepRecord& step, const TokenGrid& gt_grid,
                                   const ObjectGeometry& geom, const SkeletonConfig& skel);

struct SimilarityMeans {
  Real cfg_gt = 0, pace_gt = 0, cfg_pen = 0, pace_pen = 0;
  int64_t n_cfg_gt = 0, n_pace_gt = 0, n_cfg_pen = 0, n_pace_pen = 0;
};

/// Means of the four cosines over records; absent entries are excluded.
/// Throws NumericError when every entry of every column is absent.
SimilarityMeans mean_similarities(const std::vector<DirectionRecord>& records);

/// Runs guided sampling for one ground-truth-paired condition and collects
/// a record per guided step.
std::vector<DirectionRecord> analyze_sequence(const DenoiserInterface& G,
                                              const NoiseSchedule& sched,
                                              const SkeletonConfig& skel,
                                              const ConditionBundle& cond,
                                              const GuidanceConfig& cfg, uint64_t seed,
                                              const TokenGrid& gt_grid,
                                              const ObjectGeometry& geom);

/// One-sided sign test: probability of >= wins successes in n fair coin
/// flips.
Real sign_test_p_value(int wins, int n);

}  // namespace paceguide
