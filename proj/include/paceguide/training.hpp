#pragma once

#include "paceguide/denoiser.hpp"
#include "paceguide/geometry.hpp"
#include "paceguide/schedule.hpp"
#include "paceguide/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace paceguide {

struct LossWeights {
  Real foot_skating = 1.0;       // lambda_fs
  Real velocity = 0.02;          // lambda_v
  Real contact = 0.1;            // lambda_cont
  Real joint_velocity = 1.0;     // lambda_pv
  Real obj_trans_velocity = 1.0; // lambda_otv
  Real obj_rot_velocity = 1.0;   // lambda_orv

  void validate() const;
};

/// Binary supervision extracted from ground truth: foot-ground contact per
/// label slot, and joint-object contact per joint (0.03 m rule).
struct SupervisionLabels {
  Mat foot_contact;   // T x 4
  Mat joint_contact;  // T x (J_b + J_h)
};

inline constexpr Real kContactLabelThreshold = 0.03;  // metres

// ---------------------------------------------------------------------------
// Individual losses. Each returns the scalar and optionally accumulates its
// gradient w.r.t. the prediction into `grad` (sequence-shaped matrices).

struct SequenceGrad {
  Mat body_joints;  // T x (J_b*3)
  Mat hand_joints;  // T x (J_h*3)
  Mat hand_angles;  // T x J_h
  Mat obj_trans;    // T x 3
  Mat obj_rot6d;    // T x 6

  static SequenceGrad zeros(int T, const SkeletonConfig& skel);
  /// Reassembles the channel layout of pack(); gradients transport the same
  /// way because pack is a fixed permutation.
  TokenGrid to_grid(const SkeletonConfig& skel) const;
};

/// Mean squared error over all token entries.
Real loss_df(const TokenGrid& pred, const TokenGrid& gt, TokenGrid* grad = nullptr);

/// sum_t sum_f c^f_t | (j_t - j_{t-1}) - (j^_t - j^_{t-1}) |^2 over the four
/// foot label slots.
Real loss_foot_skating(const HOISequence& pred, const HOISequence& gt, const Mat& foot_contact,
                       const SkeletonConfig& skel, SequenceGrad* grad = nullptr);

/// First-difference matching for joints, object translation and object
/// rotation, with the three internal weights.
Real loss_velocity(const HOISequence& pred, const HOISequence& gt, const LossWeights& w,
                   const SkeletonConfig& skel, SequenceGrad* grad = nullptr);

/// sum over frames/joints of (d(j_pred, V_t) * c)^2 against ground-truth
/// object vertices posed per frame.
Real loss_contact(const HOISequence& pred, const std::vector<Mat>& gt_obj_vertices,
                  const Mat& joint_contact, const SkeletonConfig& skel,
                  SequenceGrad* grad = nullptr);

struct LossBreakdown {
  Real total = 0;
  Real df = 0;
  Real foot_skating = 0;
  Real velocity = 0;
  Real contact = 0;
};

/// Full training objective L_DF + L_reg on one sequence; gradient w.r.t. the
/// prediction grid.
LossBreakdown total_loss(const TokenGrid& pred, const TokenGrid& gt_grid,
                         const HOISequence& gt_seq, const std::vector<Mat>& gt_obj_vertices,
                         const SupervisionLabels& labels, const LossWeights& w,
                         const SkeletonConfig& skel, Real fps, TokenGrid* grad = nullptr);

// ---------------------------------------------------------------------------
// Training loop

/// One training example: ground truth plus its conditioning.
struct TrainingExample {
  HOISequence seq;
  SupervisionLabels labels;
  int label_id = 0;
  int object_id = 0;
};

struct TrainConfig {
  Real learning_rate = 1e-4;
  int batch_size = 32;
  int64_t steps = 2000;
  uint64_t seed = 0;
  LossWeights weights;
  int threads = 0;  // 0 = default_thread_count()
  std::string loss_log_path;         // CSV per step; empty disables
  std::string checkpoint_path;       // empty disables periodic checkpoints
  int64_t checkpoint_every = 0;      // 0 disables
};

class Trainer {
 public:
  Trainer(Denoiser& model, const NoiseSchedule& schedule, const ObjectLibrary& library,
          std::vector<TrainingExample> examples, TrainConfig cfg);

  /// Draws a batch, corrupts with independent per-modality levels, applies
  /// condition dropout, and takes one optimizer step. Throws NumericError if
  /// the loss is non-finite (parameters are left untouched in that case).
  LossBreakdown train_step();

  /// Runs cfg.steps steps; returns the per-step loss trace.
  std::vector<LossBreakdown> run(
      const std::function<void(int64_t, const LossBreakdown&)>& on_step = nullptr);

  int64_t step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  CheckpointMeta checkpoint_meta() const;
  void set_checkpoint_meta(CheckpointMeta meta) { meta_ = std::move(meta); }

 private:
  Denoiser& model_;
  NoiseSchedule schedule_;
  const ObjectLibrary& library_;
  std::vector<TrainingExample> examples_;
  std::vector<std::vector<Mat>> posed_vertices_;  // per example, per frame
  std::vector<Vec> geometry_features_;            // per object id
  TrainConfig cfg_;
  nn::Adam opt_;
  int64_t step_ = 0;
  CheckpointMeta meta_;
  std::vector<nn::GradBuffer> slot_grads_;  // one per batch slot; reduced in slot order
};

/// Recomputes the 0.03 m joint-contact labels and height-rule foot contacts
/// from raw geometry (used by the generator and by consistency checks).
SupervisionLabels derive_labels(const HOISequence& seq, const ObjectGeometry& geom,
                                const SkeletonConfig& skel, Real ground_height = 0.05);

/// Object vertices posed by the sequence's per-frame object pose.
std::vector<Mat> posed_vertices_per_frame(const HOISequence& seq, const ObjectGeometry& geom);

}  // namespace paceguide
