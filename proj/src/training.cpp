#include "paceguide/training.hpp"

#include <cmath>
#include <fstream>

namespace paceguide {

void LossWeights::validate() const {
  for (Real v : {foot_skating, velocity, contact, joint_velocity, obj_trans_velocity,
                 obj_rot_velocity})
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("loss weights must be non-negative");
}

SequenceGrad SequenceGrad::zeros(int T, const SkeletonConfig& skel) {
  SequenceGrad g;
  g.body_joints = Mat::Zero(T, skel.body_joints * 3);
  g.hand_joints = Mat::Zero(T, skel.hand_joints * 3);
  g.hand_angles = Mat::Zero(T, skel.hand_joints);
  g.obj_trans = Mat::Zero(T, 3);
  g.obj_rot6d = Mat::Zero(T, 6);
  return g;
}

TokenGrid SequenceGrad::to_grid(const SkeletonConfig& skel) const {
  TokenGrid g;
  const auto T = body_joints.rows();
  g.body = body_joints;
  g.hand.resize(T, skel.hand_width());
  g.hand.leftCols(skel.hand_joints * 3) = hand_joints;
  g.hand.rightCols(skel.hand_joints) = hand_angles;
  g.obj.resize(T, SkeletonConfig::object_width());
  g.obj.leftCols(3) = obj_trans;
  g.obj.rightCols(6) = obj_rot6d;
  return g;
}

Real loss_df(const TokenGrid& pred, const TokenGrid& gt, TokenGrid* grad) {
  if (!pred.same_shape(gt)) throw ShapeError("loss_df: shape mismatch");
  const Real n = Real(pred.total_size());
  TokenGrid diff = pred - gt;
  const Real loss = diff.squared_norm() / n;
  if (grad) *grad = diff * (2.0 / n);
  return loss;
}

Real loss_foot_skating(const HOISequence& pred, const HOISequence& gt, const Mat& foot_contact,
                       const SkeletonConfig& skel, SequenceGrad* grad) {
  const int T = gt.frames();
  if (T < 2) throw ShapeError("loss_foot_skating: need T >= 2");
  if (pred.frames() != T) throw ShapeError("loss_foot_skating: pred/gt frame mismatch");
  if (foot_contact.rows() != T || foot_contact.cols() != 4)
    throw ShapeError("loss_foot_skating: contact labels must be T x 4");
  Real loss = 0;
  for (int t = 1; t < T; ++t) {
    for (int f = 0; f < 4; ++f) {
      const Real c = foot_contact(t, f);
      if (c == 0) continue;
      const int j = skel.foot_label_joints[f];
      const Vec3 dv = (pred.body_joint(t, j) - pred.body_joint(t - 1, j)) -
                      (gt.body_joint(t, j) - gt.body_joint(t - 1, j));
      loss += c * dv.squaredNorm();
      if (grad) {
        grad->body_joints.block<1, 3>(t, 3 * j) += (2 * c * dv).transpose();
        grad->body_joints.block<1, 3>(t - 1, 3 * j) -= (2 * c * dv).transpose();
      }
    }
  }
  return loss;
}

Real loss_velocity(const HOISequence& pred, const HOISequence& gt, const LossWeights& w,
                   const SkeletonConfig& skel, SequenceGrad* grad) {
  const int T = gt.frames();
  if (T < 2) throw ShapeError("loss_velocity: need T >= 2");
  if (pred.frames() != T) throw ShapeError("loss_velocity: pred/gt frame mismatch");
  Real loss = 0;
  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < skel.total_joints(); ++j) {
      const Vec3 dv = (pred.joint(t, j, skel) - pred.joint(t - 1, j, skel)) -
                      (gt.joint(t, j, skel) - gt.joint(t - 1, j, skel));
      loss += w.joint_velocity * dv.squaredNorm();
      if (grad) {
        const Vec3 g = 2 * w.joint_velocity * dv;
        Mat& target = j < skel.body_joints ? grad->body_joints : grad->hand_joints;
        const int col = 3 * (j < skel.body_joints ? j : j - skel.body_joints);
        target.block<1, 3>(t, col) += g.transpose();
        target.block<1, 3>(t - 1, col) -= g.transpose();
      }
    }
    const Vec3 dt = ((pred.obj_trans.row(t) - pred.obj_trans.row(t - 1)) -
                     (gt.obj_trans.row(t) - gt.obj_trans.row(t - 1)))
                        .transpose();
    loss += w.obj_trans_velocity * dt.squaredNorm();
    const Eigen::Matrix<Real, 6, 1> dr = ((pred.obj_rot6d.row(t) - pred.obj_rot6d.row(t - 1)) -
                                          (gt.obj_rot6d.row(t) - gt.obj_rot6d.row(t - 1)))
                                             .transpose();
    loss += w.obj_rot_velocity * dr.squaredNorm();
    if (grad) {
      grad->obj_trans.row(t) += (2 * w.obj_trans_velocity * dt).transpose();
      grad->obj_trans.row(t - 1) -= (2 * w.obj_trans_velocity * dt).transpose();
      grad->obj_rot6d.row(t) += (2 * w.obj_rot_velocity * dr).transpose();
      grad->obj_rot6d.row(t - 1) -= (2 * w.obj_rot_velocity * dr).transpose();
    }
  }
  return loss;
}

Real loss_contact(const HOISequence& pred, const std::vector<Mat>& gt_obj_vertices,
                  const Mat& joint_contact, const SkeletonConfig& skel, SequenceGrad* grad) {
  const int T = static_cast<int>(pred.body_joints.rows());
  if (static_cast<int>(gt_obj_vertices.size()) != T)
    throw ShapeError("loss_contact: need posed vertices for every frame");
  if (joint_contact.rows() != T || joint_contact.cols() != skel.total_joints())
    throw ShapeError("loss_contact: label shape mismatch");
  Real loss = 0;
  for (int t = 0; t < T; ++t) {
    if (gt_obj_vertices[t].rows() < 1) throw ShapeError("loss_contact: empty vertex set");
    for (int j = 0; j < skel.total_joints(); ++j) {
      const Real c = joint_contact(t, j);
      if (c == 0) continue;
      const Vec3 p = pred.joint(t, j, skel);
      int nearest;
      const Real d = point_to_set_distance(p, gt_obj_vertices[t], &nearest);
      loss += c * c * d * d;
      if (grad) {
        const Vec3 v = gt_obj_vertices[t].row(nearest).transpose();
        const Vec3 g = 2 * c * c * (p - v);
        if (j < skel.body_joints)
          grad->body_joints.block<1, 3>(t, 3 * j) += g.transpose();
        else
          grad->hand_joints.block<1, 3>(t, 3 * (j - skel.body_joints)) += g.transpose();
      }
    }
  }
  return loss;
}

LossBreakdown total_loss(const TokenGrid& pred, const TokenGrid& gt_grid,
                         const HOISequence& gt_seq, const std::vector<Mat>& gt_obj_vertices,
                         const SupervisionLabels& labels, const LossWeights& w,
                         const SkeletonConfig& skel, Real fps, TokenGrid* grad) {
  LossBreakdown out;
  TokenGrid df_grad;
  out.df = loss_df(pred, gt_grid, grad ? &df_grad : nullptr);

  const HOISequence pred_seq = unpack(pred, skel, fps);
  SequenceGrad reg_grad;
  const bool want_grad = grad != nullptr;
  if (want_grad) reg_grad = SequenceGrad::zeros(gt_seq.frames(), skel);
  out.foot_skating = loss_foot_skating(pred_seq, gt_seq, labels.foot_contact, skel,
                                       want_grad ? &reg_grad : nullptr);
  // The regularizer weights scale the gradients after the fact, so run the
  // per-term gradients unweighted and combine below.
  SequenceGrad vel_grad, con_grad;
  if (want_grad) {
    vel_grad = SequenceGrad::zeros(gt_seq.frames(), skel);
    con_grad = SequenceGrad::zeros(gt_seq.frames(), skel);
  }
  out.velocity = loss_velocity(pred_seq, gt_seq, w, skel, want_grad ? &vel_grad : nullptr);
  out.contact = loss_contact(pred_seq, gt_obj_vertices, labels.joint_contact, skel,
                             want_grad ? &con_grad : nullptr);
  out.total = out.df + w.foot_skating * out.foot_skating + w.velocity * out.velocity +
              w.contact * out.contact;
  if (grad) {
    TokenGrid reg = reg_grad.to_grid(skel) * w.foot_skating + vel_grad.to_grid(skel) * w.velocity +
                    con_grad.to_grid(skel) * w.contact;
    *grad = df_grad + reg;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Mat> posed_vertices_per_frame(const HOISequence& seq, const ObjectGeometry& geom) {
  std::vector<Mat> out(seq.frames());
  for (int t = 0; t < seq.frames(); ++t) {
    const Eigen::Matrix<Real, 6, 1> r6 = seq.obj_rot6d.row(t).transpose();
    out[t] = apply_pose(geom.points, seq.obj_trans.row(t).transpose(), r6);
  }
  return out;
}

SupervisionLabels derive_labels(const HOISequence& seq, const ObjectGeometry& geom,
                                const SkeletonConfig& skel, Real ground_height) {
  const int T = seq.frames();
  SupervisionLabels labels;
  labels.foot_contact = Mat::Zero(T, 4);
  labels.joint_contact = Mat::Zero(T, skel.total_joints());
  const auto posed = posed_vertices_per_frame(seq, geom);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < skel.total_joints(); ++j) {
      const Real d = point_to_set_distance(seq.joint(t, j, skel), posed[t]);
      if (d < kContactLabelThreshold) labels.joint_contact(t, j) = 1.0;
    }
    for (int f = 0; f < 4; ++f) {
      const int j = skel.foot_label_joints[f];
      if (seq.body_joint(t, j).z() < ground_height) labels.foot_contact(t, f) = 1.0;
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Denoiser& model, const NoiseSchedule& schedule, const ObjectLibrary& library,
                 std::vector<TrainingExample> examples, TrainConfig cfg)
    : model_(model),
      schedule_(schedule),
      library_(library),
      examples_(std::move(examples)),
      cfg_(cfg),
      opt_(cfg.learning_rate) {
  if (examples_.empty()) throw ConfigError("trainer needs at least one example");
  cfg_.weights.validate();
  if (cfg_.batch_size < 1) throw ConfigError("batch size must be positive");
  geometry_features_.resize(library_.objects.size());
  for (size_t i = 0; i < library_.objects.size(); ++i)
    geometry_features_[i] = library_.objects[i].feature();
  posed_vertices_.resize(examples_.size());
  for (size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    posed_vertices_[i] = posed_vertices_per_frame(ex.seq, library_.by_id(ex.object_id));
  }
  slot_grads_.resize(cfg_.batch_size);
  for (auto& g : slot_grads_) g.init(model_.params());
  if (!cfg_.loss_log_path.empty()) {
    std::ofstream f(cfg_.loss_log_path);
    if (!f) throw IoError("cannot open loss log: " + cfg_.loss_log_path);
    f << "step,total,df,foot_skating,velocity,contact\n";
  }
}

LossBreakdown Trainer::train_step() {
  const int B = cfg_.batch_size;
  // Batch indices from a per-step stream so the trace only depends on
  // (seed, step).
  Rng batch_rng(mix_seed(cfg_.seed, 0x6261746368ull, static_cast<uint64_t>(step_)));
  std::vector<size_t> batch(B);
  for (int i = 0; i < B; ++i)
    batch[i] = static_cast<size_t>(batch_rng.uniform_int(0, int64_t(examples_.size()) - 1));

  std::vector<LossBreakdown> losses(B);
  // One gradient buffer per slot: the reduction order is fixed regardless of
  // how many worker threads run.
  parallel_for(
      B,
      [&](int64_t slot) {
        auto& gb = slot_grads_[slot];
        gb.zero();
        const TrainingExample& ex = examples_[batch[slot]];
        Rng rng(mix_seed(cfg_.seed, 0x736c6f74ull,
                         static_cast<uint64_t>(step_) * static_cast<uint64_t>(B) +
                             static_cast<uint64_t>(slot)));
        const TokenGrid gt_grid = pack(ex.seq, model_.skeleton());
        const ModalityNoiseLevels lam = schedule_.sample_training_levels(rng);
        const TokenGrid eps = TokenGrid::gaussian(ex.seq.frames(), model_.skeleton(), rng);
        const TokenGrid x_lam = schedule_.corrupt(gt_grid, lam, eps);
        ConditionBundle cond;
        cond.label_ids = {ex.label_id};
        cond.geometry = geometry_features_[ex.object_id];
        cond = drop_condition(cond, rng, model_.config().condition_dropout_prob);

        Denoiser::Workspace ws = model_.make_workspace();
        const TokenGrid pred = model_.forward(x_lam, lam, cond, &ws);
        TokenGrid dpred;
        losses[slot] =
            total_loss(pred, gt_grid, ex.seq, posed_vertices_[batch[slot]], ex.labels,
                       cfg_.weights, model_.skeleton(), ex.seq.fps, &dpred);
        model_.backward(ws, dpred, gb);
      },
      cfg_.threads);

  LossBreakdown mean;
  for (const auto& l : losses) {
    mean.total += l.total;
    mean.df += l.df;
    mean.foot_skating += l.foot_skating;
    mean.velocity += l.velocity;
    mean.contact += l.contact;
  }
  mean.total /= B;
  mean.df /= B;
  mean.foot_skating /= B;
  mean.velocity /= B;
  mean.contact /= B;
  if (!std::isfinite(mean.total))
    throw NumericError("non-finite loss at step " + std::to_string(step_) + "; step aborted");

  for (int i = 1; i < B; ++i) slot_grads_[0].accumulate(slot_grads_[i]);
  slot_grads_[0].scale(1.0 / B);
  opt_.step(model_.params(), slot_grads_[0]);
  ++step_;
  return mean;
}

std::vector<LossBreakdown> Trainer::run(
    const std::function<void(int64_t, const LossBreakdown&)>& on_step) {
  std::vector<LossBreakdown> trace;
  trace.reserve(cfg_.steps);
  std::ofstream log;
  if (!cfg_.loss_log_path.empty()) log.open(cfg_.loss_log_path, std::ios::app);
  for (int64_t s = 0; s < cfg_.steps; ++s) {
    LossBreakdown l = train_step();
    trace.push_back(l);
    if (log.is_open()) {
      log << step_ - 1 << "," << l.total << "," << l.df << "," << l.foot_skating << ","
          << l.velocity << "," << l.contact << "\n";
    }
    if (on_step) on_step(step_ - 1, l);
    if (cfg_.checkpoint_every > 0 && !cfg_.checkpoint_path.empty() &&
        step_ % cfg_.checkpoint_every == 0) {
      CheckpointMeta meta = checkpoint_meta();
      save_checkpoint(cfg_.checkpoint_path, model_, meta);
    }
  }
  if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path, model_, checkpoint_meta());
  return trace;
}

CheckpointMeta Trainer::checkpoint_meta() const {
  CheckpointMeta meta = meta_;
  meta.config = model_.config();
  meta.skeleton = model_.skeleton();
  meta.schedule_family = schedule_.family();
  meta.schedule_steps = schedule_.steps();
  meta.schedule_table_hash = schedule_.table_hash();
  meta.geometry_dim = model_.geometry_dim();
  meta.trained_steps = step_;
  return meta;
}

}  // namespace paceguide
