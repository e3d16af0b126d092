#include "paceguide/augmentation.hpp"

#include "paceguide/metrics.hpp"

#include <cmath>
#include <sstream>

namespace paceguide {

Vec3 CorrespondenceMap::map_point(const Vec3& src_point) const {
  Vec3 q;
  for (int d = 0; d < 3; ++d)
    q(d) = tgt_center(d) + (src_point(d) - src_center(d)) * (tgt_ext(d) / src_ext(d));
  return q;
}

static void aabb(const Mat& points, Vec3* center, Vec3* ext) {
  const Vec3 lo = points.colwise().minCoeff().transpose();
  const Vec3 hi = points.colwise().maxCoeff().transpose();
  *center = (lo + hi) / 2;
  *ext = hi - lo;
}

CorrespondenceMap build_correspondence(const ObjectGeometry& src, const ObjectGeometry& tgt) {
  if (src.size() < 3 || tgt.size() < 3)
    throw ShapeError("build_correspondence: clouds must be non-empty");
  CorrespondenceMap map;
  aabb(src.points, &map.src_center, &map.src_ext);
  aabb(tgt.points, &map.tgt_center, &map.tgt_ext);
  for (int d = 0; d < 3; ++d) {
    if (map.src_ext(d) < 1e-9 || map.tgt_ext(d) < 1e-9)
      throw NumericError("build_correspondence: degenerate AABB axis");
  }
  map.target_points.resize(src.size(), 3);
  for (int i = 0; i < src.size(); ++i)
    map.target_points.row(i) = map.map_point(src.points.row(i).transpose()).transpose();
  map.src_normals = estimate_normals(src.points);
  // Normals are re-estimated on the target cloud and read off at the
  // nearest target sample to each mapped point.
  const Mat tgt_cloud_normals = estimate_normals(tgt.points);
  map.tgt_normals.resize(src.size(), 3);
  for (int i = 0; i < src.size(); ++i) {
    int nearest;
    point_to_set_distance(map.target_points.row(i).transpose(), tgt.points, &nearest);
    map.tgt_normals.row(i) = tgt_cloud_normals.row(nearest);
  }
  return map;
}

ObjectTrajectory ObjectTrajectory::from_sequence(const HOISequence& seq) {
  return {seq.obj_trans, seq.obj_rot6d};
}

ObjectTrajectory transfer_init(const HOISequence& seq, const CorrespondenceMap&) {
  return ObjectTrajectory::from_sequence(seq);
}

std::vector<ContactAnchor> extract_contacts(const HOISequence& seq, const ObjectGeometry& src,
                                            const CorrespondenceMap& map,
                                            const SkeletonConfig& skel,
                                            const Mat* joint_contact) {
  const int T = seq.frames();
  Mat labels;
  if (joint_contact) {
    labels = *joint_contact;
    if (labels.rows() != T || labels.cols() != skel.total_joints())
      throw ShapeError("extract_contacts: label shape mismatch");
  } else {
    labels = derive_labels(seq, src, skel).joint_contact;
  }
  std::vector<ContactAnchor> contacts;
  for (int t = 0; t < T; ++t) {
    const Eigen::Matrix<Real, 6, 1> r6 = seq.obj_rot6d.row(t).transpose();
    const Mat3 R = rot6d_to_matrix(r6);
    const Mat posed = apply_pose(src.points, seq.obj_trans.row(t).transpose(), R);
    for (int j = 0; j < skel.total_joints(); ++j) {
      if (labels(t, j) == 0) continue;
      ContactAnchor c;
      c.frame = t;
      c.joint = j;
      point_to_set_distance(seq.joint(t, j, skel), posed, &c.point_index);
      c.world_point = posed.row(c.point_index).transpose();
      c.world_normal = R * Vec3(map.src_normals.row(c.point_index).transpose());
      contacts.push_back(c);
    }
  }
  return contacts;
}

void AugWeights::validate() const {
  for (Real v : {contact, normal, collision, init, accel})
    if (!(v >= 0) || !std::isfinite(v))
      throw ConfigError("augmentation weights must be non-negative");
}

AugTerms aug_objective(const HOISequence& human, const ObjectTrajectory& traj,
                       const ObjectTrajectory& init_traj, const CorrespondenceMap& map,
                       const std::vector<ContactAnchor>& contacts, const AugWeights& w,
                       const SkeletonConfig& skel, ObjectTrajectory* grad) {
  const int T = traj.frames();
  if (init_traj.frames() != T || human.frames() != T)
    throw ShapeError("aug_objective: frame count mismatch");
  AugTerms terms;
  if (grad) {
    grad->trans = Mat::Zero(T, 3);
    grad->rot6d = Mat::Zero(T, 6);
  }

  std::vector<Mat3> rot(T);
  std::vector<Eigen::Matrix<Real, 6, 1>> r6(T);
  for (int t = 0; t < T; ++t) {
    r6[t] = traj.rot6d.row(t).transpose();
    rot[t] = rot6d_to_matrix(r6[t]);
  }

  // Contact: corresponded target point pinned to the source contact point
  // relative to the (frozen) human joint; with the human frozen this is the
  // world displacement of the corresponded point.
  for (const auto& c : contacts) {
    const int t = c.frame;
    const Vec3 q = map.target_points.row(c.point_index).transpose();
    const Vec3 posed = rot[t] * q + Vec3(traj.trans.row(t).transpose());
    const Vec3 diff = posed - c.world_point;
    terms.contact += diff.squaredNorm();
    if (grad) {
      grad->trans.row(t) += (w.contact * 2 * diff).transpose();
      const Mat3 dR = w.contact * 2 * diff * q.transpose();
      grad->rot6d.row(t) += rot6d_backward(r6[t], dR).transpose();
    }
  }

  // Normals: corresponded target normal aligned with the source normal.
  for (const auto& c : contacts) {
    const int t = c.frame;
    const Vec3 n_t = map.tgt_normals.row(c.point_index).transpose();
    const Vec3 posed_n = rot[t] * n_t;
    terms.normal += 1.0 - posed_n.dot(c.world_normal);
    if (grad) {
      const Mat3 dR = -w.normal * c.world_normal * n_t.transpose();
      grad->rot6d.row(t) += rot6d_backward(r6[t], dR).transpose();
    }
  }

  // Collision: penetration depth of posed target vertices into the body.
  const ToyBodySDF sdf{skel};
  for (int t = 0; t < T; ++t) {
    const Mat joints = frame_joints(human, t, skel);
    const Mat posed = apply_pose(map.target_points, traj.trans.row(t).transpose(), rot[t]);
    for (Eigen::Index i = 0; i < posed.rows(); ++i) {
      const Vec3 v = posed.row(i).transpose();
      const Real d = sdf.value(v, joints);
      if (d >= 0) continue;
      terms.collision += -d;
      if (grad) {
        const Vec3 g = -w.collision * sdf.gradient(v, joints);  // d(depth)/dv
        grad->trans.row(t) += g.transpose();
        const Mat3 dR = g * map.target_points.row(i);
        grad->rot6d.row(t) += rot6d_backward(r6[t], dR).transpose();
      }
    }
  }

  // Init anchor.
  for (int t = 0; t < T; ++t) {
    const Vec3 dt = (traj.trans.row(t) - init_traj.trans.row(t)).transpose();
    const Eigen::Matrix<Real, 6, 1> dr = (traj.rot6d.row(t) - init_traj.rot6d.row(t)).transpose();
    terms.init += dt.squaredNorm() + dr.squaredNorm();
    if (grad) {
      grad->trans.row(t) += (w.init * 2 * dt).transpose();
      grad->rot6d.row(t) += (w.init * 2 * dr).transpose();
    }
  }

  // Smoothness: second differences of the pose parameters.
  for (int t = 1; t + 1 < T; ++t) {
    const Vec3 at = (traj.trans.row(t + 1) - 2 * traj.trans.row(t) + traj.trans.row(t - 1))
                        .transpose();
    const Eigen::Matrix<Real, 6, 1> ar =
        (traj.rot6d.row(t + 1) - 2 * traj.rot6d.row(t) + traj.rot6d.row(t - 1)).transpose();
    terms.accel += at.squaredNorm() + ar.squaredNorm();
    if (grad) {
      grad->trans.row(t + 1) += (w.accel * 2 * at).transpose();
      grad->trans.row(t) -= (w.accel * 4 * at).transpose();
      grad->trans.row(t - 1) += (w.accel * 2 * at).transpose();
      grad->rot6d.row(t + 1) += (w.accel * 2 * ar).transpose();
      grad->rot6d.row(t) -= (w.accel * 4 * ar).transpose();
      grad->rot6d.row(t - 1) += (w.accel * 2 * ar).transpose();
    }
  }
  return terms;
}

ObjectTrajectory optimize(const HOISequence& human, const ObjectTrajectory& init_traj,
                          const CorrespondenceMap& map,
                          const std::vector<ContactAnchor>& contacts, const AugWeights& w,
                          const SkeletonConfig& skel, OptimizeReport* report,
                          const OptimizeOptions& opts) {
  w.validate();
  ObjectTrajectory traj = init_traj;
  ObjectTrajectory grad;
  AugTerms terms = aug_objective(human, traj, init_traj, map, contacts, w, skel, &grad);
  Real f = terms.total(w);
  if (report) {
    report->initial = terms;
    report->objective_trace.push_back(f);
  }
  if (!std::isfinite(f)) {
    if (report) {
      report->final_terms = terms;
      report->aborted_non_finite = true;
    }
    throw NumericError("aug optimize: non-finite objective at the initialization");
  }

  Real step = opts.initial_step;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Real gnorm2 = grad.trans.squaredNorm() + grad.rot6d.squaredNorm();
    if (gnorm2 < opts.grad_tolerance * opts.grad_tolerance) break;

    bool accepted = false;
    while (step >= opts.min_step) {
      ObjectTrajectory cand;
      cand.trans = traj.trans - step * grad.trans;
      cand.rot6d = traj.rot6d - step * grad.rot6d;
      ObjectTrajectory cand_grad;
      AugTerms cand_terms;
      Real f_cand = std::numeric_limits<Real>::infinity();
      try {
        cand_terms = aug_objective(human, cand, init_traj, map, contacts, w, skel, &cand_grad);
        f_cand = cand_terms.total(w);
      } catch (const NumericError&) {
        // degenerate rot6d along the line search: shrink and retry
      }
      if (std::isfinite(f_cand) && f_cand <= f - 1e-4 * step * gnorm2) {
        traj = std::move(cand);
        grad = std::move(cand_grad);
        terms = cand_terms;
        f = f_cand;
        accepted = true;
        step = std::min(step * 1.5, Real(10) * opts.initial_step);
        break;
      }
      step *= 0.5;
    }
    if (report) report->objective_trace.push_back(f);
    if (!accepted) break;
  }
  if (report) {
    report->final_terms = terms;
    report->iterations = it;
  }
  return traj;
}

std::string AugQuality::csv_header() {
  return "penetration_fraction,floating,c_prec,c_rec,c_f1";
}

std::string AugQuality::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << penetration_fraction << "," << floating << "," << c_prec << "," << c_rec << "," << c_f1;
  return os.str();
}

AugmentedSequence augment_sequence(const HOISequence& source, const Mat& joint_contact,
                                   const ObjectGeometry& src, const ObjectGeometry& tgt,
                                   int target_object_id, const AugWeights& w,
                                   const SkeletonConfig& skel, const OptimizeOptions& opts) {
  const CorrespondenceMap map = build_correspondence(src, tgt);
  const auto contacts = extract_contacts(source, src, map, skel, &joint_contact);
  const ObjectTrajectory init = transfer_init(source, map);

  AugmentedSequence out;
  out.target_object_id = target_object_id;
  const ObjectTrajectory opt = optimize(source, init, map, contacts, w, skel, &out.report, opts);

  out.seq = source;
  out.seq.obj_trans = opt.trans;
  out.seq.obj_rot6d = opt.rot6d;

  std::tie(std::ignore, out.quality.penetration_fraction) = penetration(out.seq, tgt, skel);
  const ContactPRF prf = contact_prf(out.seq, source, tgt, src, skel);
  out.quality.c_prec = prf.precision;
  out.quality.c_rec = prf.recall;
  out.quality.c_f1 = prf.f1;

  // Floating: labelled-contact frames where even the closest labelled joint
  // ends up farther than the contact threshold from the new object.
  int labelled_frames = 0, floating_frames = 0;
  for (int t = 0; t < source.frames(); ++t) {
    Real best = std::numeric_limits<Real>::infinity();
    bool any = false;
    const Eigen::Matrix<Real, 6, 1> r6 = out.seq.obj_rot6d.row(t).transpose();
    const Mat posed = apply_pose(tgt.points, out.seq.obj_trans.row(t).transpose(), r6);
    for (int j = 0; j < skel.total_joints(); ++j) {
      if (joint_contact(t, j) == 0) continue;
      any = true;
      best = std::min(best, point_to_set_distance(out.seq.joint(t, j, skel), posed));
    }
    if (any) {
      ++labelled_frames;
      if (best > kContactGamma) ++floating_frames;
    }
  }
  out.quality.floating = labelled_frames > 0 ? Real(floating_frames) / labelled_frames : 0.0;
  return out;
}

}  // namespace paceguide
