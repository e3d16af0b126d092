#pragma once

#include "paceguide/geometry.hpp"
#include "paceguide/training.hpp"
#include "paceguide/types.hpp"

#include <string>
#include <vector>

namespace paceguide {

/// Analytic correspondence between two same-category shapes: per-axis AABB
/// coordinate transfer, with normals estimated on both clouds. Index i of
/// the source cloud corresponds to target_points.row(i).
struct CorrespondenceMap {
  Vec3 src_center, tgt_center;
  Vec3 src_ext, tgt_ext;     // full AABB extents
  Mat target_points;         // N x 3, canonical target frame
  Mat src_normals;           // N x 3, canonical source frame
  Mat tgt_normals;           // N x 3, canonical target frame

  Vec3 map_point(const Vec3& src_point) const;
};

CorrespondenceMap build_correspondence(const ObjectGeometry& src, const ObjectGeometry& tgt);

struct ObjectTrajectory {
  Mat trans;  // T x 3
  Mat rot6d;  // T x 6

  int frames() const { return static_cast<int>(trans.rows()); }
  static ObjectTrajectory from_sequence(const HOISequence& seq);
};

/// Initial trajectory for the replacement object: the source object's
/// per-frame pose, unchanged.
ObjectTrajectory transfer_init(const HOISequence& seq, const CorrespondenceMap& map);

/// One labelled contact: joint j touches source-cloud point `point_index`
/// at frame t. World-space anchors are recorded from the source sequence.
struct ContactAnchor {
  int frame = 0;
  int joint = 0;
  int point_index = 0;
  Vec3 world_point = Vec3::Zero();   // source contact point, world
  Vec3 world_normal = Vec3::Zero();  // source normal, world
};

/// Contacts from the joint-contact labels (or re-derived with the 0.03 m
/// rule when labels are not given).
std::vector<ContactAnchor> extract_contacts(const HOISequence& seq, const ObjectGeometry& src,
                                            const CorrespondenceMap& map,
                                            const SkeletonConfig& skel,
                                            const Mat* joint_contact = nullptr);

struct AugWeights {
  Real contact = 1.0;    // lambda_con
  Real normal = 0.1;     // lambda_normal
  Real collision = 1.0;  // lambda_colli
  Real init = 0.01;      // lambda_init
  Real accel = 0.1;      // lambda_acc

  void validate() const;
};

struct AugTerms {
  Real contact = 0;
  Real normal = 0;
  Real collision = 0;
  Real init = 0;
  Real accel = 0;

  Real total(const AugWeights& w) const {
    return w.contact * contact + w.normal * normal + w.collision * collision + w.init * init +
           w.accel * accel;
  }
};

/// Five-term alignment objective for the replacement trajectory. The
/// contact term penalizes deviation of each corresponded target point from
/// its source contact location relative to the (frozen) human joint, the
/// normal term misalignment of corresponded normals, the collision term
/// penetration into the toy body, init anchors to the initialization and
/// accel penalizes second differences of the pose parameters.
AugTerms aug_objective(const HOISequence& human, const ObjectTrajectory& traj,
                       const ObjectTrajectory& init_traj, const CorrespondenceMap& map,
                       const std::vector<ContactAnchor>& contacts, const AugWeights& w,
                       const SkeletonConfig& skel, ObjectTrajectory* grad = nullptr);

struct OptimizeReport {
  AugTerms initial;
  AugTerms final_terms;
  int iterations = 0;
  bool aborted_non_finite = false;
  std::vector<Real> objective_trace;
};

struct OptimizeOptions {
  int max_iterations = 500;
  Real initial_step = 0.05;
  Real min_step = 1e-12;
  Real grad_tolerance = 1e-10;
};

/// First-order descent with backtracking line search over the per-frame
/// (translation, rot6d) parameters; the objective never increases.
ObjectTrajectory optimize(const HOISequence& human, const ObjectTrajectory& init_traj,
                          const CorrespondenceMap& map,
                          const std::vector<ContactAnchor>& contacts, const AugWeights& w,
                          const SkeletonConfig& skel, OptimizeReport* report = nullptr,
                          const OptimizeOptions& opts = {});

/// Quality columns reported per augmentation job.
struct AugQuality {
  Real penetration_fraction = 0;
  Real floating = 0;  // fraction of labelled-contact frames farther than gamma
  Real c_prec = 0, c_rec = 0, c_f1 = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct AugmentedSequence {
  HOISequence seq;  // human from the source, object trajectory optimized
  int target_object_id = 0;
  AugQuality quality;
  OptimizeReport report;
};

/// Full job: correspondence, init, optimization and quality metrics for one
/// sequence transferred onto `tgt`.
AugmentedSequence augment_sequence(const HOISequence& source, const Mat& joint_contact,
                                   const ObjectGeometry& src, const ObjectGeometry& tgt,
                                   int target_object_id, const AugWeights& w,
                                   const SkeletonConfig& skel, const OptimizeOptions& opts = {});

}  // namespace paceguide
