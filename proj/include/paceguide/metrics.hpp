#pragma once

#include "paceguide/geometry.hpp"
#include "paceguide/types.hpp"

#include <optional>
#include <string>

namespace paceguide {

inline constexpr Real kContactGamma = 0.05;     // metres
inline constexpr Real kFsrVelocityEps = 0.025;  // metres/second
inline constexpr Real kGroundHeight = 0.05;     // metres

struct MetricReport {
  Real contact = 0;
  Real penetration_depth = 0;     // mean over frames of summed depths (metres)
  Real penetration_fraction = 0;  // mean fraction of object vertices inside the body
  Real fsr = 0;
  Real c_prec = 0, c_rec = 0, c_f1 = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Fraction of (frame, joint) pairs within gamma of the posed object vertex
/// set; all modelled joints count.
Real contact_ratio(const HOISequence& seq, const ObjectGeometry& geom, const SkeletonConfig& skel,
                   Real gamma = kContactGamma);

/// Penetration of posed object vertices into the toy body. Returns
/// {depth_mean, fraction_mean}: the per-frame summed |min(sdf, 0)| averaged
/// over frames, and the mean fraction of vertices with sdf < 0.
std::pair<Real, Real> penetration(const HOISequence& seq, const ObjectGeometry& geom,
                                  const SkeletonConfig& skel);

/// Fraction of ground-contact foot frames (foot joint below height_thresh)
/// whose horizontal speed is at least eps. Lower is better; 0 when no
/// contact frames exist.
Real foot_skating_ratio(const HOISequence& seq, const SkeletonConfig& skel,
                        Real eps = kFsrVelocityEps, Real height_thresh = kGroundHeight);

struct ContactPRF {
  Real precision = 0, recall = 0, f1 = 0;
};

/// Frame-wise contact events (any joint within gamma) of the generated
/// sequence scored against the ground-truth sequence's events. Zero-event
/// degenerate cases score 0 by convention.
ContactPRF contact_prf(const HOISequence& gen, const HOISequence& gt,
                       const ObjectGeometry& gen_geom, const ObjectGeometry& gt_geom,
                       const SkeletonConfig& skel, Real gamma = kContactGamma);
ContactPRF contact_prf(const HOISequence& gen, const HOISequence& gt, const ObjectGeometry& geom,
                       const SkeletonConfig& skel, Real gamma = kContactGamma);

/// Per-frame binary contact events (any joint within gamma).
std::vector<bool> contact_events(const HOISequence& seq, const ObjectGeometry& geom,
                                 const SkeletonConfig& skel, Real gamma = kContactGamma);

/// Full report for one generated sequence; contact matching is filled when a
/// ground-truth pair is given.
MetricReport evaluate_sequence(const HOISequence& gen, const HOISequence* gt,
                               const ObjectGeometry& geom, const SkeletonConfig& skel);

MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace paceguide
