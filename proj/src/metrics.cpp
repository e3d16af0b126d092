#include "paceguide/metrics.hpp"

#include "json.hpp"

#include <cmath>
#include <sstream>

namespace paceguide {

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["contact"] = contact;
  j["penetration_depth"] = penetration_depth;
  j["penetration_fraction"] = penetration_fraction;
  j["fsr"] = fsr;
  j["c_prec"] = c_prec;
  j["c_rec"] = c_rec;
  j["c_f1"] = c_f1;
  return j.dump();
}

std::string MetricReport::csv_header() {
  return "contact,penetration_depth,penetration_fraction,fsr,c_prec,c_rec,c_f1";
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << contact << "," << penetration_depth << "," << penetration_fraction << "," << fsr << ","
     << c_prec << "," << c_rec << "," << c_f1;
  return os.str();
}

Real contact_ratio(const HOISequence& seq, const ObjectGeometry& geom, const SkeletonConfig& skel,
                   Real gamma) {
  if (geom.size() < 1) throw ShapeError("contact_ratio: empty object cloud");
  const int T = seq.frames();
  const int J = skel.total_joints();
  int64_t hits = 0;
  for (int t = 0; t < T; ++t) {
    const Eigen::Matrix<Real, 6, 1> r6 = seq.obj_rot6d.row(t).transpose();
    const Mat posed = apply_pose(geom.points, seq.obj_trans.row(t).transpose(), r6);
    for (int j = 0; j < J; ++j)
      if (point_to_set_distance(seq.joint(t, j, skel), posed) < gamma) ++hits;
  }
  return Real(hits) / (Real(T) * Real(J));
}

std::pair<Real, Real> penetration(const HOISequence& seq, const ObjectGeometry& geom,
                                  const SkeletonConfig& skel) {
  const int T = seq.frames();
  const ToyBodySDF sdf{skel};
  Real depth_sum = 0, frac_sum = 0;
  for (int t = 0; t < T; ++t) {
    const Mat joints = frame_joints(seq, t, skel);
    const Eigen::Matrix<Real, 6, 1> r6 = seq.obj_rot6d.row(t).transpose();
    const Mat posed = apply_pose(geom.points, seq.obj_trans.row(t).transpose(), r6);
    Real depth = 0;
    int inside = 0;
    for (Eigen::Index i = 0; i < posed.rows(); ++i) {
      const Real d = sdf.value(posed.row(i).transpose(), joints);
      if (d < 0) {
        depth += -d;
        ++inside;
      }
    }
    depth_sum += depth;
    frac_sum += Real(inside) / Real(posed.rows());
  }
  return {depth_sum / T, frac_sum / T};
}

Real foot_skating_ratio(const HOISequence& seq, const SkeletonConfig& skel, Real eps,
                        Real height_thresh) {
  const int T = seq.frames();
  if (T < 2) throw ShapeError("foot_skating_ratio: need T >= 2");
  int64_t contact_frames = 0, sliding_frames = 0;
  for (int t = 1; t < T; ++t) {
    for (int f : skel.foot_joints) {
      const Vec3 p = seq.body_joint(t, f);
      if (p.z() >= height_thresh) continue;
      ++contact_frames;
      const Vec3 prev = seq.body_joint(t - 1, f);
      const Real dx = p.x() - prev.x();
      const Real dy = p.y() - prev.y();
      const Real speed = std::sqrt(dx * dx + dy * dy) * seq.fps;
      if (speed >= eps) ++sliding_frames;
    }
  }
  if (contact_frames == 0) return 0.0;
  return Real(sliding_frames) / Real(contact_frames);
}

std::vector<bool> contact_events(const HOISequence& seq, const ObjectGeometry& geom,
                                 const SkeletonConfig& skel, Real gamma) {
  const int T = seq.frames();
  std::vector<bool> events(T, false);
  for (int t = 0; t < T; ++t) {
    const Eigen::Matrix<Real, 6, 1> r6 = seq.obj_rot6d.row(t).transpose();
    const Mat posed = apply_pose(geom.points, seq.obj_trans.row(t).transpose(), r6);
    for (int j = 0; j < skel.total_joints() && !events[t]; ++j)
      if (point_to_set_distance(seq.joint(t, j, skel), posed) < gamma) events[t] = true;
  }
  return events;
}

ContactPRF contact_prf(const HOISequence& gen, const HOISequence& gt,
                       const ObjectGeometry& gen_geom, const ObjectGeometry& gt_geom,
                       const SkeletonConfig& skel, Real gamma) {
  if (gen.frames() != gt.frames()) throw ShapeError("contact_prf: sequence length mismatch");
  const auto ge = contact_events(gen, gen_geom, skel, gamma);
  const auto te = contact_events(gt, gt_geom, skel, gamma);
  int64_t tp = 0, gen_pos = 0, gt_pos = 0;
  for (size_t t = 0; t < ge.size(); ++t) {
    gen_pos += ge[t];
    gt_pos += te[t];
    tp += ge[t] && te[t];
  }
  ContactPRF out;
  out.precision = gen_pos > 0 ? Real(tp) / Real(gen_pos) : 0.0;
  out.recall = gt_pos > 0 ? Real(tp) / Real(gt_pos) : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

ContactPRF contact_prf(const HOISequence& gen, const HOISequence& gt, const ObjectGeometry& geom,
                       const SkeletonConfig& skel, Real gamma) {
  return contact_prf(gen, gt, geom, geom, skel, gamma);
}

MetricReport evaluate_sequence(const HOISequence& gen, const HOISequence* gt,
                               const ObjectGeometry& geom, const SkeletonConfig& skel) {
  MetricReport r;
  r.contact = contact_ratio(gen, geom, skel);
  std::tie(r.penetration_depth, r.penetration_fraction) = penetration(gen, geom, skel);
  r.fsr = foot_skating_ratio(gen, skel);
  if (gt) {
    const ContactPRF prf = contact_prf(gen, *gt, geom, skel);
    r.c_prec = prf.precision;
    r.c_rec = prf.recall;
    r.c_f1 = prf.f1;
  }
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.contact += r.contact;
    m.penetration_depth += r.penetration_depth;
    m.penetration_fraction += r.penetration_fraction;
    m.fsr += r.fsr;
    m.c_prec += r.c_prec;
    m.c_rec += r.c_rec;
    m.c_f1 += r.c_f1;
  }
  const Real n = Real(reports.size());
  m.contact /= n;
  m.penetration_depth /= n;
  m.penetration_fraction /= n;
  m.fsr /= n;
  m.c_prec /= n;
  m.c_rec /= n;
  m.c_f1 /= n;
  return m;
}

}  // namespace paceguide
