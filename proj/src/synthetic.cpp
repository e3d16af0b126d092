#include "paceguide/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <optional>

namespace paceguide {

void GeneratorConfig::validate() const {
  if (n_sequences < 1) throw ConfigError("generator: n_sequences must be positive");
  if (frames < 16) throw ConfigError("generator: need at least 16 frames");
  if (!(fps > 0)) throw ConfigError("generator: fps must be positive");
  if (tasks.empty()) throw ConfigError("generator: empty task vocabulary");
  if (n_objects < 1) throw ConfigError("generator: n_objects must be positive");
  if (points_per_object < 16) throw ConfigError("generator: need at least 16 surface points");
  skel.validate();
  if (skel.body_joints < 8) throw ConfigError("generator: toy agent needs >= 8 body joints");
  if (skel.hand_joints < 4) throw ConfigError("generator: toy agent needs >= 4 fingertips");
}

ObjectLibrary make_object_library(const GeneratorConfig& cfg) {
  ObjectLibrary lib;
  const Mat basis = bps_basis(kBpsPointsPaper);
  for (int i = 0; i < cfg.n_objects; ++i) {
    Rng rng(mix_seed(cfg.seed, 0x6f626a6563ull, static_cast<uint64_t>(i)));
    const auto family = static_cast<ShapeFamily>(i % 3);
    Vec3 dims;
    switch (family) {
      case ShapeFamily::Box:
        dims = Vec3(rng.uniform(cfg.box_min, cfg.box_max), rng.uniform(cfg.box_min, cfg.box_max),
                    rng.uniform(cfg.box_min, cfg.box_max));
        break;
      case ShapeFamily::Cylinder: {
        const Real r = rng.uniform(cfg.cyl_r_min, cfg.cyl_r_max);
        dims = Vec3(r, r, rng.uniform(cfg.cyl_h_min, cfg.cyl_h_max));
        break;
      }
      case ShapeFamily::Ellipsoid:
        dims = Vec3(rng.uniform(cfg.ell_min, cfg.ell_max), rng.uniform(cfg.ell_min, cfg.ell_max),
                    rng.uniform(cfg.ell_min, cfg.ell_max));
        break;
    }
    ObjectGeometry g;
    g.category = shape_family_name(family);
    g.name = g.category + std::to_string(i);
    g.points = sample_shape_surface(family, dims, cfg.points_per_object,
                                    mix_seed(cfg.seed, 0x707473ull, static_cast<uint64_t>(i)));
    g.bps = bps_encode(g.points, basis);
    lib.objects.push_back(std::move(g));
  }
  return lib;
}

namespace {

Real smoothstep(Real u) {
  u = std::clamp(u, Real(0), Real(1));
  return u * u * (3 - 2 * u);
}

// Phase boundaries as fractions of the clip.
struct Phases {
  Real rest_end = 0.15;
  Real approach_end = 0.35;
  Real grasp_end = 0.45;
  Real manip_end = 0.80;
  Real open_end = 0.88;
};

struct GraspPlan {
  std::array<Vec3, 4> tip_targets;  // world, at grasp time
  Vec3 out_axis;                    // unit, away from the object
  Vec3 hand_center;                 // centroid of tip targets
};

constexpr Real kTouchGap = 0.018;

GraspPlan plan_grasp(const Mat& posed_cloud, const Vec3& obj_center, bool side_grasp) {
  const int n = static_cast<int>(posed_cloud.rows());
  int anchor = 0;
  Real best = side_grasp ? 1e30 : -1e30;
  for (int i = 0; i < n; ++i) {
    const Real key = side_grasp ? posed_cloud(i, 0) : posed_cloud(i, 2);
    if (side_grasp ? key < best : key > best) {
      best = key;
      anchor = i;
    }
  }
  const Vec3 va = posed_cloud.row(anchor).transpose();
  // the anchor plus its three nearest neighbours
  std::vector<std::pair<Real, int>> order(n);
  for (int i = 0; i < n; ++i)
    order[i] = {(Vec3(posed_cloud.row(i).transpose()) - va).squaredNorm(), i};
  std::partial_sort(order.begin(), order.begin() + 4, order.end());
  GraspPlan plan;
  plan.out_axis = side_grasp ? Vec3(-1, 0, 0) : Vec3(0, 0, 1);
  Vec3 center = Vec3::Zero();
  for (int j = 0; j < 4; ++j) {
    const Vec3 v = posed_cloud.row(order[j].second).transpose();
    Vec3 outward = v - obj_center;
    const Real norm = outward.norm();
    outward = norm > 1e-9 ? Vec3(outward / norm) : plan.out_axis;
    plan.tip_targets[j] = v + kTouchGap * outward;
    center += plan.tip_targets[j];
  }
  plan.hand_center = center / 4;
  return plan;
}

std::array<Vec3, 4> free_tips(const Vec3& hand_center) {
  const Real r = 0.035;
  return {hand_center + Vec3(r, 0, -0.04), hand_center + Vec3(0, r, -0.04),
          hand_center + Vec3(-r, 0, -0.04), hand_center + Vec3(0, -r, -0.04)};
}

struct FootPlan {
  // planted positions before/after a swing; swing window in frames
  Vec3 from, to;
  int swing_begin = -1, swing_end = -1;  // [begin, end)
};

Vec3 foot_position(const FootPlan& fp, int t) {
  if (fp.swing_begin < 0 || t < fp.swing_begin) return fp.from;
  if (t >= fp.swing_end) return fp.to;
  const int len = fp.swing_end - fp.swing_begin;
  const int rise = std::max(2, len / 5);
  const int fall = rise;
  const int i = t - fp.swing_begin;
  Real z;
  Real h = 0;  // horizontal progress
  if (i < rise) {
    z = 0.02 + 0.10 * smoothstep(Real(i) / rise);
  } else if (i >= len - fall) {
    z = 0.02 + 0.10 * (1 - smoothstep(Real(i - (len - fall)) / fall));
    h = 1.0;
  } else {
    z = 0.12;
    h = smoothstep(Real(i - rise) / (len - rise - fall));
  }
  Vec3 p = fp.from + h * (fp.to - fp.from);
  p.z() = z;
  return p;
}

struct SequencePlan {
  int task = 0;
  int object_id = 0;
};

std::optional<DatasetSequence> synthesize(const GeneratorConfig& cfg, const ObjectLibrary& lib,
                                          uint64_t seq_seed, int* skip_flag) {
  Rng rng(seq_seed);
  const int T = cfg.frames;
  const int task = static_cast<int>(rng.uniform_int(0, int64_t(cfg.tasks.size()) - 1));
  const std::string& task_name = cfg.tasks[task];
  const int object_id = static_cast<int>(rng.uniform_int(0, int64_t(lib.objects.size()) - 1));
  const ObjectGeometry& geom = lib.by_id(object_id);

  // Feasibility: the toy agent cannot manipulate objects larger than its
  // reach.
  const Vec3 lo = geom.points.colwise().minCoeff().transpose();
  const Vec3 hi = geom.points.colwise().maxCoeff().transpose();
  if ((hi - lo).maxCoeff() > cfg.max_reach) {
    *skip_flag = 1;
    return std::nullopt;
  }

  const bool side_grasp = task_name == "push";
  Phases ph;

  // Initial object pose: small yaw, resting on the ground in front of the
  // agent.
  const Real yaw0 = rng.uniform(-0.35, 0.35);
  Mat3 R0;
  R0 << std::cos(yaw0), -std::sin(yaw0), 0, std::sin(yaw0), std::cos(yaw0), 0, 0, 0, 1;
  const Real z_rest = -lo.z();
  const Vec3 p0(0.55 + rng.uniform(-0.04, 0.04), rng.uniform(-0.06, 0.06), z_rest);
  const Mat posed0 = apply_pose(geom.points, p0, R0);
  const Vec3 obj_center0 = posed0.colwise().mean().transpose();

  const GraspPlan grasp = plan_grasp(posed0, obj_center0, side_grasp);

  // Manipulation targets (jittered per clip).
  const Real lift_amount = 0.20 * rng.uniform(0.8, 1.2);
  const Real push_amount = 0.24 * rng.uniform(0.8, 1.2);
  const Real carry_amount = 0.24 * rng.uniform(0.8, 1.2);
  const Real rotate_amount = (M_PI / 2) * rng.uniform(0.7, 1.1);

  const Vec3 rest_hand =
      Vec3(0.30 + rng.uniform(-0.03, 0.03), -0.18 + rng.uniform(-0.03, 0.03), 1.02);

  const int manip_begin = static_cast<int>(ph.grasp_end * T);
  const int manip_end = static_cast<int>(ph.manip_end * T);

  // Rigid motion of the grasped object over the manipulation window,
  // relative to the grasp pose: translation w(u) and yaw phi(u) about the
  // object centre.
  auto manip_translation = [&](Real u) -> Vec3 {
    if (task_name == "pick-up") return Vec3(0, 0, lift_amount * smoothstep(u));
    if (task_name == "push") return Vec3(push_amount * smoothstep(u), 0, 0);
    if (task_name == "lift-carry") {
      const Real lift_u = std::min(u / 0.25, Real(1));
      const Real carry_u = std::clamp((u - 0.25) / 0.70, Real(0), Real(1));
      return Vec3(carry_amount * smoothstep(carry_u), 0, lift_amount * 0.8 * smoothstep(lift_u));
    }
    return Vec3::Zero();  // rotate
  };
  auto manip_yaw = [&](Real u) -> Real {
    return task_name == "rotate" ? rotate_amount * smoothstep(u) : 0.0;
  };

  // Root translation follows the carry.
  auto root_shift = [&](int t) -> Vec3 {
    if (task_name != "lift-carry") return Vec3::Zero();
    if (t <= manip_begin) return Vec3::Zero();
    const Real u = std::clamp(Real(t - manip_begin) / (manip_end - manip_begin), Real(0), Real(1));
    const Real carry_u = std::clamp((u - 0.25) / 0.70, Real(0), Real(1));
    return Vec3(carry_amount * smoothstep(carry_u), 0, 0);
  };

  // Feet: planted except for the two swings of a carry.
  FootPlan lfoot{Vec3(0.12, 0.10, 0.02), Vec3(0.12, 0.10, 0.02), -1, -1};
  FootPlan rfoot{Vec3(0.12, -0.10, 0.02), Vec3(0.12, -0.10, 0.02), -1, -1};
  if (task_name == "lift-carry") {
    const int carry_begin = manip_begin + static_cast<int>(0.25 * (manip_end - manip_begin));
    const int carry_len = manip_end - carry_begin;
    const int swing = std::max(6, carry_len * 2 / 5);
    if (carry_begin + 2 * swing + 2 <= manip_end) {
      lfoot.to = lfoot.from + Vec3(carry_amount, 0, 0);
      rfoot.to = rfoot.from + Vec3(carry_amount, 0, 0);
      lfoot.swing_begin = carry_begin;
      lfoot.swing_end = carry_begin + swing;
      rfoot.swing_begin = carry_begin + swing + 2;
      rfoot.swing_end = rfoot.swing_begin + swing;
    }
  }

  HOISequence seq;
  seq.fps = cfg.fps;
  seq.body_joints.resize(T, cfg.skel.body_joints * 3);
  seq.body_joints.setZero();
  seq.hand_joints.resize(T, cfg.skel.hand_joints * 3);
  seq.hand_joints.setZero();
  seq.hand_angles.resize(T, cfg.skel.hand_joints);
  seq.hand_angles.setZero();
  seq.obj_trans.resize(T, 3);
  seq.obj_rot6d.resize(T, 6);

  const Vec3 pre_grasp = grasp.hand_center + 0.06 * grasp.out_axis;

  for (int t = 0; t < T; ++t) {
    const Real f = Real(t) / (T - 1);

    // --- object pose and grasp rigid motion
    Vec3 w = Vec3::Zero();
    Real phi = 0;
    if (t >= manip_begin) {
      const Real u = std::clamp(Real(t - manip_begin) / (manip_end - manip_begin), Real(0), Real(1));
      w = manip_translation(u);
      phi = manip_yaw(u);
    }
    Mat3 Rz;
    Rz << std::cos(phi), -std::sin(phi), 0, std::sin(phi), std::cos(phi), 0, 0, 0, 1;
    // rotate about the object centre, then translate
    const Vec3 obj_trans_t = obj_center0 + Rz * (p0 - obj_center0) + w;
    const Mat3 obj_rot_t = Rz * R0;
    seq.obj_trans.row(t) = obj_trans_t.transpose();
    seq.obj_rot6d.row(t) = matrix_to_rot6d(obj_rot_t).transpose();
    auto rigid = [&](const Vec3& p) -> Vec3 { return obj_center0 + Rz * (p - obj_center0) + w; };

    // --- hand centre through the phases
    Vec3 hand_center;
    Real closed;  // 0 = open, 1 = grasping
    if (f < ph.rest_end) {
      hand_center = rest_hand;
      closed = 0;
    } else if (f < ph.approach_end) {
      const Real u = smoothstep((f - ph.rest_end) / (ph.approach_end - ph.rest_end));
      hand_center = rest_hand + u * (pre_grasp - rest_hand);
      closed = 0;
    } else if (f < ph.grasp_end) {
      const Real u = smoothstep((f - ph.approach_end) / (ph.grasp_end - ph.approach_end));
      hand_center = pre_grasp + u * (grasp.hand_center - pre_grasp);
      closed = u;
    } else if (f < ph.manip_end) {
      hand_center = rigid(grasp.hand_center);
      closed = 1;
    } else if (f < ph.open_end) {
      const Real u = smoothstep((f - ph.manip_end) / (ph.open_end - ph.manip_end));
      hand_center = rigid(grasp.hand_center) + u * 0.10 * grasp.out_axis;
      closed = 1 - u;
    } else {
      const Real u = smoothstep((f - ph.open_end) / (1 - ph.open_end));
      const Vec3 opened = rigid(grasp.hand_center) + 0.10 * grasp.out_axis;
      hand_center = opened + u * (rest_hand + root_shift(t) - opened);
      closed = 0;
    }

    // --- fingertips: blend between the free ring and the grasp targets
    const auto open_tips = free_tips(hand_center);
    for (int j = 0; j < 4; ++j) {
      const Vec3 tip_grasp = rigid(grasp.tip_targets[j]);
      const Vec3 tip = open_tips[j] + closed * (tip_grasp - open_tips[j]);
      seq.hand_joints.block<1, 3>(t, 3 * j) = tip.transpose();
    }
    for (int j = 4; j < cfg.skel.hand_joints; ++j)
      seq.hand_joints.block<1, 3>(t, 3 * j) =
          (hand_center + Vec3(0, 0, 0.02 * (j - 3))).transpose();
    for (int j = 0; j < cfg.skel.hand_joints; ++j)
      seq.hand_angles(t, j) = 0.15 + 0.7 * closed;

    // --- body chain
    const Vec3 root = root_shift(t);
    const Vec3 pelvis = root + Vec3(0, 0, 0.95);
    const Vec3 chest = root + Vec3(0.02, 0, 1.25);
    const Vec3 head = root + Vec3(0.03, 0, 1.52);
    const Vec3 shoulder = chest + Vec3(0.05, -0.16, 0.02);
    const Vec3 wrist = hand_center + 0.12 * grasp.out_axis * (0.4 + 0.6 * closed) +
                       0.05 * Vec3(0, 0, 1) * (1 - closed);
    const Vec3 elbow = 0.5 * (shoulder + wrist) + Vec3(0, -0.05, 0.06);
    seq.set_body_joint(t, 0, pelvis);
    seq.set_body_joint(t, 1, chest);
    seq.set_body_joint(t, 2, head);
    seq.set_body_joint(t, 3, foot_position(lfoot, t));
    seq.set_body_joint(t, 4, foot_position(rfoot, t));
    seq.set_body_joint(t, 5, shoulder);
    seq.set_body_joint(t, 6, elbow);
    seq.set_body_joint(t, 7, wrist);
    for (int j = 8; j < cfg.skel.body_joints; ++j)
      seq.set_body_joint(t, j, pelvis + Vec3(0, 0.05 * (j - 7), 0));
  }

  DatasetSequence out;
  out.seq = std::move(seq);
  out.labels = derive_labels(out.seq, geom, cfg.skel);
  out.task_label = task;
  out.object_id = object_id;
  return out;
}

}  // namespace

GeneratedData generate(const GeneratorConfig& cfg) {
  cfg.validate();
  GeneratedData data;
  data.library = make_object_library(cfg);

  std::vector<std::optional<DatasetSequence>> produced(cfg.n_sequences);
  std::vector<int> skip_flags(cfg.n_sequences, 0);
  parallel_for(cfg.n_sequences, [&](int64_t i) {
    produced[i] = synthesize(cfg, data.library,
                             mix_seed(cfg.seed, 0x736571ull, static_cast<uint64_t>(i)),
                             &skip_flags[i]);
  });

  data.dataset.task_vocab = cfg.tasks;
  data.dataset.skel = cfg.skel;
  data.dataset.fps = cfg.fps;
  data.dataset.generator_seed = cfg.seed;
  for (int i = 0; i < cfg.n_sequences; ++i) {
    if (produced[i])
      data.dataset.sequences.push_back(std::move(*produced[i]));
    else
      ++data.skipped;
  }
  if (data.skipped > 0)
    std::cerr << "generate: skipped " << data.skipped
              << " sequence(s): object larger than the agent's reach\n";
  if (data.dataset.sequences.empty()) throw ConfigError("generate: every sequence was infeasible");
  return data;
}

SplitMode split_mode_from_name(const std::string& s) {
  if (s == "by_sequence") return SplitMode::BySequence;
  if (s == "by_object") return SplitMode::ByObject;
  if (s == "by_category") return SplitMode::ByCategory;
  throw ConfigError("unknown split mode: " + s);
}

const char* split_mode_name(SplitMode m) {
  switch (m) {
    case SplitMode::BySequence: return "by_sequence";
    case SplitMode::ByObject: return "by_object";
    case SplitMode::ByCategory: return "by_category";
  }
  return "?";
}

std::vector<std::vector<int>> split(const Dataset& ds, const ObjectLibrary& lib,
                                    const std::vector<Real>& ratios, SplitMode mode,
                                    uint64_t seed) {
  if (ratios.size() < 2) throw ConfigError("split: need at least two ratios");
  Real sum = 0;
  for (Real r : ratios) {
    if (!(r > 0)) throw ConfigError("split: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");

  Rng rng(mix_seed(seed, 0x73706c6974ull));
  auto shuffled = [&](int n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.uniform_int(0, i)]);
    return idx;
  };
  auto partition_points = [&](int n) {
    std::vector<int> cuts;
    Real acc = 0;
    for (size_t p = 0; p + 1 < ratios.size(); ++p) {
      acc += ratios[p];
      cuts.push_back(static_cast<int>(std::round(acc * n)));
    }
    cuts.push_back(n);
    return cuts;
  };

  std::vector<std::vector<int>> parts(ratios.size());
  switch (mode) {
    case SplitMode::BySequence: {
      const auto idx = shuffled(static_cast<int>(ds.sequences.size()));
      const auto cuts = partition_points(static_cast<int>(idx.size()));
      int from = 0;
      for (size_t p = 0; p < ratios.size(); ++p) {
        for (int i = from; i < cuts[p]; ++i) parts[p].push_back(idx[i]);
        std::sort(parts[p].begin(), parts[p].end());
        from = cuts[p];
      }
      break;
    }
    case SplitMode::ByObject: {
      const auto obj_idx = shuffled(static_cast<int>(lib.objects.size()));
      const auto cuts = partition_points(static_cast<int>(obj_idx.size()));
      std::vector<int> part_of(lib.objects.size());
      int from = 0;
      for (size_t p = 0; p < ratios.size(); ++p) {
        for (int i = from; i < cuts[p]; ++i) part_of[obj_idx[i]] = static_cast<int>(p);
        from = cuts[p];
      }
      for (size_t s = 0; s < ds.sequences.size(); ++s)
        parts[part_of[ds.sequences[s].object_id]].push_back(static_cast<int>(s));
      break;
    }
    case SplitMode::ByCategory: {
      const auto cats = lib.categories();
      if (cats.size() < ratios.size())
        throw ConfigError("split: fewer categories than requested parts");
      const auto cat_idx = shuffled(static_cast<int>(cats.size()));
      const auto cuts = partition_points(static_cast<int>(cats.size()));
      std::vector<int> part_of_cat(cats.size());
      int from = 0;
      for (size_t p = 0; p < ratios.size(); ++p) {
        for (int i = from; i < cuts[p]; ++i) part_of_cat[cat_idx[i]] = static_cast<int>(p);
        from = cuts[p];
      }
      auto cat_of = [&](const std::string& c) {
        return static_cast<int>(std::find(cats.begin(), cats.end(), c) - cats.begin());
      };
      for (size_t s = 0; s < ds.sequences.size(); ++s) {
        const auto& cat = lib.by_id(ds.sequences[s].object_id).category;
        parts[part_of_cat[cat_of(cat)]].push_back(static_cast<int>(s));
      }
      break;
    }
  }
  return parts;
}

}  // namespace paceguide
