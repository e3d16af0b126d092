#pragma once

#include "paceguide/dataset.hpp"
#include "paceguide/geometry.hpp"

#include <string>
#include <vector>

namespace paceguide {

/// Desk-scale corpus generator: a toy kinematic agent performs labelled
/// manipulation tasks on parametric objects; contact and foot-contact labels
/// are re-derived from the produced geometry so they match the metric stack
/// exactly.
struct GeneratorConfig {
  int n_sequences = 512;
  int frames = 60;
  Real fps = 30.0;
  std::vector<std::string> tasks = {"pick-up", "push", "lift-carry", "rotate"};
  int n_objects = 12;
  int points_per_object = 96;
  uint64_t seed = 0;
  SkeletonConfig skel;
  // Dimension ranges per family (full extents for boxes, (r, h) for
  // cylinders, semi-axes for ellipsoids).
  Real box_min = 0.10, box_max = 0.24;
  Real cyl_r_min = 0.05, cyl_r_max = 0.09;
  Real cyl_h_min = 0.14, cyl_h_max = 0.26;
  Real ell_min = 0.06, ell_max = 0.11;
  Real max_reach = 0.45;  // objects larger than this are skipped

  void validate() const;
};

struct GeneratedData {
  Dataset dataset;
  ObjectLibrary library;
  int skipped = 0;  // infeasible object draws
};

GeneratedData generate(const GeneratorConfig& cfg);

/// The object library alone (shared with the geometry tooling).
ObjectLibrary make_object_library(const GeneratorConfig& cfg);

enum class SplitMode { BySequence, ByObject, ByCategory };
SplitMode split_mode_from_name(const std::string& s);
const char* split_mode_name(SplitMode m);

/// Deterministic index split. Ratios must sum to 1; ByObject/ByCategory
/// produce object- and category-disjoint parts.
std::vector<std::vector<int>> split(const Dataset& ds, const ObjectLibrary& lib,
                                    const std::vector<Real>& ratios, SplitMode mode,
                                    uint64_t seed);

}  // namespace paceguide
