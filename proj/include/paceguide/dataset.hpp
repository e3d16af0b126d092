#pragma once

#include "paceguide/training.hpp"
#include "paceguide/types.hpp"

#include <string>
#include <vector>

namespace paceguide {

/// One stored interaction clip with its supervision and conditioning.
struct DatasetSequence {
  HOISequence seq;
  SupervisionLabels labels;
  int task_label = 0;
  int object_id = 0;
};

/// In-memory dataset bundle. On disk this is a single binary array file plus
/// a JSON sidecar carrying shapes, fps, vocab and the generator seed.
struct Dataset {
  std::vector<DatasetSequence> sequences;
  std::vector<std::string> task_vocab;
  SkeletonConfig skel;
  Real fps = 30.0;
  uint64_t generator_seed = 0;

  int frames() const { return sequences.empty() ? 0 : sequences.front().seq.frames(); }
  void validate() const;
  std::vector<TrainingExample> training_examples() const;
};

/// Writes `path` (binary bundle) and `path.json` (sidecar). Identical
/// datasets produce byte-identical files.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace paceguide
