#pragma once

#include "paceguide/types.hpp"

namespace paceguide {

enum class ScheduleFamily { Cosine, Linear };

const char* schedule_family_name(ScheduleFamily f);
ScheduleFamily schedule_family_from_name(const std::string& s);

/// Per-modality integer noise levels, shared by all frames of a modality.
struct ModalityNoiseLevels {
  int body = 0;
  int hand = 0;
  int object = 0;

  int level(Modality m) const;
  static ModalityNoiseLevels uniform(int k) { return {k, k, k}; }
  ModalityNoiseLevels minus(int d) const { return {body - d, hand - d, object - d}; }
  bool operator==(const ModalityNoiseLevels& o) const {
    return body == o.body && hand == o.hand && object == o.object;
  }
};

/// Cumulative schedule alpha_bar over K+1 integer levels. alpha_bar(0) = 1,
/// strictly decreasing, alpha_bar(K) < 1e-3, all values in (0, 1].
class NoiseSchedule {
 public:
  static NoiseSchedule cosine(int K);
  static NoiseSchedule linear(int K);
  static NoiseSchedule make(ScheduleFamily f, int K);

  int steps() const { return K_; }
  ScheduleFamily family() const { return family_; }
  Real alpha_bar(int k) const;
  Real signal_scale(int k) const { return std::sqrt(alpha_bar(k)); }
  Real noise_scale(int k) const { return std::sqrt(1.0 - alpha_bar(k)); }

  /// Corrupts each modality channel at its own level:
  /// out_m = sqrt(abar(lam_m)) * x_m + sqrt(1 - abar(lam_m)) * eps_m.
  TokenGrid corrupt(const TokenGrid& x0, const ModalityNoiseLevels& lam,
                    const TokenGrid& eps) const;

  /// Adds noise back onto a clean prediction at level lam-1; definitionally
  /// the same operation as corrupt, kept separate because its precondition
  /// (all levels >= 0 after the decrement) is the sampler's contract.
  TokenGrid renoise(const TokenGrid& x0_pred, const ModalityNoiseLevels& lam_minus_1,
                    const TokenGrid& eps) const;

  /// Independent per-modality levels, each uniform on {0, ..., K}.
  ModalityNoiseLevels sample_training_levels(Rng& rng) const;

  /// Stable identity for checkpoints: (family, K, table hash).
  uint64_t table_hash() const;

 private:
  NoiseSchedule(ScheduleFamily family, int K, Vec alpha_bar);
  void check_level(int k, const char* what) const;

  ScheduleFamily family_;
  int K_;
  Vec alpha_bar_;  // K+1 entries
};

}  // namespace paceguide
