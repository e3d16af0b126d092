#pragma once

#include "paceguide/denoiser.hpp"
#include "paceguide/schedule.hpp"
#include "paceguide/types.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace paceguide {

/// Sampling-time denoiser abstraction. The trained transformer implements
/// it; closed-form oracles (e.g. the Gaussian toy used to validate the
/// sampler statistics) plug in the same way.
class DenoiserInterface {
 public:
  virtual ~DenoiserInterface() = default;
  virtual TokenGrid predict(const TokenGrid& x, const ModalityNoiseLevels& lam,
                            const ConditionBundle& cond) const = 0;
};

class ModelDenoiser final : public DenoiserInterface {
 public:
  explicit ModelDenoiser(const Denoiser& model) : model_(&model) {}
  TokenGrid predict(const TokenGrid& x, const ModalityNoiseLevels& lam,
                    const ConditionBundle& cond) const override {
    return model_->forward(x, lam, cond);
  }

 private:
  const Denoiser* model_;
};

struct GuidanceConfig {
  Real omega1 = 0.5;  // text CFG weight
  Real omega2 = 3.0;  // pace-guidance weight
  int delta = 50;     // lag offset in denoising steps
  ModalityPartition partition = ModalityPartition::parse("bh|o");

  void validate(int K) const;
};

/// Per-step re-noising noise shared between the two passes: both passes draw
/// the eps targeting level k from the same (seed, k)-keyed stream, and the
/// initial noise from a dedicated key. Sharing the per-step draws (not just
/// the initial noise) is what makes the delta -> 0 collapse exact.
class NoiseStream {
 public:
  NoiseStream(uint64_t seed, int T, SkeletonConfig skel) : seed_(seed), T_(T), skel_(skel) {}
  TokenGrid init_noise() const;
  TokenGrid renoise_eps(int target_level) const;

 private:
  uint64_t seed_;
  int T_;
  SkeletonConfig skel_;
};

/// All post-renoise states of the uniform pass, indexed by level:
/// at_level(K) is the shared initial noise, at_level(0) the final sample.
struct UniformTrajectory {
  std::vector<TokenGrid> states;

  int steps() const { return static_cast<int>(states.size()) - 1; }
  const TokenGrid& at_level(int k) const;
};

/// One uniform-schedule step at level k: CFG-combined clean prediction, then
/// re-noised to k-1 with the provided eps. Returns (x_tilde, x_next).
std::pair<TokenGrid, TokenGrid> uniform_step(const DenoiserInterface& G,
                                             const NoiseSchedule& sched, const TokenGrid& x,
                                             int k, const ConditionBundle& cond, Real omega1,
                                             const TokenGrid& eps);

/// Full uniform rollout from the initial noise, recording every post-renoise
/// state. Aborts with NumericError on non-finite states.
UniformTrajectory run_uniform(const DenoiserInterface& G, const NoiseSchedule& sched,
                              const TokenGrid& init_noise, const ConditionBundle& cond,
                              Real omega1, const NoiseStream& noise);

/// Merged conditional input for the staged pass at level k: m1 channels come
/// from the recorded uniform trajectory at level k-delta, m2 channels from
/// the staged state. Requires k - delta >= 0 (the caller takes the unguided
/// branch otherwise).
std::pair<TokenGrid, ModalityNoiseLevels> staged_merge(const UniformTrajectory& traj,
                                                       const TokenGrid& x_S, int k,
                                                       const GuidanceConfig& cfg);

/// Observer for guidance diagnostics. merged_pred is only valid when
/// `guided` is set. null_pred is always computed when an observer is
/// attached.
struct StagedStepRecord {
  int k = 0;
  bool guided = false;
  const TokenGrid* x_state = nullptr;
  const TokenGrid* cond_pred = nullptr;
  const TokenGrid* null_pred = nullptr;
  const TokenGrid* merged_pred = nullptr;
};
using StagedObserver = std::function<void(const StagedStepRecord&)>;

/// One staged-schedule step at level k. Applies pace-induced guidance when
/// k >= delta (three forwards), otherwise plain CFG only.
std::pair<TokenGrid, TokenGrid> staged_step(const DenoiserInterface& G,
                                            const NoiseSchedule& sched, const TokenGrid& x_S,
                                            int k, const ConditionBundle& cond,
                                            const GuidanceConfig& cfg,
                                            const UniformTrajectory& traj, const TokenGrid& eps,
                                            const StagedObserver* observer = nullptr);

struct GuidedResult {
  TokenGrid final_grid;
  UniformTrajectory uniform;
};

/// The two-pass inference procedure: complete uniform rollout first, then
/// the staged pass guided by the recorded trajectory; both passes share the
/// initial noise and the per-step renoising draws.
GuidedResult run_guided_grids(const DenoiserInterface& G, const NoiseSchedule& sched,
                              const SkeletonConfig& skel, int T, const ConditionBundle& cond,
                              const GuidanceConfig& cfg, uint64_t seed,
                              const StagedObserver* observer = nullptr);

HOISequence run_guided(const DenoiserInterface& G, const NoiseSchedule& sched,
                       const SkeletonConfig& skel, int T, const ConditionBundle& cond,
                       const GuidanceConfig& cfg, uint64_t seed, Real fps = 30.0);

/// Uniform-only sampling with the same noise stream (the no-guidance
/// baseline; identical to run_guided with omega2 = 0 or delta = 0).
TokenGrid run_uniform_sample(const DenoiserInterface& G, const NoiseSchedule& sched,
                             const SkeletonConfig& skel, int T, const ConditionBundle& cond,
                             Real omega1, uint64_t seed);

}  // namespace paceguide
