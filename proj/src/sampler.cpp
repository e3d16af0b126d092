#include "paceguide/sampler.hpp"

namespace paceguide {

void GuidanceConfig::validate(int K) const {
  if (!(omega1 >= 0) || !(omega2 >= 0)) throw ConfigError("guidance weights must be >= 0");
  if (delta < 0 || delta > K) throw ConfigError("delta must be in [0, K]");
  validate_partition(partition);
}

TokenGrid NoiseStream::init_noise() const {
  Rng rng(mix_seed(seed_, 0x696e6974ull));  // "init"
  return TokenGrid::gaussian(T_, skel_, rng);
}

TokenGrid NoiseStream::renoise_eps(int target_level) const {
  Rng rng(mix_seed(seed_, 0x657073ull, static_cast<uint64_t>(target_level)));  // "eps"
  return TokenGrid::gaussian(T_, skel_, rng);
}

const TokenGrid& UniformTrajectory::at_level(int k) const {
  if (k < 0 || k >= static_cast<int>(states.size()))
    throw RangeError("uniform trajectory has no state at level " + std::to_string(k));
  return states[static_cast<size_t>(k)];
}

std::pair<TokenGrid, TokenGrid> uniform_step(const DenoiserInterface& G,
                                             const NoiseSchedule& sched, const TokenGrid& x,
                                             int k, const ConditionBundle& cond, Real omega1,
                                             const TokenGrid& eps) {
  if (k < 1) throw RangeError("uniform_step: k must be >= 1");
  const ModalityNoiseLevels lam = ModalityNoiseLevels::uniform(k);
  TokenGrid x_tilde = G.predict(x, lam, cond);
  if (omega1 != 0.0) {
    ConditionBundle null_cond = cond;
    null_cond.is_null = true;
    const TokenGrid null_pred = G.predict(x, lam, null_cond);
    x_tilde = x_tilde + (x_tilde - null_pred) * omega1;
  }
  TokenGrid x_next = sched.renoise(x_tilde, ModalityNoiseLevels::uniform(k - 1), eps);
  return {std::move(x_tilde), std::move(x_next)};
}

UniformTrajectory run_uniform(const DenoiserInterface& G, const NoiseSchedule& sched,
                              const TokenGrid& init_noise, const ConditionBundle& cond,
                              Real omega1, const NoiseStream& noise) {
  const int K = sched.steps();
  UniformTrajectory traj;
  traj.states.resize(K + 1);
  traj.states[K] = init_noise;
  TokenGrid x = init_noise;
  for (int k = K; k >= 1; --k) {
    auto [x_tilde, x_next] = uniform_step(G, sched, x, k, cond, omega1, noise.renoise_eps(k - 1));
    if (!x_next.all_finite())
      throw NumericError("uniform pass produced non-finite state at level " + std::to_string(k - 1));
    traj.states[k - 1] = x_next;
    x = std::move(x_next);
  }
  return traj;
}

std::pair<TokenGrid, ModalityNoiseLevels> staged_merge(const UniformTrajectory& traj,
                                                       const TokenGrid& x_S, int k,
                                                       const GuidanceConfig& cfg) {
  if (k - cfg.delta < 0)
    throw RangeError("staged_merge: k - delta < 0; the step must take the unguided branch");
  const TokenGrid& lead = traj.at_level(k - cfg.delta);
  TokenGrid merged = x_S;
  ModalityNoiseLevels lam_prime = ModalityNoiseLevels::uniform(k);
  for (Modality m : kAllModalities) {
    if (cfg.partition.in_m1(m)) {
      merged.channel(m) = lead.channel(m);
      switch (m) {
        case Modality::Body: lam_prime.body = k - cfg.delta; break;
        case Modality::Hand: lam_prime.hand = k - cfg.delta; break;
        case Modality::Object: lam_prime.object = k - cfg.delta; break;
      }
    }
  }
  return {std::move(merged), lam_prime};
}

std::pair<TokenGrid, TokenGrid> staged_step(const DenoiserInterface& G,
                                            const NoiseSchedule& sched, const TokenGrid& x_S,
                                            int k, const ConditionBundle& cond,
                                            const GuidanceConfig& cfg,
                                            const UniformTrajectory& traj, const TokenGrid& eps,
                                            const StagedObserver* observer) {
  if (k < 1) throw RangeError("staged_step: k must be >= 1");
  const ModalityNoiseLevels lam = ModalityNoiseLevels::uniform(k);
  const TokenGrid cond_pred = G.predict(x_S, lam, cond);

  ConditionBundle null_cond = cond;
  null_cond.is_null = true;
  TokenGrid null_pred;
  const bool want_null = cfg.omega1 != 0.0 || observer != nullptr;
  if (want_null) null_pred = G.predict(x_S, lam, null_cond);

  const bool guided = (k - cfg.delta >= 0) && cfg.omega2 != 0.0;
  const bool merged_wanted = (k - cfg.delta >= 0) && (cfg.omega2 != 0.0 || observer != nullptr);
  TokenGrid merged_pred;
  if (merged_wanted) {
    auto [x_prime, lam_prime] = staged_merge(traj, x_S, k, cfg);
    merged_pred = G.predict(x_prime, lam_prime, cond);
  }

  TokenGrid x_tilde = cond_pred;
  if (cfg.omega1 != 0.0) x_tilde = x_tilde + (cond_pred - null_pred) * cfg.omega1;
  if (guided) x_tilde = x_tilde + (merged_pred - cond_pred) * cfg.omega2;

  if (observer) {
    StagedStepRecord rec;
    rec.k = k;
    rec.guided = merged_wanted;
    rec.x_state = &x_S;
    rec.cond_pred = &cond_pred;
    rec.null_pred = &null_pred;
    rec.merged_pred = merged_wanted ? &merged_pred : nullptr;
    (*observer)(rec);
  }

  TokenGrid x_next = sched.renoise(x_tilde, ModalityNoiseLevels::uniform(k - 1), eps);
  return {std::move(x_tilde), std::move(x_next)};
}

GuidedResult run_guided_grids(const DenoiserInterface& G, const NoiseSchedule& sched,
                              const SkeletonConfig& skel, int T, const ConditionBundle& cond,
                              const GuidanceConfig& cfg, uint64_t seed,
                              const StagedObserver* observer) {
  const int K = sched.steps();
  cfg.validate(K);
  NoiseStream noise(seed, T, skel);
  const TokenGrid init = noise.init_noise();
  GuidedResult result;
  result.uniform = run_uniform(G, sched, init, cond, cfg.omega1, noise);

  TokenGrid x = init;
  for (int k = K; k >= 1; --k) {
    auto [x_tilde, x_next] =
        staged_step(G, sched, x, k, cond, cfg, result.uniform, noise.renoise_eps(k - 1), observer);
    if (!x_next.all_finite())
      throw NumericError("staged pass produced non-finite state at level " + std::to_string(k - 1));
    x = std::move(x_next);
  }
  result.final_grid = std::move(x);
  return result;
}

HOISequence run_guided(const DenoiserInterface& G, const NoiseSchedule& sched,
                       const SkeletonConfig& skel, int T, const ConditionBundle& cond,
                       const GuidanceConfig& cfg, uint64_t seed, Real fps) {
  GuidedResult r = run_guided_grids(G, sched, skel, T, cond, cfg, seed);
  return unpack(r.final_grid, skel, fps);
}

TokenGrid run_uniform_sample(const DenoiserInterface& G, const NoiseSchedule& sched,
                             const SkeletonConfig& skel, int T, const ConditionBundle& cond,
                             Real omega1, uint64_t seed) {
  NoiseStream noise(seed, T, skel);
  UniformTrajectory traj = run_uniform(G, sched, noise.init_noise(), cond, omega1, noise);
  return traj.at_level(0);
}

}  // namespace paceguide
