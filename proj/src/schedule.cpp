#include "paceguide/schedule.hpp"

#include <cmath>
#include <sstream>

namespace paceguide {

const char* schedule_family_name(ScheduleFamily f) {
  return f == ScheduleFamily::Cosine ? "cosine" : "linear";
}

ScheduleFamily schedule_family_from_name(const std::string& s) {
  if (s == "cosine") return ScheduleFamily::Cosine;
  if (s == "linear") return ScheduleFamily::Linear;
  throw ConfigError("unknown schedule family: " + s);
}

int ModalityNoiseLevels::level(Modality m) const {
  switch (m) {
    case Modality::Body: return body;
    case Modality::Hand: return hand;
    default: return object;
  }
}

NoiseSchedule::NoiseSchedule(ScheduleFamily family, int K, Vec alpha_bar)
    : family_(family), K_(K), alpha_bar_(std::move(alpha_bar)) {
  if (K_ < 1) throw ConfigError("schedule needs K >= 1");
  if (alpha_bar_.size() != K_ + 1) throw ConfigError("schedule table has wrong length");
  if (alpha_bar_(0) != 1.0) throw ConfigError("alpha_bar(0) must be 1");
  for (int k = 1; k <= K_; ++k) {
    if (!(alpha_bar_(k) > 0.0 && alpha_bar_(k) < alpha_bar_(k - 1)))
      throw ConfigError("alpha_bar must be strictly decreasing and positive");
  }
  if (!(alpha_bar_(K_) < 1e-3)) throw ConfigError("alpha_bar(K) must be below 1e-3");
}

NoiseSchedule NoiseSchedule::cosine(int K) {
  // Squared-cosine schedule with the usual small offset; the terminal value
  // is floored to keep the table positive.
  const Real s = 0.008;
  Vec ab(K + 1);
  const Real f0 = std::pow(std::cos(s / (1 + s) * M_PI / 2), 2);
  Real prev = 1.0;
  for (int k = 0; k <= K; ++k) {
    Real f = std::pow(std::cos((Real(k) / K + s) / (1 + s) * M_PI / 2), 2) / f0;
    f = std::max(f, Real(1e-7));
    if (k == 0)
      f = 1.0;
    else
      f = std::min(f, prev * (1.0 - 1e-9));
    ab(k) = f;
    prev = f;
  }
  return NoiseSchedule(ScheduleFamily::Cosine, K, std::move(ab));
}

NoiseSchedule NoiseSchedule::linear(int K) {
  // Linear betas, rescaled from the reference 1000-step range so that the
  // terminal alpha_bar stays small for any K.
  const Real scale = 1000.0 / K;
  const Real beta_start = 1e-4 * scale;
  const Real beta_end = std::min(0.999, 0.02 * scale);
  Vec ab(K + 1);
  ab(0) = 1.0;
  Real acc = 1.0;
  for (int k = 1; k <= K; ++k) {
    const Real beta = beta_start + (beta_end - beta_start) * Real(k - 1) / std::max(1, K - 1);
    acc *= (1.0 - beta);
    ab(k) = std::max(acc, Real(1e-9));
  }
  return NoiseSchedule(ScheduleFamily::Linear, K, std::move(ab));
}

NoiseSchedule NoiseSchedule::make(ScheduleFamily f, int K) {
  return f == ScheduleFamily::Cosine ? cosine(K) : linear(K);
}

void NoiseSchedule::check_level(int k, const char* what) const {
  if (k < 0 || k > K_) {
    std::ostringstream os;
    os << what << ": noise level " << k << " outside [0, " << K_ << "]";
    throw RangeError(os.str());
  }
}

Real NoiseSchedule::alpha_bar(int k) const {
  check_level(k, "alpha_bar");
  return alpha_bar_(k);
}

TokenGrid NoiseSchedule::corrupt(const TokenGrid& x0, const ModalityNoiseLevels& lam,
                                 const TokenGrid& eps) const {
  if (!x0.same_shape(eps)) throw ShapeError("corrupt: eps shape differs from x0");
  TokenGrid out = x0;
  for (Modality m : kAllModalities) {
    const int k = lam.level(m);
    check_level(k, "corrupt");
    if (k == 0) continue;  // alpha_bar(0) == 1 exactly; keep the channel bit-identical
    out.channel(m) = signal_scale(k) * x0.channel(m) + noise_scale(k) * eps.channel(m);
  }
  return out;
}

TokenGrid NoiseSchedule::renoise(const TokenGrid& x0_pred, const ModalityNoiseLevels& lam_minus_1,
                                 const TokenGrid& eps) const {
  for (Modality m : kAllModalities)
    if (lam_minus_1.level(m) < 0) throw RangeError("renoise: negative noise level");
  return corrupt(x0_pred, lam_minus_1, eps);
}

ModalityNoiseLevels NoiseSchedule::sample_training_levels(Rng& rng) const {
  ModalityNoiseLevels lam;
  lam.body = static_cast<int>(rng.uniform_int(0, K_));
  lam.hand = static_cast<int>(rng.uniform_int(0, K_));
  lam.object = static_cast<int>(rng.uniform_int(0, K_));
  return lam;
}

uint64_t NoiseSchedule::table_hash() const {
  uint64_t h = fnv1a(alpha_bar_.data(), sizeof(Real) * alpha_bar_.size());
  const int fam = static_cast<int>(family_);
  h = fnv1a(&fam, sizeof(fam), h);
  h = fnv1a(&K_, sizeof(K_), h);
  return h;
}

}  // namespace paceguide
