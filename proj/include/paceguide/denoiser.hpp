#pragma once

#include "paceguide/nn.hpp"
#include "paceguide/schedule.hpp"
#include "paceguide/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace paceguide {

struct DenoiserConfig {
  int layers = 4;
  int model_dim = 128;
  int ffn_dim = 256;
  int heads = 4;
  Real condition_dropout_prob = 0.1;
  // Width of externally supplied condition token rows (pluggable text
  // encoder hook). The internal vocabulary table bypasses this projection.
  int external_cond_dim = 32;

  static DenoiserConfig desk() { return DenoiserConfig{}; }
  static DenoiserConfig paper() { return DenoiserConfig{8, 512, 1024, 8, 0.1, 32}; }
  /// Small config for the training smoke runs and the end-to-end demo.
  static DenoiserConfig micro() { return DenoiserConfig{2, 64, 128, 4, 0.1, 32}; }
  static DenoiserConfig preset(const std::string& name);

  void validate() const;
  bool operator==(const DenoiserConfig& o) const = default;
};

/// Condition inputs for one sequence. Labels normally come from the learned
/// vocabulary table (task labels at desk scale); `external_tokens` is the
/// hook for a real text encoder and is used instead when `use_external` is
/// set. The geometry feature is always present and is never dropped.
struct ConditionBundle {
  std::vector<int> label_ids;
  Mat external_tokens;  // L x external_cond_dim
  bool use_external = false;
  Vec geometry;  // bps_raw ++ bps_norm ++ scale
  bool is_null = false;
};

/// With probability p returns the bundle with is_null set; the geometry
/// token is kept either way.
ConditionBundle drop_condition(const ConditionBundle& cond, Rng& rng, Real p);

/// The shared x0-prediction network: transformer decoder over the
/// body/hand/object token grid with noise-level and modality encodings,
/// rotary frame encoding inside self-attention, and condition tokens
/// (labels + object geometry) injected through cross-attention.
class Denoiser {
 public:
  Denoiser(DenoiserConfig cfg, SkeletonConfig skel, int vocab_size, int geometry_dim,
           uint64_t init_seed);

  const DenoiserConfig& config() const { return cfg_; }
  const SkeletonConfig& skeleton() const { return skel_; }
  int vocab_size() const { return vocab_size_; }
  int geometry_dim() const { return geometry_dim_; }

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  struct Workspace;  // forward activations for one sequence

  /// Clean-data prediction x0_hat = G(x_lam, lam, cond). Deterministic given
  /// fixed weights. Pass a workspace to keep activations for backward().
  TokenGrid forward(const TokenGrid& x_lam, const ModalityNoiseLevels& lam,
                    const ConditionBundle& cond, Workspace* ws = nullptr) const;

  /// Accumulates parameter gradients for dL/d(prediction) recorded against
  /// the workspace of a previous forward call.
  void backward(const Workspace& ws, const TokenGrid& dpred, nn::GradBuffer& gb) const;

  /// Additive noise-level embeddings as one row per modality (broadcast over
  /// frames by the forward pass).
  Mat embed_levels(const ModalityNoiseLevels& lam) const;
  Vec noise_level_embedding(int k) const;

  Workspace make_workspace() const;

 private:
  Mat condition_tokens(const ConditionBundle& cond, Workspace* ws) const;

  DenoiserConfig cfg_;
  SkeletonConfig skel_;
  int vocab_size_;
  int geometry_dim_;

  nn::ParamStore ps_;
  std::array<nn::Linear, 3> in_proj_;
  std::array<nn::Linear, 3> out_proj_;
  int modality_emb_ = -1;  // 3 x D
  nn::Linear noise_fc1_, noise_fc2_;
  int label_table_ = -1;  // vocab x D
  int null_token_ = -1;   // 1 x D
  nn::Linear ext_proj_;
  nn::Linear geom_fc1_, geom_fc2_;
  std::vector<nn::DecoderLayer> layers_;
  nn::LayerNorm final_ln_;
};

struct Denoiser::Workspace {
  // motion token assembly
  TokenGrid x_in;
  ModalityNoiseLevels lam;
  std::array<Vec, 3> noise_sin;     // sinusoidal embedding per modality
  std::array<Mat, 3> noise_h1_pre;  // noise MLP hidden pre-activation (1 x D)
  Mat noise_emb;                    // 3 x D
  // condition assembly
  ConditionBundle cond;
  Mat geom_h1_pre;  // 1 x D
  Mat cond_tokens;  // C x D
  Mat tokens;       // (3T) x D entering the decoder stack
  std::vector<int> frames;
  std::vector<nn::DecoderLayer::Cache> layer_caches;
  std::vector<Mat> layer_inputs;
  nn::LayerNorm::Cache final_ln_cache;
  Mat final_out;  // after final layer norm
};

// ---------------------------------------------------------------------------
// Checkpointing

struct CheckpointMeta {
  int format_version = 1;
  DenoiserConfig config;
  SkeletonConfig skeleton;
  ScheduleFamily schedule_family = ScheduleFamily::Cosine;
  int schedule_steps = 100;
  uint64_t schedule_table_hash = 0;
  std::vector<std::string> vocabulary;
  int bps_count = 64;
  uint64_t bps_seed = 0;
  int geometry_dim = 0;
  uint64_t init_seed = 0;
  int64_t trained_steps = 0;
};

void save_checkpoint(const std::string& path, const Denoiser& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<Denoiser> model;
  CheckpointMeta meta;
  NoiseSchedule schedule() const {
    NoiseSchedule s = NoiseSchedule::make(meta.schedule_family, meta.schedule_steps);
    if (s.table_hash() != meta.schedule_table_hash)
      throw IoError("checkpoint schedule table hash mismatch");
    return s;
  }
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace paceguide
