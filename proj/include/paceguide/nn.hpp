#pragma once

#include "paceguide/common.hpp"

#include <string>
#include <vector>

namespace paceguide::nn {

/// Flat registry of named parameter matrices. Layers hold integer handles;
/// gradients live in a separate buffer with the same layout so training can
/// run one worker per sequence and reduce afterwards.
class ParamStore {
 public:
  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Mat& value(int h) { return entries_[h].value; }
  const Mat& value(int h) const { return entries_[h].value; }
  const std::string& name(int h) const { return entries_[h].name; }
  /// Handle of a named parameter; throws if absent.
  int find(const std::string& name) const;
  int count() const { return static_cast<int>(entries_.size()); }
  Eigen::Index total_scalars() const;
  bool all_finite() const;

 private:
  struct Entry {
    std::string name;
    Mat value;
  };
  std::vector<Entry> entries_;
};

struct GradBuffer {
  std::vector<Mat> grads;

  void init(const ParamStore& ps);
  void zero();
  Mat& operator[](int h) { return grads[h]; }
  const Mat& operator[](int h) const { return grads[h]; }
  void accumulate(const GradBuffer& other);
  void scale(Real s);
};

// ---------------------------------------------------------------------------

Real gelu(Real x);
Real gelu_grad(Real x);

/// Standard sinusoidal position/step embedding of an integer index.
Vec sinusoidal_embedding(Real pos, int dim);

// ---------------------------------------------------------------------------

struct Linear {
  int w = -1, b = -1;
  int in = 0, out = 0;

  static Linear create(ParamStore& ps, const std::string& name, int in, int out);
  void init(ParamStore& ps, Rng& rng) const;

  Mat forward(const ParamStore& ps, const Mat& x) const;
  /// dx from dy; accumulates dW, db.
  Mat backward(const ParamStore& ps, const Mat& x, const Mat& dy, GradBuffer& gb) const;
};

struct LayerNorm {
  int gamma = -1, beta = -1;
  int dim = 0;

  struct Cache {
    Mat xhat;
    Vec inv_std;
  };

  static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
  void init(ParamStore& ps) const;

  Mat forward(const ParamStore& ps, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& ps, const Cache& cache, const Mat& dy, GradBuffer& gb) const;
};

/// Multi-head attention. Queries come from `xq`, keys/values from `xkv`
/// (self-attention passes the same matrix). With `rotary` enabled, queries
/// and keys are rotated per head by angles derived from per-token frame
/// indices before the score product.
struct Attention {
  Linear wq, wk, wv, wo;
  int heads = 0;
  int dim = 0;
  bool rotary = false;

  struct Cache {
    Mat xq, xkv;
    Mat q, k, v;              // post-projection; q,k post-rotary
    std::vector<Mat> attn;    // per-head row-softmax (Tq x Tk)
    Mat concat;               // heads' outputs side by side (Tq x dim)
  };

  static Attention create(ParamStore& ps, const std::string& name, int dim, int heads,
                          bool rotary);
  void init(ParamStore& ps, Rng& rng) const;

  Mat forward(const ParamStore& ps, const Mat& xq, const Mat& xkv,
              const std::vector<int>& q_frames, const std::vector<int>& kv_frames,
              Cache* cache) const;
  /// Computes dxq and accumulates dxkv (+=) for the shared-input self case.
  Mat backward(const ParamStore& ps, const Cache& cache, const Mat& dy,
               const std::vector<int>& q_frames, const std::vector<int>& kv_frames, Mat& dxkv,
               GradBuffer& gb) const;
};

struct FeedForward {
  Linear fc1, fc2;

  struct Cache {
    Mat x;
    Mat h_pre;  // pre-activation
  };

  static FeedForward create(ParamStore& ps, const std::string& name, int dim, int hidden);
  void init(ParamStore& ps, Rng& rng) const;

  Mat forward(const ParamStore& ps, const Mat& x, Cache* cache) const;
  Mat backward(const ParamStore& ps, const Cache& cache, const Mat& dy, GradBuffer& gb) const;
};

/// Pre-LN transformer decoder block: self-attention over motion tokens,
/// cross-attention into condition tokens, feed-forward.
struct DecoderLayer {
  LayerNorm ln1, ln2, ln3;
  Attention self_attn, cross_attn;
  FeedForward ffn;

  struct Cache {
    LayerNorm::Cache ln1c, ln2c, ln3c;
    Attention::Cache selfc, crossc;
    FeedForward::Cache ffnc;
    Mat x1, x2;  // residual stream entering cross-attn / ffn
  };

  static DecoderLayer create(ParamStore& ps, const std::string& name, int dim, int ffn_dim,
                             int heads);
  void init(ParamStore& ps, Rng& rng) const;

  Mat forward(const ParamStore& ps, const Mat& x, const Mat& cond,
              const std::vector<int>& frames, Cache* cache) const;
  /// Returns dx; accumulates dcond.
  Mat backward(const ParamStore& ps, const Cache& cache, const Mat& dy,
               const std::vector<int>& frames, Mat& dcond, GradBuffer& gb) const;
};

class Adam {
 public:
  explicit Adam(Real lr = 1e-4, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& ps, const GradBuffer& gb);
  int64_t steps() const { return t_; }
  Real learning_rate() const { return lr_; }

 private:
  Real lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace paceguide::nn
