#include "paceguide/nn.hpp"

#include <cmath>

namespace paceguide::nn {

int ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  entries_.push_back({name, Mat::Zero(rows, cols)});
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  throw ConfigError("no parameter named " + name);
}

Eigen::Index ParamStore::total_scalars() const {
  Eigen::Index n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.allFinite()) return false;
  return true;
}

void GradBuffer::init(const ParamStore& ps) {
  grads.resize(ps.count());
  for (int h = 0; h < ps.count(); ++h)
    grads[h] = Mat::Zero(ps.value(h).rows(), ps.value(h).cols());
}

void GradBuffer::zero() {
  for (auto& g : grads) g.setZero();
}

void GradBuffer::accumulate(const GradBuffer& other) {
  for (size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
}

void GradBuffer::scale(Real s) {
  for (auto& g : grads) g *= s;
}

// ---------------------------------------------------------------------------

Real gelu(Real x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

Real gelu_grad(Real x) {
  const Real cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const Real pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

Vec sinusoidal_embedding(Real pos, int dim) {
  Vec e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const Real freq = std::pow(10000.0, -Real(i) / half);
    e(2 * i) = std::sin(pos * freq);
    e(2 * i + 1) = std::cos(pos * freq);
  }
  if (dim % 2) e(dim - 1) = 0.0;
  return e;
}

// ---------------------------------------------------------------------------

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add(name + ".w", in, out);
  l.b = ps.add(name + ".b", 1, out);
  return l;
}

void Linear::init(ParamStore& ps, Rng& rng) const {
  const Real std = std::sqrt(2.0 / (in + out));
  Mat& W = ps.value(w);
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = std * rng.normal();
  ps.value(b).setZero();
}

Mat Linear::forward(const ParamStore& ps, const Mat& x) const {
  Mat y = x * ps.value(w);
  y.rowwise() += ps.value(b).row(0);
  return y;
}

Mat Linear::backward(const ParamStore& ps, const Mat& x, const Mat& dy, GradBuffer& gb) const {
  gb[w].noalias() += x.transpose() * dy;
  gb[b].row(0) += dy.colwise().sum();
  return dy * ps.value(w).transpose();
}

// ---------------------------------------------------------------------------

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
  LayerNorm ln;
  ln.dim = dim;
  ln.gamma = ps.add(name + ".gamma", 1, dim);
  ln.beta = ps.add(name + ".beta", 1, dim);
  return ln;
}

void LayerNorm::init(ParamStore& ps) const {
  ps.value(gamma).setOnes();
  ps.value(beta).setZero();
}

Mat LayerNorm::forward(const ParamStore& ps, const Mat& x, Cache* cache) const {
  const Real eps = 1e-5;
  Mat xhat(x.rows(), x.cols());
  Vec inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Real mean = x.row(r).mean();
    const Real var = (x.row(r).array() - mean).square().mean();
    const Real is = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * is;
    inv_std(r) = is;
  }
  Mat y = xhat.array().rowwise() * ps.value(gamma).row(0).array();
  y.rowwise() += ps.value(beta).row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const ParamStore& ps, const Cache& cache, const Mat& dy,
                        GradBuffer& gb) const {
  gb[gamma].row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  gb[beta].row(0) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * ps.value(gamma).row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const Real mean_dxhat = dxhat.row(r).mean();
    const Real mean_dxhat_xhat = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_dxhat - cache.xhat.row(r).array() * mean_dxhat_xhat);
  }
  return dx;
}

// ---------------------------------------------------------------------------

Attention Attention::create(ParamStore& ps, const std::string& name, int dim, int heads,
                            bool rotary) {
  Attention a;
  a.dim = dim;
  a.heads = heads;
  a.rotary = rotary;
  a.wq = Linear::create(ps, name + ".wq", dim, dim);
  a.wk = Linear::create(ps, name + ".wk", dim, dim);
  a.wv = Linear::create(ps, name + ".wv", dim, dim);
  a.wo = Linear::create(ps, name + ".wo", dim, dim);
  return a;
}

void Attention::init(ParamStore& ps, Rng& rng) const {
  wq.init(ps, rng);
  wk.init(ps, rng);
  wv.init(ps, rng);
  wo.init(ps, rng);
}

// Rotates consecutive column pairs of each head block by frame-dependent
// angles (sign = +1) or back (sign = -1).
static void apply_rotary(Mat& m, const std::vector<int>& frames, int heads, Real sign) {
  const int dim = static_cast<int>(m.cols());
  const int dh = dim / heads;
  const int pairs = dh / 2;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Real pos = frames[static_cast<size_t>(r)];
    for (int h = 0; h < heads; ++h) {
      for (int p = 0; p < pairs; ++p) {
        const Real theta = pos * std::pow(10000.0, -Real(p) / pairs);
        const Real c = std::cos(theta), s = std::sin(theta) * sign;
        const int c0 = h * dh + 2 * p, c1 = c0 + 1;
        const Real a = m(r, c0), b = m(r, c1);
        m(r, c0) = a * c - b * s;
        m(r, c1) = a * s + b * c;
      }
    }
  }
}

Mat Attention::forward(const ParamStore& ps, const Mat& xq, const Mat& xkv,
                       const std::vector<int>& q_frames, const std::vector<int>& kv_frames,
                       Cache* cache) const {
  const int dh = dim / heads;
  Mat q = wq.forward(ps, xq);
  Mat k = wk.forward(ps, xkv);
  Mat v = wv.forward(ps, xkv);
  if (rotary) {
    apply_rotary(q, q_frames, heads, +1);
    apply_rotary(k, kv_frames, heads, +1);
  }
  Mat concat(q.rows(), dim);
  std::vector<Mat> attn(heads);
  const Real scale = 1.0 / std::sqrt(Real(dh));
  for (int h = 0; h < heads; ++h) {
    auto qh = q.middleCols(h * dh, dh);
    auto kh = k.middleCols(h * dh, dh);
    auto vh = v.middleCols(h * dh, dh);
    Mat scores = (qh * kh.transpose()) * scale;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const Real mx = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - mx).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    concat.middleCols(h * dh, dh) = scores * vh;
    attn[h] = std::move(scores);
  }
  Mat y = wo.forward(ps, concat);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->concat = std::move(concat);
  }
  return y;
}

Mat Attention::backward(const ParamStore& ps, const Cache& cache, const Mat& dy,
                        const std::vector<int>& q_frames, const std::vector<int>& kv_frames,
                        Mat& dxkv, GradBuffer& gb) const {
  const int dh = dim / heads;
  const Real scale = 1.0 / std::sqrt(Real(dh));
  Mat dconcat = wo.backward(ps, cache.concat, dy, gb);
  Mat dq(cache.q.rows(), dim), dk(cache.k.rows(), dim), dv(cache.v.rows(), dim);
  for (int h = 0; h < heads; ++h) {
    const Mat& A = cache.attn[h];
    auto qh = cache.q.middleCols(h * dh, dh);
    auto kh = cache.k.middleCols(h * dh, dh);
    auto vh = cache.v.middleCols(h * dh, dh);
    Mat dout = dconcat.middleCols(h * dh, dh);
    Mat dA = dout * vh.transpose();
    dv.middleCols(h * dh, dh) = A.transpose() * dout;
    // softmax backward per row
    Mat dS(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      const Real dot = dA.row(r).dot(A.row(r));
      dS.row(r) = A.row(r).array() * (dA.row(r).array() - dot);
    }
    dS *= scale;
    dq.middleCols(h * dh, dh) = dS * kh;
    dk.middleCols(h * dh, dh) = dS.transpose() * qh;
  }
  if (rotary) {
    apply_rotary(dq, q_frames, heads, -1);
    apply_rotary(dk, kv_frames, heads, -1);
  }
  Mat dxq = wq.backward(ps, cache.xq, dq, gb);
  dxkv += wk.backward(ps, cache.xkv, dk, gb);
  dxkv += wv.backward(ps, cache.xkv, dv, gb);
  return dxq;
}

// ---------------------------------------------------------------------------

FeedForward FeedForward::create(ParamStore& ps, const std::string& name, int dim, int hidden) {
  FeedForward f;
  f.fc1 = Linear::create(ps, name + ".fc1", dim, hidden);
  f.fc2 = Linear::create(ps, name + ".fc2", hidden, dim);
  return f;
}

void FeedForward::init(ParamStore& ps, Rng& rng) const {
  fc1.init(ps, rng);
  fc2.init(ps, rng);
}

Mat FeedForward::forward(const ParamStore& ps, const Mat& x, Cache* cache) const {
  Mat h = fc1.forward(ps, x);
  Mat act = h.unaryExpr([](Real v) { return gelu(v); });
  Mat y = fc2.forward(ps, act);
  if (cache) {
    cache->x = x;
    cache->h_pre = std::move(h);
  }
  return y;
}

Mat FeedForward::backward(const ParamStore& ps, const Cache& cache, const Mat& dy,
                          GradBuffer& gb) const {
  Mat act = cache.h_pre.unaryExpr([](Real v) { return gelu(v); });
  Mat dact = fc2.backward(ps, act, dy, gb);
  Mat dh = dact.array() * cache.h_pre.unaryExpr([](Real v) { return gelu_grad(v); }).array();
  return fc1.backward(ps, cache.x, dh, gb);
}

// ---------------------------------------------------------------------------

DecoderLayer DecoderLayer::create(ParamStore& ps, const std::string& name, int dim, int ffn_dim,
                                  int heads) {
  DecoderLayer l;
  l.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
  l.self_attn = Attention::create(ps, name + ".self", dim, heads, /*rotary=*/true);
  l.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
  l.cross_attn = Attention::create(ps, name + ".cross", dim, heads, /*rotary=*/false);
  l.ln3 = LayerNorm::create(ps, name + ".ln3", dim);
  l.ffn = FeedForward::create(ps, name + ".ffn", dim, ffn_dim);
  return l;
}

void DecoderLayer::init(ParamStore& ps, Rng& rng) const {
  ln1.init(ps);
  ln2.init(ps);
  ln3.init(ps);
  self_attn.init(ps, rng);
  cross_attn.init(ps, rng);
  ffn.init(ps, rng);
}

Mat DecoderLayer::forward(const ParamStore& ps, const Mat& x, const Mat& cond,
                          const std::vector<int>& frames, Cache* cache) const {
  std::vector<int> cond_frames(cond.rows(), 0);
  Mat h1 = ln1.forward(ps, x, cache ? &cache->ln1c : nullptr);
  Mat x1 = x + self_attn.forward(ps, h1, h1, frames, frames, cache ? &cache->selfc : nullptr);
  Mat h2 = ln2.forward(ps, x1, cache ? &cache->ln2c : nullptr);
  Mat x2 =
      x1 + cross_attn.forward(ps, h2, cond, frames, cond_frames, cache ? &cache->crossc : nullptr);
  Mat h3 = ln3.forward(ps, x2, cache ? &cache->ln3c : nullptr);
  Mat y = x2 + ffn.forward(ps, h3, cache ? &cache->ffnc : nullptr);
  if (cache) {
    cache->x1 = std::move(x1);
    cache->x2 = std::move(x2);
  }
  return y;
}

Mat DecoderLayer::backward(const ParamStore& ps, const Cache& cache, const Mat& dy,
                           const std::vector<int>& frames, Mat& dcond, GradBuffer& gb) const {
  std::vector<int> cond_frames(cache.crossc.xkv.rows(), 0);
  // y = x2 + ffn(ln3(x2))
  Mat dffn_out = dy;
  Mat dh3 = ffn.backward(ps, cache.ffnc, dffn_out, gb);
  Mat dx2 = dy + ln3.backward(ps, cache.ln3c, dh3, gb);
  // x2 = x1 + cross(ln2(x1), cond)
  Mat dh2 = cross_attn.backward(ps, cache.crossc, dx2, frames, cond_frames, dcond, gb);
  Mat dx1 = dx2 + ln2.backward(ps, cache.ln2c, dh2, gb);
  // x1 = x + self(ln1(x))
  Mat dself_kv = Mat::Zero(cache.selfc.xkv.rows(), cache.selfc.xkv.cols());
  Mat dh1 = self_attn.backward(ps, cache.selfc, dx1, frames, frames, dself_kv, gb);
  dh1 += dself_kv;  // q and kv are the same tensor in self-attention
  Mat dx = dx1 + ln1.backward(ps, cache.ln1c, dh1, gb);
  return dx;
}

// ---------------------------------------------------------------------------

void Adam::step(ParamStore& ps, const GradBuffer& gb) {
  if (m_.empty()) {
    m_.resize(ps.count());
    v_.resize(ps.count());
    for (int h = 0; h < ps.count(); ++h) {
      m_[h] = Mat::Zero(ps.value(h).rows(), ps.value(h).cols());
      v_[h] = Mat::Zero(ps.value(h).rows(), ps.value(h).cols());
    }
  }
  ++t_;
  const Real bc1 = 1.0 - std::pow(beta1_, Real(t_));
  const Real bc2 = 1.0 - std::pow(beta2_, Real(t_));
  for (int h = 0; h < ps.count(); ++h) {
    const Mat& g = gb[h];
    m_[h] = beta1_ * m_[h] + (1.0 - beta1_) * g;
    v_[h] = beta2_ * v_[h] + (1.0 - beta2_) * g.cwiseProduct(g);
    ps.value(h).array() -=
        lr_ * (m_[h].array() / bc1) / ((v_[h].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace paceguide::nn
