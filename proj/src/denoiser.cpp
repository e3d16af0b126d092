#include "paceguide/denoiser.hpp"

#include "json.hpp"

#include <cstring>
#include <fstream>

namespace paceguide {

using nn::GradBuffer;
using nn::ParamStore;

DenoiserConfig DenoiserConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  if (name == "micro") return micro();
  throw ConfigError("unknown denoiser preset: " + name);
}

void DenoiserConfig::validate() const {
  if (layers < 1 || model_dim < 1 || ffn_dim < 1 || heads < 1)
    throw ConfigError("denoiser dims must be positive");
  if (model_dim % heads != 0) throw ConfigError("model_dim must be divisible by heads");
  if ((model_dim / heads) % 2 != 0)
    throw ConfigError("head dim must be even for the rotary encoding");
  if (!(condition_dropout_prob >= 0.0 && condition_dropout_prob < 1.0))
    throw ConfigError("condition_dropout_prob must be in [0, 1)");
  if (external_cond_dim < 1) throw ConfigError("external_cond_dim must be positive");
}

ConditionBundle drop_condition(const ConditionBundle& cond, Rng& rng, Real p) {
  ConditionBundle out = cond;
  if (rng.uniform() < p) out.is_null = true;
  return out;
}

Denoiser::Denoiser(DenoiserConfig cfg, SkeletonConfig skel, int vocab_size, int geometry_dim,
                   uint64_t init_seed)
    : cfg_(cfg), skel_(skel), vocab_size_(vocab_size), geometry_dim_(geometry_dim) {
  cfg_.validate();
  skel_.validate();
  if (vocab_size_ < 1) throw ConfigError("vocabulary must be non-empty");
  if (geometry_dim_ < 1) throw ConfigError("geometry feature dim must be positive");
  const int D = cfg_.model_dim;

  for (int m = 0; m < 3; ++m) {
    const auto mod = static_cast<Modality>(m);
    in_proj_[m] = nn::Linear::create(ps_, std::string("in_proj.") + modality_name(mod),
                                     skel_.width(mod), D);
    out_proj_[m] = nn::Linear::create(ps_, std::string("out_proj.") + modality_name(mod), D,
                                      skel_.width(mod));
  }
  modality_emb_ = ps_.add("modality_emb", 3, D);
  noise_fc1_ = nn::Linear::create(ps_, "noise_mlp.fc1", D, D);
  noise_fc2_ = nn::Linear::create(ps_, "noise_mlp.fc2", D, D);
  label_table_ = ps_.add("label_table", vocab_size_, D);
  null_token_ = ps_.add("null_token", 1, D);
  ext_proj_ = nn::Linear::create(ps_, "ext_proj", cfg_.external_cond_dim, D);
  geom_fc1_ = nn::Linear::create(ps_, "geom_mlp.fc1", geometry_dim_, D);
  geom_fc2_ = nn::Linear::create(ps_, "geom_mlp.fc2", D, D);
  layers_.reserve(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l)
    layers_.push_back(
        nn::DecoderLayer::create(ps_, "layer" + std::to_string(l), D, cfg_.ffn_dim, cfg_.heads));
  final_ln_ = nn::LayerNorm::create(ps_, "final_ln", D);

  Rng rng(init_seed);
  for (int m = 0; m < 3; ++m) {
    in_proj_[m].init(ps_, rng);
    out_proj_[m].init(ps_, rng);
  }
  Mat& me = ps_.value(modality_emb_);
  for (Eigen::Index i = 0; i < me.size(); ++i) me.data()[i] = 0.02 * rng.normal();
  noise_fc1_.init(ps_, rng);
  noise_fc2_.init(ps_, rng);
  Mat& lt = ps_.value(label_table_);
  for (Eigen::Index i = 0; i < lt.size(); ++i) lt.data()[i] = 0.02 * rng.normal();
  Mat& nt = ps_.value(null_token_);
  for (Eigen::Index i = 0; i < nt.size(); ++i) nt.data()[i] = 0.02 * rng.normal();
  ext_proj_.init(ps_, rng);
  geom_fc1_.init(ps_, rng);
  geom_fc2_.init(ps_, rng);
  for (auto& l : layers_) l.init(ps_, rng);
  final_ln_.init(ps_);
}

Denoiser::Workspace Denoiser::make_workspace() const { return Workspace{}; }

Vec Denoiser::noise_level_embedding(int k) const {
  Vec sin_emb = nn::sinusoidal_embedding(Real(k), cfg_.model_dim);
  Mat h = noise_fc1_.forward(ps_, sin_emb.transpose());
  h = h.unaryExpr([](Real v) { return nn::gelu(v); });
  return noise_fc2_.forward(ps_, h).row(0).transpose();
}

Mat Denoiser::embed_levels(const ModalityNoiseLevels& lam) const {
  Mat emb(3, cfg_.model_dim);
  for (int m = 0; m < 3; ++m)
    emb.row(m) = noise_level_embedding(lam.level(static_cast<Modality>(m))).transpose();
  return emb;
}

Mat Denoiser::condition_tokens(const ConditionBundle& cond, Workspace* ws) const {
  const int D = cfg_.model_dim;
  Mat label_rows;
  if (cond.is_null) {
    label_rows = ps_.value(null_token_);
  } else if (cond.use_external) {
    if (cond.external_tokens.cols() != cfg_.external_cond_dim)
      throw ShapeError("external condition tokens have the wrong width");
    label_rows = ext_proj_.forward(ps_, cond.external_tokens);
  } else {
    if (cond.label_ids.empty()) throw ShapeError("condition bundle has no label ids");
    label_rows.resize(cond.label_ids.size(), D);
    for (size_t i = 0; i < cond.label_ids.size(); ++i) {
      const int id = cond.label_ids[i];
      if (id < 0 || id >= vocab_size_) throw RangeError("label id outside vocabulary");
      label_rows.row(i) = ps_.value(label_table_).row(id);
    }
  }
  if (cond.geometry.size() != geometry_dim_)
    throw ShapeError("geometry feature has the wrong length");
  Mat g = geom_fc1_.forward(ps_, cond.geometry.transpose());
  Mat g_act = g.unaryExpr([](Real v) { return nn::gelu(v); });
  Mat geom_row = geom_fc2_.forward(ps_, g_act);
  Mat tokens(label_rows.rows() + 1, D);
  tokens.topRows(label_rows.rows()) = label_rows;
  tokens.bottomRows(1) = geom_row;
  if (ws) ws->geom_h1_pre = std::move(g);
  return tokens;
}

TokenGrid Denoiser::forward(const TokenGrid& x_lam, const ModalityNoiseLevels& lam,
                            const ConditionBundle& cond, Workspace* ws) const {
  const int T = x_lam.frames();
  const int D = cfg_.model_dim;
  for (Modality m : kAllModalities) {
    if (x_lam.channel(m).cols() != skel_.width(m))
      throw ShapeError("token grid widths do not match the model skeleton");
  }

  // Noise-level embedding per modality (sinusoidal -> MLP).
  Mat noise_emb(3, D);
  std::array<Vec, 3> noise_sin;
  std::array<Mat, 3> noise_h1_pre;
  for (int m = 0; m < 3; ++m) {
    noise_sin[m] = nn::sinusoidal_embedding(Real(lam.level(static_cast<Modality>(m))), D);
    Mat h = noise_fc1_.forward(ps_, noise_sin[m].transpose());
    noise_h1_pre[m] = h;
    Mat act = h.unaryExpr([](Real v) { return nn::gelu(v); });
    noise_emb.row(m) = noise_fc2_.forward(ps_, act).row(0);
  }

  Mat cond_tokens = condition_tokens(cond, ws);

  // Token assembly, frame-major interleave: token(3f + m).
  Mat tokens(3 * T, D);
  std::vector<int> frames(3 * T);
  std::array<Mat, 3> projected;
  for (int m = 0; m < 3; ++m)
    projected[m] = in_proj_[m].forward(ps_, x_lam.channel(static_cast<Modality>(m)));
  for (int f = 0; f < T; ++f) {
    for (int m = 0; m < 3; ++m) {
      tokens.row(3 * f + m) =
          projected[m].row(f) + ps_.value(modality_emb_).row(m) + noise_emb.row(m);
      frames[3 * f + m] = f;
    }
  }

  std::vector<nn::DecoderLayer::Cache> caches(layers_.size());
  std::vector<Mat> layer_inputs;
  if (ws) layer_inputs.reserve(layers_.size());
  Mat x = std::move(tokens);
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (ws) layer_inputs.push_back(x);
    x = layers_[l].forward(ps_, x, cond_tokens, frames, ws ? &caches[l] : nullptr);
  }
  nn::LayerNorm::Cache ln_cache;
  Mat out = final_ln_.forward(ps_, x, ws ? &ln_cache : nullptr);

  TokenGrid pred = TokenGrid::zeros(T, skel_);
  std::array<Mat, 3> rows;
  for (int m = 0; m < 3; ++m) rows[m].resize(T, D);
  for (int f = 0; f < T; ++f)
    for (int m = 0; m < 3; ++m) rows[m].row(f) = out.row(3 * f + m);
  for (int m = 0; m < 3; ++m)
    pred.channel(static_cast<Modality>(m)) = out_proj_[m].forward(ps_, rows[m]);

  if (ws) {
    ws->x_in = x_lam;
    ws->lam = lam;
    ws->noise_sin = std::move(noise_sin);
    ws->noise_h1_pre = std::move(noise_h1_pre);
    ws->noise_emb = std::move(noise_emb);
    ws->cond = cond;
    ws->cond_tokens = std::move(cond_tokens);
    ws->frames = std::move(frames);
    ws->layer_caches = std::move(caches);
    ws->layer_inputs = std::move(layer_inputs);
    ws->final_ln_cache = std::move(ln_cache);
    ws->final_out = std::move(out);
  }
  return pred;
}

void Denoiser::backward(const Workspace& ws, const TokenGrid& dpred, GradBuffer& gb) const {
  const int T = ws.x_in.frames();
  const int D = cfg_.model_dim;

  // Output heads.
  Mat dout(3 * T, D);
  for (int m = 0; m < 3; ++m) {
    Mat rows(T, D);
    for (int f = 0; f < T; ++f) rows.row(f) = ws.final_out.row(3 * f + m);
    Mat drows = out_proj_[m].backward(ps_, rows, dpred.channel(static_cast<Modality>(m)), gb);
    for (int f = 0; f < T; ++f) dout.row(3 * f + m) = drows.row(f);
  }

  Mat dx = final_ln_.backward(ps_, ws.final_ln_cache, dout, gb);

  Mat dcond = Mat::Zero(ws.cond_tokens.rows(), D);
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l)
    dx = layers_[l].backward(ps_, ws.layer_caches[l], dx, ws.frames, dcond, gb);

  // Token assembly: in_proj, modality and noise embeddings.
  std::array<Mat, 3> drows;
  for (int m = 0; m < 3; ++m) drows[m].resize(T, D);
  for (int f = 0; f < T; ++f)
    for (int m = 0; m < 3; ++m) drows[m].row(f) = dx.row(3 * f + m);
  for (int m = 0; m < 3; ++m) {
    in_proj_[m].backward(ps_, ws.x_in.channel(static_cast<Modality>(m)), drows[m], gb);
    const Mat col_sum = drows[m].colwise().sum();
    gb[modality_emb_].row(m) += col_sum;
    // noise MLP backward (broadcast over frames)
    Mat act = ws.noise_h1_pre[m].unaryExpr([](Real v) { return nn::gelu(v); });
    Mat dact = noise_fc2_.backward(ps_, act, col_sum, gb);
    Mat dh =
        dact.array() * ws.noise_h1_pre[m].unaryExpr([](Real v) { return nn::gelu_grad(v); }).array();
    noise_fc1_.backward(ps_, ws.noise_sin[m].transpose(), dh, gb);
  }

  // Condition tokens: label rows (or null token / external projection) and
  // the geometry MLP row.
  const Eigen::Index n_label_rows = ws.cond_tokens.rows() - 1;
  Mat dlabel = dcond.topRows(n_label_rows);
  if (ws.cond.is_null) {
    gb[null_token_] += dlabel;
  } else if (ws.cond.use_external) {
    ext_proj_.backward(ps_, ws.cond.external_tokens, dlabel, gb);
  } else {
    for (Eigen::Index i = 0; i < n_label_rows; ++i)
      gb[label_table_].row(ws.cond.label_ids[static_cast<size_t>(i)]) += dlabel.row(i);
  }
  Mat dgeom_row = dcond.bottomRows(1);
  Mat act = ws.geom_h1_pre.unaryExpr([](Real v) { return nn::gelu(v); });
  Mat dact = geom_fc2_.backward(ps_, act, dgeom_row, gb);
  Mat dh =
      dact.array() * ws.geom_h1_pre.unaryExpr([](Real v) { return nn::gelu_grad(v); }).array();
  geom_fc1_.backward(ps_, ws.cond.geometry.transpose(), dh, gb);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

using json = nlohmann::json;

static json meta_to_json(const CheckpointMeta& meta) {
  json j;
  j["format_version"] = meta.format_version;
  j["config"] = {{"layers", meta.config.layers},
                 {"model_dim", meta.config.model_dim},
                 {"ffn_dim", meta.config.ffn_dim},
                 {"heads", meta.config.heads},
                 {"condition_dropout_prob", meta.config.condition_dropout_prob},
                 {"external_cond_dim", meta.config.external_cond_dim}};
  j["skeleton"] = {{"body_joints", meta.skeleton.body_joints},
                   {"hand_joints", meta.skeleton.hand_joints},
                   {"foot_label_joints", meta.skeleton.foot_label_joints},
                   {"foot_joints", meta.skeleton.foot_joints},
                   {"body_radius", meta.skeleton.body_radius},
                   {"hand_radius", meta.skeleton.hand_radius}};
  j["schedule"] = {{"family", schedule_family_name(meta.schedule_family)},
                   {"steps", meta.schedule_steps},
                   {"table_hash", meta.schedule_table_hash}};
  j["vocabulary"] = meta.vocabulary;
  j["bps"] = {{"count", meta.bps_count}, {"seed", meta.bps_seed}};
  j["geometry_dim"] = meta.geometry_dim;
  j["init_seed"] = meta.init_seed;
  j["trained_steps"] = meta.trained_steps;
  return j;
}

static CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  meta.format_version = j.at("format_version").get<int>();
  if (meta.format_version != 1) throw IoError("unsupported checkpoint format version");
  const auto& c = j.at("config");
  meta.config.layers = c.at("layers").get<int>();
  meta.config.model_dim = c.at("model_dim").get<int>();
  meta.config.ffn_dim = c.at("ffn_dim").get<int>();
  meta.config.heads = c.at("heads").get<int>();
  meta.config.condition_dropout_prob = c.at("condition_dropout_prob").get<Real>();
  meta.config.external_cond_dim = c.at("external_cond_dim").get<int>();
  const auto& s = j.at("skeleton");
  meta.skeleton.body_joints = s.at("body_joints").get<int>();
  meta.skeleton.hand_joints = s.at("hand_joints").get<int>();
  meta.skeleton.foot_label_joints = s.at("foot_label_joints").get<std::array<int, 4>>();
  meta.skeleton.foot_joints = s.at("foot_joints").get<std::array<int, 2>>();
  meta.skeleton.body_radius = s.at("body_radius").get<Real>();
  meta.skeleton.hand_radius = s.at("hand_radius").get<Real>();
  const auto& sch = j.at("schedule");
  meta.schedule_family = schedule_family_from_name(sch.at("family").get<std::string>());
  meta.schedule_steps = sch.at("steps").get<int>();
  meta.schedule_table_hash = sch.at("table_hash").get<uint64_t>();
  meta.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  meta.bps_count = j.at("bps").at("count").get<int>();
  meta.bps_seed = j.at("bps").at("seed").get<uint64_t>();
  meta.geometry_dim = j.at("geometry_dim").get<int>();
  meta.init_seed = j.at("init_seed").get<uint64_t>();
  meta.trained_steps = j.at("trained_steps").get<int64_t>();
  return meta;
}

static void write_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

static uint64_t read_u64(std::ifstream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void save_checkpoint(const std::string& path, const Denoiser& model, const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write("PGCK", 4);
  const std::string header = meta_to_json(meta).dump();
  write_u64(f, header.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto& ps = model.params();
  write_u64(f, static_cast<uint64_t>(ps.count()));
  for (int h = 0; h < ps.count(); ++h) {
    const std::string& name = ps.name(h);
    write_u64(f, name.size());
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Mat& m = ps.value(h);
    write_u64(f, static_cast<uint64_t>(m.rows()));
    write_u64(f, static_cast<uint64_t>(m.cols()));
    f.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(Real) * m.size()));
  }
  if (!f) throw IoError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "PGCK", 4) != 0) throw IoError("not a checkpoint file: " + path);
  const uint64_t header_len = read_u64(f);
  std::string header(header_len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(header_len));
  CheckpointMeta meta = meta_from_json(json::parse(header));

  auto model = std::make_unique<Denoiser>(meta.config, meta.skeleton,
                                          static_cast<int>(meta.vocabulary.size()),
                                          meta.geometry_dim, meta.init_seed);
  auto& ps = model->params();
  const uint64_t n = read_u64(f);
  if (n != static_cast<uint64_t>(ps.count()))
    throw IoError("checkpoint parameter count mismatch");
  for (uint64_t i = 0; i < n; ++i) {
    const uint64_t name_len = read_u64(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rows = static_cast<Eigen::Index>(read_u64(f));
    const auto cols = static_cast<Eigen::Index>(read_u64(f));
    Mat& m = ps.value(static_cast<int>(i));
    if (name != ps.name(static_cast<int>(i)) || rows != m.rows() || cols != m.cols())
      throw IoError("checkpoint parameter layout mismatch at " + name);
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(sizeof(Real) * m.size()));
  }
  if (!f) throw IoError("truncated checkpoint: " + path);
  return LoadedCheckpoint{std::move(model), std::move(meta)};
}

}  // namespace paceguide
