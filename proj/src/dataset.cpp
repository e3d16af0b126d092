#include "paceguide/dataset.hpp"

#include "json.hpp"

#include <cstring>
#include <fstream>

namespace paceguide {

using json = nlohmann::json;

void Dataset::validate() const {
  skel.validate();
  if (task_vocab.empty()) throw ConfigError("dataset: empty task vocabulary");
  const int T = frames();
  for (const auto& s : sequences) {
    s.seq.validate(skel);
    if (s.seq.frames() != T) throw ShapeError("dataset: sequences disagree on frame count");
    if (s.seq.fps != fps) throw ShapeError("dataset: sequences disagree on fps");
    if (s.task_label < 0 || s.task_label >= static_cast<int>(task_vocab.size()))
      throw RangeError("dataset: task label outside vocabulary");
    if (s.labels.foot_contact.rows() != T || s.labels.foot_contact.cols() != 4)
      throw ShapeError("dataset: foot contact labels must be T x 4");
    if (s.labels.joint_contact.rows() != T ||
        s.labels.joint_contact.cols() != skel.total_joints())
      throw ShapeError("dataset: joint contact labels must be T x J");
  }
}

std::vector<TrainingExample> Dataset::training_examples() const {
  std::vector<TrainingExample> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    TrainingExample ex;
    ex.seq = s.seq;
    ex.labels = s.labels;
    ex.label_id = s.task_label;
    ex.object_id = s.object_id;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'H', 'O', 'I', 'B', '1', '\n', '\0', '\0'};

void write_mat(std::ofstream& f, const Mat& m) {
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(Real) * m.size()));
}

void read_mat(std::ifstream& f, Mat& m) {
  f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(Real) * m.size()));
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  const int T = ds.frames();

  json side;
  side["format_version"] = 1;
  side["n_sequences"] = ds.sequences.size();
  side["frames"] = T;
  side["fps"] = ds.fps;
  side["generator_seed"] = ds.generator_seed;
  side["task_vocab"] = ds.task_vocab;
  side["skeleton"] = {{"body_joints", ds.skel.body_joints},
                      {"hand_joints", ds.skel.hand_joints},
                      {"foot_label_joints", ds.skel.foot_label_joints},
                      {"foot_joints", ds.skel.foot_joints},
                      {"body_radius", ds.skel.body_radius},
                      {"hand_radius", ds.skel.hand_radius}};
  // Per-sequence scalar arrays live in the sidecar; dense float arrays in
  // the binary bundle, in the order listed here.
  side["arrays"] = {
      {{"name", "body_joints"}, {"shape", {T, ds.skel.body_joints * 3}}},
      {{"name", "hand_joints"}, {"shape", {T, ds.skel.hand_joints * 3}}},
      {{"name", "hand_angles"}, {"shape", {T, ds.skel.hand_joints}}},
      {{"name", "obj_trans"}, {"shape", {T, 3}}},
      {{"name", "obj_rot6d"}, {"shape", {T, 6}}},
      {{"name", "contact_labels"}, {"shape", {T, ds.skel.total_joints()}}},
      {{"name", "foot_contact"}, {"shape", {T, 4}}},
  };
  std::vector<int> task_labels, object_ids;
  for (const auto& s : ds.sequences) {
    task_labels.push_back(s.task_label);
    object_ids.push_back(s.object_id);
  }
  side["task_label"] = task_labels;
  side["object_id"] = object_ids;

  std::ofstream sf(path + ".json");
  if (!sf) throw IoError("cannot write dataset sidecar: " + path + ".json");
  sf << side.dump(2) << "\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write dataset: " + path);
  f.write(kMagic, sizeof(kMagic));
  for (const auto& s : ds.sequences) {
    write_mat(f, s.seq.body_joints);
    write_mat(f, s.seq.hand_joints);
    write_mat(f, s.seq.hand_angles);
    write_mat(f, s.seq.obj_trans);
    write_mat(f, s.seq.obj_rot6d);
    write_mat(f, s.labels.joint_contact);
    write_mat(f, s.labels.foot_contact);
  }
  if (!f) throw IoError("failed while writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream sf(path + ".json");
  if (!sf) throw IoError("cannot read dataset sidecar: " + path + ".json");
  json side = json::parse(sf);
  if (side.at("format_version").get<int>() != 1)
    throw IoError("unsupported dataset format version");

  Dataset ds;
  const auto n = side.at("n_sequences").get<size_t>();
  const int T = side.at("frames").get<int>();
  ds.fps = side.at("fps").get<Real>();
  ds.generator_seed = side.at("generator_seed").get<uint64_t>();
  ds.task_vocab = side.at("task_vocab").get<std::vector<std::string>>();
  const auto& sk = side.at("skeleton");
  ds.skel.body_joints = sk.at("body_joints").get<int>();
  ds.skel.hand_joints = sk.at("hand_joints").get<int>();
  ds.skel.foot_label_joints = sk.at("foot_label_joints").get<std::array<int, 4>>();
  ds.skel.foot_joints = sk.at("foot_joints").get<std::array<int, 2>>();
  ds.skel.body_radius = sk.at("body_radius").get<Real>();
  ds.skel.hand_radius = sk.at("hand_radius").get<Real>();
  const auto task_labels = side.at("task_label").get<std::vector<int>>();
  const auto object_ids = side.at("object_id").get<std::vector<int>>();
  if (task_labels.size() != n || object_ids.size() != n)
    throw IoError("dataset sidecar: per-sequence arrays have wrong length");

  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read dataset: " + path);
  char magic[sizeof(kMagic)];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a dataset bundle: " + path);

  ds.sequences.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto& s = ds.sequences[i];
    s.seq.fps = ds.fps;
    s.seq.body_joints.resize(T, ds.skel.body_joints * 3);
    s.seq.hand_joints.resize(T, ds.skel.hand_joints * 3);
    s.seq.hand_angles.resize(T, ds.skel.hand_joints);
    s.seq.obj_trans.resize(T, 3);
    s.seq.obj_rot6d.resize(T, 6);
    s.labels.joint_contact.resize(T, ds.skel.total_joints());
    s.labels.foot_contact.resize(T, 4);
    read_mat(f, s.seq.body_joints);
    read_mat(f, s.seq.hand_joints);
    read_mat(f, s.seq.hand_angles);
    read_mat(f, s.seq.obj_trans);
    read_mat(f, s.seq.obj_rot6d);
    read_mat(f, s.labels.joint_contact);
    read_mat(f, s.labels.foot_contact);
    s.task_label = task_labels[i];
    s.object_id = object_ids[i];
  }
  if (!f) throw IoError("truncated dataset: " + path);
  ds.validate();
  return ds;
}

}  // namespace paceguide
