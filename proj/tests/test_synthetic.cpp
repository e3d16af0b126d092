#include "doctest.h"
#include "helpers.hpp"

#include "paceguide/metrics.hpp"
#include "paceguide/synthetic.hpp"

#include <cstdio>
#include <fstream>
#include <set>

using namespace paceguide;

namespace {

GeneratorConfig small_cfg(uint64_t seed = 11) {
  GeneratorConfig cfg;
  cfg.n_sequences = 24;
  cfg.frames = 48;
  cfg.n_objects = 6;
  cfg.points_per_object = 64;
  cfg.seed = seed;
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

HOISequence slice(const HOISequence& s, int from, int to) {
  HOISequence out;
  out.fps = s.fps;
  const int n = to - from;
  out.body_joints = s.body_joints.middleRows(from, n);
  out.hand_joints = s.hand_joints.middleRows(from, n);
  out.hand_angles = s.hand_angles.middleRows(from, n);
  out.obj_trans = s.obj_trans.middleRows(from, n);
  out.obj_rot6d = s.obj_rot6d.middleRows(from, n);
  return out;
}

}  // namespace

TEST_CASE("same seed produces byte-identical dataset files") {
  GeneratorConfig cfg = small_cfg();
  cfg.n_sequences = 6;
  GeneratedData a = generate(cfg);
  GeneratedData b = generate(cfg);
  save_dataset(a.dataset, "/tmp/pg_ds_a.bin");
  save_dataset(b.dataset, "/tmp/pg_ds_b.bin");
  save_object_library(a.library, "/tmp/pg_lib_a.json");
  save_object_library(b.library, "/tmp/pg_lib_b.json");
  CHECK(read_file("/tmp/pg_ds_a.bin") == read_file("/tmp/pg_ds_b.bin"));
  CHECK(read_file("/tmp/pg_ds_a.bin.json") == read_file("/tmp/pg_ds_b.bin.json"));
  CHECK(read_file("/tmp/pg_lib_a.json") == read_file("/tmp/pg_lib_b.json"));

  GeneratedData c = generate(small_cfg(12));
  save_dataset(c.dataset, "/tmp/pg_ds_c.bin");
  CHECK(read_file("/tmp/pg_ds_a.bin") != read_file("/tmp/pg_ds_c.bin"));
}

TEST_CASE("dataset save/load round trip is exact") {
  GeneratorConfig cfg = small_cfg();
  cfg.n_sequences = 5;
  GeneratedData g = generate(cfg);
  save_dataset(g.dataset, "/tmp/pg_ds_rt.bin");
  Dataset back = load_dataset("/tmp/pg_ds_rt.bin");
  REQUIRE(back.sequences.size() == g.dataset.sequences.size());
  for (size_t i = 0; i < back.sequences.size(); ++i) {
    CHECK(back.sequences[i].seq == g.dataset.sequences[i].seq);
    CHECK(back.sequences[i].labels.joint_contact == g.dataset.sequences[i].labels.joint_contact);
    CHECK(back.sequences[i].labels.foot_contact == g.dataset.sequences[i].labels.foot_contact);
    CHECK(back.sequences[i].task_label == g.dataset.sequences[i].task_label);
    CHECK(back.sequences[i].object_id == g.dataset.sequences[i].object_id);
  }
  CHECK(back.task_vocab == g.dataset.task_vocab);
  CHECK(back.generator_seed == g.dataset.generator_seed);
}

TEST_CASE("object library round trip preserves points and recomputes BPS") {
  GeneratorConfig cfg = small_cfg();
  ObjectLibrary lib = make_object_library(cfg);
  save_object_library(lib, "/tmp/pg_lib_rt.json");
  ObjectLibrary back = load_object_library("/tmp/pg_lib_rt.json", 32);
  REQUIRE(back.objects.size() == lib.objects.size());
  for (size_t i = 0; i < lib.objects.size(); ++i) {
    CHECK(back.objects[i].name == lib.objects[i].name);
    CHECK(back.objects[i].category == lib.objects[i].category);
    CHECK((back.objects[i].points - lib.objects[i].points).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.objects[i].bps.raw.size() == 32);
  }
  CHECK(back.categories().size() == 3);
}

TEST_CASE("generated corpus satisfies its own plausibility contracts") {
  GeneratorConfig cfg = small_cfg(21);
  GeneratedData g = generate(cfg);
  REQUIRE(g.dataset.sequences.size() == size_t(cfg.n_sequences));
  const int T = cfg.frames;
  const int manip_from = static_cast<int>(0.45 * T);
  const int manip_to = static_cast<int>(0.80 * T);

  for (const auto& ds : g.dataset.sequences) {
    const ObjectGeometry& geom = g.library.by_id(ds.object_id);
    ds.seq.validate(cfg.skel);

    // penetration stays negligible
    auto [depth, frac] = penetration(ds.seq, geom, cfg.skel);
    CHECK(frac < 0.02);

    // contact is established during the manipulation phase
    HOISequence manip = slice(ds.seq, manip_from, manip_to);
    CHECK(contact_ratio(manip, geom, cfg.skel) > 0.0);

    // feet planted: no skating
    CHECK(foot_skating_ratio(ds.seq, cfg.skel) < 1e-12);

    // contact matching against itself is perfect
    ContactPRF prf = contact_prf(ds.seq, ds.seq, geom, cfg.skel);
    CHECK(prf.precision == 1.0);
    CHECK(prf.recall == 1.0);
    CHECK(prf.f1 == 1.0);

    // labels recomputed from raw geometry match the emitted ones exactly
    SupervisionLabels re = derive_labels(ds.seq, geom, cfg.skel);
    CHECK(re.joint_contact == ds.labels.joint_contact);
    CHECK(re.foot_contact == ds.labels.foot_contact);

    // labelled contacts honour the 0.03 m rule
    const auto posed = posed_vertices_per_frame(ds.seq, geom);
    bool any_contact = false;
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < cfg.skel.total_joints(); ++j)
        if (ds.labels.joint_contact(t, j) == 1.0) {
          any_contact = true;
          CHECK(point_to_set_distance(ds.seq.joint(t, j, cfg.skel), posed[t]) < 0.03);
        }
    CHECK(any_contact);
  }
}

TEST_CASE("every task appears and conditions differ") {
  GeneratorConfig cfg = small_cfg(31);
  cfg.n_sequences = 40;
  GeneratedData g = generate(cfg);
  std::set<int> tasks, objects;
  for (const auto& s : g.dataset.sequences) {
    tasks.insert(s.task_label);
    objects.insert(s.object_id);
  }
  CHECK(tasks.size() == cfg.tasks.size());
  CHECK(objects.size() > 1);
}

TEST_CASE("infeasible objects are skipped with a warning") {
  GeneratorConfig cfg = small_cfg(41);
  cfg.n_sequences = 10;
  cfg.n_objects = 3;
  cfg.box_min = 0.9;
  cfg.box_max = 1.0;  // far beyond reach
  GeneratedData g = generate(cfg);
  CHECK(g.skipped > 0);
  CHECK(g.dataset.sequences.size() + size_t(g.skipped) == 10);
  // boxes are one of three families; cylinder/ellipsoid clips survive
  for (const auto& s : g.dataset.sequences)
    CHECK(g.library.by_id(s.object_id).category != "box");
}

TEST_CASE("split modes: disjointness and determinism") {
  GeneratorConfig cfg = small_cfg(51);
  cfg.n_sequences = 60;
  GeneratedData g = generate(cfg);

  auto parts = split(g.dataset, g.library, {0.75, 0.25}, SplitMode::BySequence, 3);
  CHECK(parts.size() == 2);
  CHECK(parts[0].size() + parts[1].size() == g.dataset.sequences.size());
  // with n_sequences >> n_objects every object shows up in both parts
  std::set<int> train_objs, test_objs;
  for (int i : parts[0]) train_objs.insert(g.dataset.sequences[i].object_id);
  for (int i : parts[1]) test_objs.insert(g.dataset.sequences[i].object_id);
  CHECK(train_objs.size() == size_t(cfg.n_objects));
  CHECK(test_objs.size() >= 2);

  auto by_obj = split(g.dataset, g.library, {0.7, 0.3}, SplitMode::ByObject, 3);
  std::set<int> a, b;
  for (int i : by_obj[0]) a.insert(g.dataset.sequences[i].object_id);
  for (int i : by_obj[1]) b.insert(g.dataset.sequences[i].object_id);
  for (int id : b) CHECK(a.count(id) == 0);

  auto by_cat = split(g.dataset, g.library, {0.67, 0.33}, SplitMode::ByCategory, 5);
  std::set<std::string> ca, cb;
  for (int i : by_cat[0]) ca.insert(g.library.by_id(g.dataset.sequences[i].object_id).category);
  for (int i : by_cat[1]) cb.insert(g.library.by_id(g.dataset.sequences[i].object_id).category);
  for (const auto& c : cb) CHECK(ca.count(c) == 0);

  // determinism
  auto again = split(g.dataset, g.library, {0.75, 0.25}, SplitMode::BySequence, 3);
  CHECK(again == parts);
  auto other = split(g.dataset, g.library, {0.75, 0.25}, SplitMode::BySequence, 4);
  CHECK(other != parts);

  CHECK_THROWS_AS(split(g.dataset, g.library, {0.5, 0.6}, SplitMode::BySequence, 1), ConfigError);
  CHECK_THROWS_AS(split(g.dataset, g.library, {0.25, 0.25, 0.25, 0.25}, SplitMode::ByCategory, 1),
                  ConfigError);
}
