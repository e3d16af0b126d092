#include "doctest.h"
#include "helpers.hpp"

#include "paceguide/types.hpp"

using namespace paceguide;
using paceguide::testing::random_sequence;

TEST_CASE("pack produces the channel widths forced by the skeleton") {
  SkeletonConfig skel;
  skel.body_joints = 2;
  skel.hand_joints = 1;
  skel.foot_label_joints = {0, 1, 0, 1};
  skel.foot_joints = {0, 1};
  Rng rng(1);
  HOISequence s = random_sequence(rng, skel, 2);
  TokenGrid g = pack(s, skel);
  CHECK(g.frames() == 2);
  CHECK(g.body.cols() == 6);
  CHECK(g.hand.cols() == 4);
  CHECK(g.obj.cols() == 9);
}

TEST_CASE("unpack(pack(s)) == s exactly on random valid sequences") {
  SkeletonConfig skel;
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    HOISequence s = random_sequence(rng, skel, 2 + int(rng.uniform_int(0, 10)));
    HOISequence back = unpack(pack(s, skel), skel, s.fps);
    CHECK(back == s);
  }
}

TEST_CASE("pack(unpack(g)) reproduces a random grid exactly") {
  SkeletonConfig skel;
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    TokenGrid g = TokenGrid::gaussian(4, skel, rng);
    // unpack does not validate rot6d; make the rows decodable so the
    // repacked sequence passes validation.
    for (int t = 0; t < 4; ++t) {
      g.obj(t, 3) += 3.0;
      g.obj(t, 7) += 3.0;
    }
    TokenGrid back = pack(unpack(g, skel), skel);
    CHECK(back == g);
  }
}

TEST_CASE("unpack of the zero grid gives an all-zero sequence") {
  SkeletonConfig skel;
  HOISequence s = unpack(TokenGrid::zeros(3, skel), skel);
  CHECK(s.body_joints.isZero(0));
  CHECK(s.obj_rot6d.isZero(0));
  // The zero rot6d rows are rejected once the sequence is validated.
  CHECK_THROWS_AS(s.validate(skel), ShapeError);
}

TEST_CASE("pack rejects NaN and shape mismatches") {
  SkeletonConfig skel;
  Rng rng(3);
  HOISequence s = random_sequence(rng, skel, 4);
  s.body_joints(1, 2) = std::numeric_limits<Real>::quiet_NaN();
  CHECK_THROWS_AS(pack(s, skel), ShapeError);

  HOISequence bad = random_sequence(rng, skel, 4);
  bad.hand_joints.conservativeResize(4, 3 * (skel.hand_joints + 1));
  CHECK_THROWS_AS(pack(bad, skel), ShapeError);

  HOISequence short_seq = random_sequence(rng, skel, 4);
  short_seq.body_joints.conservativeResize(1, Eigen::NoChange);
  CHECK_THROWS_AS(short_seq.validate(skel), ShapeError);
}

TEST_CASE("unpack rejects width mismatches") {
  SkeletonConfig skel;
  TokenGrid g = TokenGrid::zeros(3, skel);
  g.hand.conservativeResize(3, g.hand.cols() + 1);
  CHECK_THROWS_AS(unpack(g, skel), ShapeError);
}

TEST_CASE("exactly the 6 non-trivial ordered partitions validate") {
  int ok = 0;
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      std::array<bool, 3> m1 = {bool(a & 1), bool(a & 2), bool(a & 4)};
      std::array<bool, 3> m2 = {bool(b & 1), bool(b & 2), bool(b & 4)};
      try {
        validate_partition(m1, m2);
        ++ok;
      } catch (const ConfigError&) {
      }
    }
  }
  CHECK(ok == 6);
}

TEST_CASE("partition examples from the ablation grid") {
  CHECK_NOTHROW(validate_partition(ModalityPartition::parse("bh|o")));
  CHECK_NOTHROW(validate_partition(ModalityPartition::parse("o|bh")));
  // overlap
  std::array<bool, 3> m1 = {true, false, false};
  std::array<bool, 3> m2 = {true, false, true};
  CHECK_THROWS_AS(validate_partition(m1, m2), ConfigError);
  // non-cover
  std::array<bool, 3> m3 = {true, false, false};
  std::array<bool, 3> m4 = {false, true, false};
  CHECK_THROWS_AS(validate_partition(m3, m4), ConfigError);
  // trivial group
  CHECK_THROWS_AS(ModalityPartition::parse("bho|"), ConfigError);
  CHECK_THROWS_AS(ModalityPartition::parse("b|h"), ConfigError);
  CHECK(ModalityPartition::parse("bh|o").str() == "bh|o");
  CHECK(ModalityPartition::of_m1({Modality::Object}).str() == "o|bh");
}

TEST_CASE("partition membership helpers") {
  ModalityPartition p = ModalityPartition::parse("bh|o");
  CHECK(p.in_m1(Modality::Body));
  CHECK(p.in_m1(Modality::Hand));
  CHECK(p.in_m2(Modality::Object));
}
