#include <cmath>

#include <doctest.h>

#include "music/coder.hpp"
#include "music/rng.hpp"

using namespace music;

TEST_CASE("segment config enforces D_S >= 2 and derives D") {
  CHECK(SegmentConfig{4, 8}.embed_dim() == 32);
  CHECK_THROWS_AS((SegmentConfig{4, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((SegmentConfig{0, 4}.validate()), ConfigError);
}

TEST_CASE("partition is pure index arithmetic") {
  Tape tape;
  const SegmentConfig config{2, 2};
  Var z = tape.leaf({1, 4}, {1.0, 2.0, 3.0, 4.0});
  Var seg = partition(tape, z, config);
  CHECK(seg.shape() == Shape{1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(seg.values()[static_cast<size_t>(i)] == i + 1);

  // S=1: the single segment is the whole vector
  const SegmentConfig whole{1, 4};
  Var one = partition(tape, z, whole);
  CHECK(one.shape() == Shape{1, 1, 4});

  // partition -> flatten round-trips
  Var flat = tape.reshape(seg, {1, 4});
  for (int i = 0; i < 4; ++i) CHECK(flat.values()[static_cast<size_t>(i)] == z.values()[static_cast<size_t>(i)]);

  CHECK_THROWS_AS((void)partition(tape, tape.leaf({1, 6}, {1, 2, 3, 4, 5, 6}), config), ConfigError);
}

TEST_CASE("segment softmax matches analytic values incl. shift invariance") {
  Tape tape;
  const SegmentConfig config{1, 4};
  ProbCode flat = segment_softmax(tape, tape.leaf({1, 1, 4}, {0, 0, 0, 0}), config);
  for (Real v : flat.values.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  const SegmentConfig pairs{1, 2};
  ProbCode p = segment_softmax(tape, tape.leaf({1, 1, 2}, {0.0, std::log(3.0)}), pairs);
  CHECK(p.values.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.values.values()[1] == doctest::Approx(0.75).epsilon(1e-12));

  ProbCode shifted = segment_softmax(tape, tape.leaf({1, 1, 2}, {10.0, 10.0 + std::log(3.0)}), pairs);
  CHECK(std::fabs(shifted.values.values()[0] - 0.25) < 1e-12);
  CHECK(std::fabs(shifted.values.values()[1] - 0.75) < 1e-12);
}

TEST_CASE("codes stay normalized for arbitrary finite inputs") {
  const SegmentConfig config{3, 5};
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_stream(seed, 0xC0DE));
    const int n = 4;
    std::vector<Real> z(static_cast<size_t>(n) * config.embed_dim());
    for (Real& v : z) v = rng.uniform(-50.0, 50.0);
    Tape tape;
    ProbCode code = code_embedding(tape, tape.leaf({n, config.embed_dim()}, z), config);
    std::span<const Real> p = code.values.values();
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < config.num_segments; ++s) {
        Real sum = 0;
        for (int d = 0; d < config.segment_dim; ++d) {
          const Real v = p[(static_cast<size_t>(i) * config.num_segments + s) * config.segment_dim + d];
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
      }
  }
}

TEST_CASE("segment softmax commutes with unit permutations") {
  const SegmentConfig config{1, 4};
  const std::vector<int> perm{2, 0, 3, 1};
  Rng rng(derive_stream(99, 0xC0DE));
  std::vector<Real> z(4);
  for (Real& v : z) v = rng.normal();

  Tape tape;
  ProbCode direct = segment_softmax(tape, tape.leaf({1, 1, 4}, z), config);
  std::vector<Real> zp(4);
  for (int d = 0; d < 4; ++d) zp[static_cast<size_t>(perm[static_cast<size_t>(d)])] = z[static_cast<size_t>(d)];
  ProbCode permuted = segment_softmax(tape, tape.leaf({1, 1, 4}, zp), config);
  for (int d = 0; d < 4; ++d)
    CHECK(permuted.values.values()[static_cast<size_t>(perm[static_cast<size_t>(d)])] ==
          doctest::Approx(direct.values.values()[static_cast<size_t>(d)]).epsilon(1e-14));
}
