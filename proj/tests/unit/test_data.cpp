#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "music/data.hpp"
#include "music/diagnostics.hpp"

using namespace music;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gen_clusters produces balanced labeled samples, deterministically") {
  const Dataset a = gen_clusters(8, 4, 3, 16, 2.0, 0.5, 7);
  CHECK(a.size() == 128);
  CHECK(a.dim() == 7);
  std::vector<int> counts(8, 0);
  for (int y : a.labels) counts[static_cast<size_t>(y)]++;
  for (int c : counts) CHECK(c == 16);

  const Dataset b = gen_clusters(8, 4, 3, 16, 2.0, 0.5, 7);
  CHECK(a.samples == b.samples);
  CHECK(a.labels == b.labels);
  const Dataset c = gen_clusters(8, 4, 3, 16, 2.0, 0.5, 8);
  CHECK(a.samples != c.samples);

  CHECK_THROWS_AS((void)gen_clusters(1, 4, 3, 16, 2.0, 0.5, 7), ConfigError);
  CHECK_THROWS_AS((void)gen_clusters(4, 0, 3, 16, 2.0, 0.5, 7), ConfigError);
}

TEST_CASE("identity augmentation returns the sample untouched") {
  const AugmentSpec identity{0.0, 0.0, 1.0, 1.0};
  const std::vector<Real> x{0.5, -1.25, 3.0};
  auto [v1, v2] = two_views(x, identity, 3, 0, 0);
  CHECK(v1 == x);
  CHECK(v2 == x);
}

TEST_CASE("view streams replay bit-exactly and differ across views") {
  const AugmentSpec spec{0.3, 0.1, 0.8, 1.25};
  const std::vector<Real> x{0.5, -1.25, 3.0, 0.0};
  auto [a1, a2] = two_views(x, spec, 11, 4, 123);
  auto [b1, b2] = two_views(x, spec, 11, 4, 123);
  CHECK(a1 == b1);
  CHECK(a2 == b2);
  CHECK(a1 != a2);

  int differing = 0;
  for (int i = 0; i < 1000; ++i) {
    auto [v1, v2] = two_views(x, spec, 11, 0, i);
    if (v1 != v2) ++differing;
  }
  CHECK(differing == 1000);
}

TEST_CASE("augment spec validation") {
  CHECK_THROWS_AS((AugmentSpec{-0.1, 0.0, 1.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((AugmentSpec{0.0, 1.0, 1.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((AugmentSpec{0.0, 0.0, 1.5, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((AugmentSpec{0.0, 0.0, 0.0, 1.0}.validate()), ConfigError);
}

TEST_CASE("dataset file round-trips byte-identically") {
  const Dataset data = gen_clusters(3, 2, 2, 5, 1.5, 0.25, 99);
  const std::string path = (std::filesystem::temp_directory_path() / "music_data_rt.txt").string();
  save_dataset(data, path);
  const std::string bytes = slurp(path);
  const Dataset loaded = load_dataset(path);
  CHECK(loaded.samples == data.samples);
  CHECK(loaded.labels == data.labels);
  CHECK(loaded.seed == data.seed);
  CHECK(loaded.separation == data.separation);
  save_dataset(loaded, path);
  CHECK(slurp(path) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("dataset loader rejects malformed files") {
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string bad = (tmp / "music_data_bad.txt").string();
  {
    std::ofstream f(bad);
    f << "music-dataset v2 classes=2\n";
  }
  CHECK_THROWS_AS((void)load_dataset(bad), ConfigError);
  {
    std::ofstream f(bad);
    f << "music-dataset v1 classes=2 dim_signal=2 dim_nuisance=0 per_class=2 separation=1 "
         "noise_std=1 seed=0\n0 1.0 2.0\n0 1.0\n";
  }
  CHECK_THROWS_AS((void)load_dataset(bad), ConfigError);
  CHECK_THROWS_AS((void)load_dataset((tmp / "music_missing.txt").string()), ConfigError);
  std::filesystem::remove(bad);
}

TEST_CASE("zero separation leaves probes at chance level") {
  const Dataset data = gen_clusters(4, 4, 4, 100, 0.0, 1.0, 5);
  const ProbeResult r = linear_probe(data.samples, data.size(), data.dim(), data.labels,
                                     /*split_seed=*/1, /*epochs=*/200, /*lr=*/0.5);
  // 3-sigma binomial band around chance for n_test = 80
  const double sigma = std::sqrt(0.25 * 0.75 / r.n_test);
  CHECK(std::fabs(r.test_acc - 0.25) <= 3.0 * sigma + 1e-9);
}
