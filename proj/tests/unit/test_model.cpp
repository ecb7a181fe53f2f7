#include <cmath>

#include <doctest.h>

#include "music/coder.hpp"
#include "music/loss.hpp"
#include "music/model.hpp"
#include "music/rng.hpp"

using namespace music;

TEST_CASE("init is deterministic per seed, biases zero") {
  const MlpSpec enc{{4, 8, 6}};
  const MlpSpec proj{{6, 8, 4}};
  const ModelParams a = init_model(enc, proj, 42);
  const ModelParams b = init_model(enc, proj, 42);
  const ModelParams c = init_model(enc, proj, 43);
  REQUIRE(a.encoder.size() == 2);
  for (size_t l = 0; l < a.encoder.size(); ++l) {
    CHECK(a.encoder[l].w == b.encoder[l].w);
    for (Real bias : a.encoder[l].b) CHECK(bias == 0.0);
  }
  CHECK(a.projector[0].w == b.projector[0].w);
  CHECK(a.encoder[0].w != c.encoder[0].w);
}

TEST_CASE("init rejects mismatched encoder/projector widths") {
  CHECK_THROWS_AS((void)init_model(MlpSpec{{4, 8}}, MlpSpec{{6, 4}}, 0), ConfigError);
  CHECK_THROWS_AS((void)init_model(MlpSpec{{4}}, MlpSpec{{4, 4}}, 0), ConfigError);
  CHECK_THROWS_AS((void)init_model(MlpSpec{{4, 0}}, MlpSpec{{0, 4}}, 0), ConfigError);
}

TEST_CASE("forward shapes propagate for 1-, 2-, 3-layer stacks") {
  for (const MlpSpec& enc : {MlpSpec{{5, 3}}, MlpSpec{{5, 7, 3}}, MlpSpec{{5, 9, 7, 3}}}) {
    const MlpSpec proj{{3, 4}};
    const ModelParams params = init_model(enc, proj, 1);
    Tape tape;
    TapedModel model = bind_model(tape, params);
    Var x = tape.zeros({2, 5});
    Var rep = encode(tape, model, x);
    CHECK(rep.shape() == Shape{2, 3});
    Var emb = project(tape, model, rep);
    CHECK(emb.shape() == Shape{2, 4});
  }
}

TEST_CASE("zero input through zero biases stays zero") {
  const ModelParams params = init_model(MlpSpec{{4, 6}}, MlpSpec{{6, 4}}, 3);
  Tape tape;
  TapedModel model = bind_model(tape, params);
  Var rep = encode(tape, model, tape.zeros({3, 4}));
  for (Real v : rep.values()) CHECK(v == 0.0);
}

TEST_CASE("encode rejects wrong input width") {
  const ModelParams params = init_model(MlpSpec{{4, 6}}, MlpSpec{{6, 4}}, 3);
  Tape tape;
  TapedModel model = bind_model(tape, params);
  CHECK_THROWS_AS((void)encode(tape, model, tape.zeros({3, 5})), ConfigError);
}

TEST_CASE("encode and project are deterministic functions of params and input") {
  const ModelParams params = init_model(MlpSpec{{4, 6, 5}}, MlpSpec{{5, 6, 4}}, 9);
  Rng rng(derive_stream(17, 0xF00D));
  std::vector<Real> x(8);
  for (Real& v : x) v = rng.normal();
  std::vector<Real> first;
  for (int run = 0; run < 2; ++run) {
    Tape tape;
    TapedModel model = bind_model(tape, params);
    Var out = project(tape, model, encode(tape, model, tape.leaf({2, 4}, x)));
    if (run == 0) {
      first.assign(out.values().begin(), out.values().end());
    } else {
      for (size_t i = 0; i < first.size(); ++i) CHECK(out.values()[i] == first[i]);
    }
  }
}

TEST_CASE("full loss gradient through a tiny model passes finite differences") {
  const SegmentConfig config{2, 2};
  const MlpSpec enc{{3, 6, 4}};
  const MlpSpec proj{{4, 6, config.embed_dim()}};
  const ModelParams params = init_model(enc, proj, 5);

  Rng rng(derive_stream(5, 0xBEEF));
  const int n = 4;
  std::vector<LeafSpec> leaves;
  for (const char* name : {"view1", "view2"}) {
    LeafSpec spec{{n, 3}, {}, name};
    spec.values.resize(static_cast<size_t>(n) * 3);
    for (Real& v : spec.values) v = rng.normal();
    leaves.push_back(std::move(spec));
  }
  for (const auto& [layers, prefix] :
       {std::pair{&params.encoder, "enc"}, std::pair{&params.projector, "proj"}})
    for (size_t l = 0; l < layers->size(); ++l) {
      const LayerParams& p = (*layers)[l];
      leaves.push_back({{p.in, p.out}, p.w, std::string(prefix) + ".w" + std::to_string(l)});
      leaves.push_back({{p.out}, p.b, std::string(prefix) + ".b" + std::to_string(l)});
    }

  const ScalarGraph f = [&](Tape& tape, std::span<const Var> vars) {
    TapedModel model;
    model.encoder = {{vars[2], vars[3]}, {vars[4], vars[5]}};
    model.projector = {{vars[6], vars[7]}, {vars[8], vars[9]}};
    ProbCode p1 = code_embedding(tape, project(tape, model, encode(tape, model, vars[0])), config);
    ProbCode p2 = code_embedding(tape, project(tape, model, encode(tape, model, vars[1])), config);
    return total_loss(tape, p1, p2, 1.0).total;
  };
  const GradCheckReport report = grad_check(f, leaves, 1e-6);
  CAPTURE(report.summary());
  CHECK(report.pass(1e-5));
}
