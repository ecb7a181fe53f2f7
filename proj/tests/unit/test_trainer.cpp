#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "music/diagnostics.hpp"
#include "music/trainer.hpp"

using namespace music;

namespace {

// small config + data that train in well under a second
TrainConfig toy_config() {
  TrainConfig c;
  c.batch_size = 32;
  c.epochs = 4;
  c.warmup_epochs = 1;
  c.seed = 7;
  c.segments = {2, 4};
  c.encoder_widths = {16, 8};
  c.projector_widths = {16};
  return c;
}

Dataset toy_data() { return gen_clusters(4, 4, 4, 32, 2.0, 0.5, 3); }

std::string strip_wall(const std::string& line) {
  const size_t pos = line.find(" wall_ms=");
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace

TEST_CASE("lr schedule endpoints and continuity") {
  TrainConfig c;
  c.batch_size = 256;
  c.epochs = 100;
  c.warmup_epochs = 10;
  c.base_lr = 0.6;
  c.final_lr = 0.002;
  const int64_t spe = 16;
  const int64_t warmup = 10 * spe;
  const int64_t total = 100 * spe;
  const double peak = 0.6 * 256.0 / 256.0;

  CHECK(lr_at(0, c, spe) == 0.0);
  CHECK(std::fabs(lr_at(warmup, c, spe) - peak) < 1e-12);
  CHECK(std::fabs(lr_at(total, c, spe) - 0.002) < 1e-12);

  // continuity across the warmup/cosine boundary
  const double before = lr_at(warmup - 1, c, spe);
  const double at = lr_at(warmup, c, spe);
  CHECK(std::fabs(at - before) < peak / warmup + 1e-12);
  // both closed forms evaluated at the boundary step agree
  const double warmup_form = peak * static_cast<double>(warmup) / static_cast<double>(warmup);
  CHECK(std::fabs(warmup_form - at) < 1e-12);

  // monotone decay after warmup
  CHECK(lr_at(warmup + spe, c, spe) < peak);
  CHECK(lr_at(total - 1, c, spe) > 0.002);

  CHECK_THROWS_AS((void)lr_at(-1, c, spe), UsageError);
  CHECK_THROWS_AS((void)lr_at(total + 1, c, spe), UsageError);
}

TEST_CASE("lr scales with batch size") {
  TrainConfig c;
  c.batch_size = 512;
  c.epochs = 2;
  c.warmup_epochs = 1;
  c.base_lr = 0.6;
  CHECK(std::fabs(lr_at(10, c, 10) - 0.6 * 512.0 / 256.0) < 1e-12);
}

TEST_CASE("run config round-trips and rejects bad input") {
  TrainConfig c = toy_config();
  c.lambda = 0.25;
  c.augment.gaussian_noise_std = 0.123;
  const std::string text = serialize_run_config(c);
  const TrainConfig parsed = parse_run_config(text);
  CHECK(parsed == c);
  CHECK(serialize_run_config(parsed) == text);

  CHECK_THROWS_WITH_AS((void)parse_run_config("bogus_key=3\n"), doctest::Contains("bogus_key"),
                       ConfigError);
  CHECK_THROWS_WITH_AS((void)parse_run_config("epochs=2\nepochs=3\n"), doctest::Contains("duplicate"),
                       ConfigError);
  CHECK_THROWS_AS((void)parse_run_config("epochs=two\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_run_config("momentum=1.5\n"), ConfigError);
  // comments and blank lines are fine
  CHECK(parse_run_config("# comment\n\nbatch_size=64\n").batch_size == 64);
}

TEST_CASE("config validation catches the documented constraints") {
  TrainConfig c = toy_config();
  c.batch_size = 3;  // < D_S = 4
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.warmup_epochs = c.epochs;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.optimizer = "adam";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  TrainConfig c = toy_config();
  c.base_lr = 0.0;
  c.final_lr = 0.0;
  c.weight_decay = 0.0;
  const Dataset data = toy_data();
  ModelParams params = init_model(c.encoder_spec(data.dim()), c.projector_spec(), c.seed);
  const ModelParams before = params;
  OptimizerState opt = make_optimizer_state(params);
  std::vector<int> batch(static_cast<size_t>(c.batch_size));
  for (int i = 0; i < c.batch_size; ++i) batch[static_cast<size_t>(i)] = i;
  (void)train_step(params, opt, data, batch, c, 0, 4);
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    CHECK(params.encoder[l].w == before.encoder[l].w);
    CHECK(params.encoder[l].b == before.encoder[l].b);
  }
}

TEST_CASE("weight decay applies to weights only, never biases") {
  TrainConfig c = toy_config();
  c.weight_decay = 0.5;
  TrainConfig c0 = c;
  c0.weight_decay = 0.0;
  const Dataset data = toy_data();
  std::vector<int> batch(static_cast<size_t>(c.batch_size));
  for (int i = 0; i < c.batch_size; ++i) batch[static_cast<size_t>(i)] = i;

  ModelParams pd = init_model(c.encoder_spec(data.dim()), c.projector_spec(), c.seed);
  ModelParams p0 = pd;
  OptimizerState od = make_optimizer_state(pd);
  OptimizerState o0 = make_optimizer_state(p0);
  (void)train_step(pd, od, data, batch, c, 1, 4);
  (void)train_step(p0, o0, data, batch, c0, 1, 4);
  for (size_t l = 0; l < pd.encoder.size(); ++l) {
    CHECK(pd.encoder[l].b == p0.encoder[l].b);  // bias path identical
    CHECK(pd.encoder[l].w != p0.encoder[l].w);  // weights shrink under decay
  }
}

TEST_CASE("a single step is bit-reproducible") {
  const TrainConfig c = toy_config();
  const Dataset data = toy_data();
  std::vector<int> batch(static_cast<size_t>(c.batch_size));
  for (int i = 0; i < c.batch_size; ++i) batch[static_cast<size_t>(i)] = i + 5;

  ModelParams p1 = init_model(c.encoder_spec(data.dim()), c.projector_spec(), c.seed);
  ModelParams p2 = p1;
  OptimizerState o1 = make_optimizer_state(p1);
  OptimizerState o2 = make_optimizer_state(p2);
  const StepResult r1 = train_step(p1, o1, data, batch, c, 3, 4);
  const StepResult r2 = train_step(p2, o2, data, batch, c, 3, 4);
  CHECK(r1.loss.total == r2.loss.total);
  for (size_t l = 0; l < p1.encoder.size(); ++l) CHECK(p1.encoder[l].w == p2.encoder[l].w);
  for (size_t l = 0; l < p1.projector.size(); ++l) CHECK(p1.projector[l].w == p2.projector[l].w);
}

TEST_CASE("loss trends down over 100 toy steps") {
  TrainConfig c = toy_config();
  c.epochs = 13;  // 13 epochs x 8 steps = 104 steps
  const Dataset data = toy_data();
  const FitResult result = fit(data, c);
  REQUIRE(result.metrics.size() == 13);
  // smoothed: mean of the first two epochs vs the last two
  const double head = (result.metrics[0].loss_total + result.metrics[1].loss_total) / 2;
  const double tail = (result.metrics[11].loss_total + result.metrics[12].loss_total) / 2;
  CHECK(tail < head);
}

TEST_CASE("fit with zero epochs emits only the initial checkpoint") {
  TrainConfig c = toy_config();
  c.epochs = 0;
  c.warmup_epochs = 0;
  const Dataset data = toy_data();
  const FitResult result = fit(data, c);
  CHECK(result.metrics.empty());
  CHECK(result.checkpoint.step == 0);
  CHECK(result.checkpoint.metrics_tail.empty());
  const ModelParams fresh = init_model(c.encoder_spec(data.dim()), c.projector_spec(), c.seed);
  CHECK(result.checkpoint.params.encoder[0].w == fresh.encoder[0].w);
}

TEST_CASE("fit rejects datasets smaller than one batch") {
  TrainConfig c = toy_config();
  c.batch_size = 1024;
  CHECK_THROWS_AS((void)fit(toy_data(), c), ConfigError);
}

TEST_CASE("two runs with the same seed produce identical metrics") {
  const TrainConfig c = toy_config();
  const Dataset data = toy_data();
  const FitResult a = fit(data, c);
  const FitResult b = fit(data, c);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (size_t i = 0; i < a.metrics.size(); ++i)
    CHECK(strip_wall(a.metrics[i].to_line()) == strip_wall(b.metrics[i].to_line()));
  for (size_t l = 0; l < a.checkpoint.params.encoder.size(); ++l)
    CHECK(a.checkpoint.params.encoder[l].w == b.checkpoint.params.encoder[l].w);
}

TEST_CASE("metrics lines round-trip") {
  MetricsRecord r;
  r.epoch = 3;
  r.lr = 0.12345;
  r.loss_total = -1.25;
  r.loss_ent = -1.5;
  r.loss_ent_diag = -0.5;
  r.loss_ent_offdiag = -1.0;
  r.loss_ti = 0.25;
  r.marginal_entropy_mean = 1.9;
  r.collapse_fraction = 0.31;
  r.marginal_dev_max = 0.05;
  r.wall_ms = 12.5;
  const MetricsRecord parsed = MetricsRecord::from_line(r.to_line());
  CHECK(parsed.epoch == r.epoch);
  CHECK(parsed.lr == r.lr);
  CHECK(parsed.loss_total == r.loss_total);
  CHECK(parsed.collapse_fraction == r.collapse_fraction);
  CHECK(parsed.marginal_dev_max == r.marginal_dev_max);
  CHECK(parsed.wall_ms == r.wall_ms);
  CHECK_THROWS_AS((void)MetricsRecord::from_line("nonsense"), ConfigError);
}

TEST_CASE("checkpoints round-trip exactly and reproduce forward outputs") {
  TrainConfig c = toy_config();
  c.epochs = 2;
  const Dataset data = toy_data();
  const FitResult result = fit(data, c);

  const auto tmp = std::filesystem::temp_directory_path();
  const std::string path = (tmp / "music_ckpt_rt.txt").string();
  save_checkpoint(result.checkpoint, path);
  const Checkpoint loaded = load_checkpoint(path);

  CHECK(loaded.config == result.checkpoint.config);
  CHECK(loaded.step == result.checkpoint.step);
  CHECK(loaded.input_dim == result.checkpoint.input_dim);
  CHECK(loaded.metrics_tail == result.checkpoint.metrics_tail);
  for (size_t l = 0; l < loaded.params.encoder.size(); ++l) {
    CHECK(loaded.params.encoder[l].w == result.checkpoint.params.encoder[l].w);
    CHECK(loaded.params.encoder[l].b == result.checkpoint.params.encoder[l].b);
  }

  const std::vector<Real> before = compute_representations(
      result.checkpoint.params, data.samples, data.size(), data.dim());
  const std::vector<Real> after =
      compute_representations(loaded.params, data.samples, data.size(), data.dim());
  CHECK(before == after);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects missing, corrupt, and truncated files") {
  const auto tmp = std::filesystem::temp_directory_path();
  CHECK_THROWS_AS((void)load_checkpoint((tmp / "music_no_such_ckpt.txt").string()), ConfigError);

  const std::string bad = (tmp / "music_ckpt_bad.txt").string();
  {
    std::ofstream f(bad);
    f << "music-checkpoint v9\n";
  }
  CHECK_THROWS_WITH_AS((void)load_checkpoint(bad), doctest::Contains("version"), ConfigError);

  TrainConfig c = toy_config();
  c.epochs = 0;
  c.warmup_epochs = 0;
  const FitResult result = fit(toy_data(), c);
  const std::string good = (tmp / "music_ckpt_good.txt").string();
  save_checkpoint(result.checkpoint, good);
  std::ifstream in(good, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string full = ss.str();
  {
    std::ofstream f(bad, std::ios::binary);
    f << full.substr(0, full.size() * 2 / 3);
  }
  CHECK_THROWS_AS((void)load_checkpoint(bad), ConfigError);
  std::filesystem::remove(bad);
  std::filesystem::remove(good);
}

TEST_CASE("non-finite losses abort with a diagnostic breakdown") {
  // the clamped ops keep finite inputs finite, so poison a parameter: an
  // infinite projector bias reaches the softmax as inf - inf = nan
  const TrainConfig c = toy_config();
  const Dataset data = toy_data();
  ModelParams params = init_model(c.encoder_spec(data.dim()), c.projector_spec(), c.seed);
  params.projector.back().b[0] = std::numeric_limits<Real>::infinity();
  OptimizerState opt = make_optimizer_state(params);
  std::vector<int> batch(static_cast<size_t>(c.batch_size));
  for (int i = 0; i < c.batch_size; ++i) batch[static_cast<size_t>(i)] = i;
  CHECK_THROWS_WITH_AS((void)train_step(params, opt, data, batch, c, 0, 4),
                       doctest::Contains("non-finite"), NumericError);
}
