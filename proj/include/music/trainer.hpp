#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "music/data.hpp"
#include "music/loss.hpp"
#include "music/model.hpp"

namespace music {

// Desk-scale defaults: batch 256, 100 epochs, S=4, D_S=8 (D=32), SGD with
// momentum 0.9 in place of a large-batch optimizer. base_lr 0.3: the
// large-batch value 0.6 assumes layer-adaptive scaling and collapses the
// softmax codes when applied to plain SGD at this scale.
struct TrainConfig {
  int batch_size = 256;
  int epochs = 100;
  int warmup_epochs = 10;
  double base_lr = 0.3;
  double final_lr = 0.002;
  double lambda = 1.0;
  double weight_decay = 1e-6;
  double momentum = 0.9;
  uint64_t seed = 7;
  SegmentConfig segments{4, 8};
  // encoder: input_dim -> encoder_widths...; projector: rep -> projector_widths... -> embed_dim
  std::vector<int> encoder_widths{256, 128};
  std::vector<int> projector_widths{256};
  AugmentSpec augment{};
  std::string optimizer = "sgdm";

  void validate() const;
  MlpSpec encoder_spec(int input_dim) const;
  MlpSpec projector_spec() const;
  bool operator==(const TrainConfig&) const = default;
};

// Flat key=value document; parse -> serialize -> parse is the identity and
// unknown keys are rejected.
std::string serialize_run_config(const TrainConfig& config);
TrainConfig parse_run_config(const std::string& text);
TrainConfig load_run_config(const std::string& path);
void save_run_config(const TrainConfig& config, const std::string& path);

// Linear warmup from 0 to base_lr*batch_size/256 over the warmup steps, then
// cosine decay to final_lr at total_steps.
double lr_at(int64_t step, const TrainConfig& config, int64_t steps_per_epoch);

// One metrics line per epoch, `key=value` pairs in fixed order. wall_ms is
// measured time and is the only field exempt from byte-stability.
struct MetricsRecord {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0;
  double loss_ent = 0;  // the 1/S^2 training term
  double loss_ent_diag = 0;
  double loss_ent_offdiag = 0;
  double loss_ti = 0;
  double marginal_entropy_mean = 0;
  double collapse_fraction = 0;    // worst segment
  double wall_ms = 0;
  double marginal_dev_max = 0;     // worst segment's max deviation from 1/D_S

  std::string to_line() const;
  static MetricsRecord from_line(const std::string& line);
};

// Drops the wall_ms field; the rest of a metrics line is byte-stable across
// runs and this is the form stored in checkpoints and compared by tests.
std::string strip_wall_ms_field(const std::string& line);

struct OptimizerState {
  std::vector<std::vector<Real>> velocity_w;  // encoder layers then projector layers
  std::vector<std::vector<Real>> velocity_b;
};

OptimizerState make_optimizer_state(const ModelParams& params);

struct StepResult {
  LossBreakdown loss;
  double lr = 0;
  // per-(s,d) sum over the batch of view-1 code probabilities, for epoch stats
  std::vector<Real> code_sums;
};

// Two views, codes, loss, backward, SGD+momentum update with decoupled weight
// decay (biases excluded). Aborts with NumericError on a non-finite loss.
StepResult train_step(ModelParams& params, OptimizerState& opt, const Dataset& data,
                      std::span<const int> batch_indices, const TrainConfig& config,
                      int64_t step_index, int64_t steps_per_epoch);

struct Checkpoint {
  int format_version = 1;
  TrainConfig config;
  int input_dim = 0;
  int64_t step = 0;
  ModelParams params;
  std::string metrics_tail;  // last metrics line, empty before training
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct FitResult {
  Checkpoint checkpoint;
  std::vector<MetricsRecord> metrics;
};

// Seeded shuffled epochs, one metrics record per epoch (streamed to
// metrics_out when given), final checkpoint returned.
FitResult fit(const Dataset& data, const TrainConfig& config,
              std::ostream* metrics_out = nullptr, std::ostream* progress = nullptr);

}  // namespace music
