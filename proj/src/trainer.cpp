#include "music/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "music/textio.hpp"

namespace music {

namespace {

constexpr uint64_t kShuffleTag = 0x31;
constexpr double kPi = 3.14159265358979323846;

std::string join_widths(const std::vector<int>& widths) {
  std::string s;
  for (size_t i = 0; i < widths.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(widths[i]);
  }
  return s;
}

std::vector<int> split_widths(const std::string& s, const char* what) {
  std::vector<int> widths;
  std::string part;
  std::istringstream ss(s);
  while (std::getline(ss, part, ','))
    widths.push_back(static_cast<int>(parse_int(part, what)));
  if (widths.empty()) throw ConfigError(std::string(what) + ": empty width list");
  return widths;
}

}  // namespace

void TrainConfig::validate() const {
  segments.validate();
  augment.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (batch_size < segments.segment_dim)
    throw ConfigError("batch_size must be >= segment_dim for even assignment to be possible");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
  if (epochs > 0 && warmup_epochs >= epochs)
    throw ConfigError("warmup_epochs must be < epochs");
  if (base_lr < 0 || final_lr < 0) throw ConfigError("learning rates must be >= 0");
  if (lambda < 0) throw ConfigError("lambda must be >= 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0,1)");
  if (optimizer != "sgdm") throw ConfigError("unknown optimizer: " + optimizer);
  for (int w : encoder_widths)
    if (w < 1) throw ConfigError("encoder_widths must be positive");
  for (int w : projector_widths)
    if (w < 1) throw ConfigError("projector_widths must be positive");
  if (encoder_widths.empty()) throw ConfigError("encoder_widths must not be empty");
}

MlpSpec TrainConfig::encoder_spec(int input_dim) const {
  MlpSpec spec;
  spec.widths.push_back(input_dim);
  spec.widths.insert(spec.widths.end(), encoder_widths.begin(), encoder_widths.end());
  return spec;
}

MlpSpec TrainConfig::projector_spec() const {
  MlpSpec spec;
  spec.widths.push_back(encoder_widths.back());
  spec.widths.insert(spec.widths.end(), projector_widths.begin(), projector_widths.end());
  spec.widths.push_back(segments.embed_dim());
  return spec;
}

std::string serialize_run_config(const TrainConfig& c) {
  std::string out;
  out += "batch_size=" + std::to_string(c.batch_size) + "\n";
  out += "epochs=" + std::to_string(c.epochs) + "\n";
  out += "warmup_epochs=" + std::to_string(c.warmup_epochs) + "\n";
  out += "base_lr=" + fmt_real(c.base_lr) + "\n";
  out += "final_lr=" + fmt_real(c.final_lr) + "\n";
  out += "lambda=" + fmt_real(c.lambda) + "\n";
  out += "weight_decay=" + fmt_real(c.weight_decay) + "\n";
  out += "momentum=" + fmt_real(c.momentum) + "\n";
  out += "seed=" + std::to_string(c.seed) + "\n";
  out += "num_segments=" + std::to_string(c.segments.num_segments) + "\n";
  out += "segment_dim=" + std::to_string(c.segments.segment_dim) + "\n";
  out += "encoder_widths=" + join_widths(c.encoder_widths) + "\n";
  out += "projector_widths=" + join_widths(c.projector_widths) + "\n";
  out += "aug_noise_std=" + fmt_real(c.augment.gaussian_noise_std) + "\n";
  out += "aug_dropout_prob=" + fmt_real(c.augment.dropout_prob) + "\n";
  out += "aug_scale_lo=" + fmt_real(c.augment.scale_lo) + "\n";
  out += "aug_scale_hi=" + fmt_real(c.augment.scale_hi) + "\n";
  out += "optimizer=" + c.optimizer + "\n";
  return out;
}

TrainConfig parse_run_config(const std::string& text) {
  TrainConfig c;
  std::map<std::string, bool> seen;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line has no '=': " + line);
    std::string key = line.substr(first, eq - first);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();

    if (seen[key]) throw ConfigError("duplicate config key: " + key);
    seen[key] = true;

    if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(value, "batch_size"));
    else if (key == "epochs") c.epochs = static_cast<int>(parse_int(value, "epochs"));
    else if (key == "warmup_epochs") c.warmup_epochs = static_cast<int>(parse_int(value, "warmup_epochs"));
    else if (key == "base_lr") c.base_lr = parse_real(value, "base_lr");
    else if (key == "final_lr") c.final_lr = parse_real(value, "final_lr");
    else if (key == "lambda") c.lambda = parse_real(value, "lambda");
    else if (key == "weight_decay") c.weight_decay = parse_real(value, "weight_decay");
    else if (key == "momentum") c.momentum = parse_real(value, "momentum");
    else if (key == "seed") c.seed = parse_u64(value, "seed");
    else if (key == "num_segments") c.segments.num_segments = static_cast<int>(parse_int(value, "num_segments"));
    else if (key == "segment_dim") c.segments.segment_dim = static_cast<int>(parse_int(value, "segment_dim"));
    else if (key == "encoder_widths") c.encoder_widths = split_widths(value, "encoder_widths");
    else if (key == "projector_widths") c.projector_widths = split_widths(value, "projector_widths");
    else if (key == "aug_noise_std") c.augment.gaussian_noise_std = parse_real(value, "aug_noise_std");
    else if (key == "aug_dropout_prob") c.augment.dropout_prob = parse_real(value, "aug_dropout_prob");
    else if (key == "aug_scale_lo") c.augment.scale_lo = parse_real(value, "aug_scale_lo");
    else if (key == "aug_scale_hi") c.augment.scale_hi = parse_real(value, "aug_scale_hi");
    else if (key == "optimizer") c.optimizer = value;
    else throw ConfigError("unknown config key: " + key);
  }
  c.validate();
  return c;
}

TrainConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str());
}

void save_run_config(const TrainConfig& config, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write config file: " + path);
  f << serialize_run_config(config);
}

double lr_at(int64_t step, const TrainConfig& config, int64_t steps_per_epoch) {
  config.validate();
  if (config.epochs == 0) throw UsageError("lr_at: schedule undefined for epochs=0");
  if (steps_per_epoch < 1) throw UsageError("lr_at: steps_per_epoch must be >= 1");
  const int64_t total = static_cast<int64_t>(config.epochs) * steps_per_epoch;
  const int64_t warmup = static_cast<int64_t>(config.warmup_epochs) * steps_per_epoch;
  if (step < 0 || step > total)
    throw UsageError("lr_at: step " + std::to_string(step) + " outside [0," +
                     std::to_string(total) + "]");
  const double peak = config.base_lr * static_cast<double>(config.batch_size) / 256.0;
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return config.final_lr + (peak - config.final_lr) * 0.5 * (1.0 + std::cos(kPi * progress));
}

std::string MetricsRecord::to_line() const {
  char wall[32];
  std::snprintf(wall, sizeof(wall), "%.3f", wall_ms);
  std::string s;
  s += "epoch=" + std::to_string(epoch);
  s += " lr=" + fmt_real(lr);
  s += " loss_total=" + fmt_real(loss_total);
  s += " loss_ent=" + fmt_real(loss_ent);
  s += " loss_ent_diag=" + fmt_real(loss_ent_diag);
  s += " loss_ent_offdiag=" + fmt_real(loss_ent_offdiag);
  s += " loss_ti=" + fmt_real(loss_ti);
  s += " marginal_entropy_mean=" + fmt_real(marginal_entropy_mean);
  s += " collapse_fraction=" + fmt_real(collapse_fraction);
  s += " marginal_dev_max=" + fmt_real(marginal_dev_max);
  s += " wall_ms=" + std::string(wall);
  return s;
}

std::string strip_wall_ms_field(const std::string& line) {
  const size_t pos = line.find(" wall_ms=");
  if (pos == std::string::npos) return line;
  const size_t end = line.find(' ', pos + 1);
  return end == std::string::npos ? line.substr(0, pos) : line.substr(0, pos) + line.substr(end);
}

MetricsRecord MetricsRecord::from_line(const std::string& line) {
  MetricsRecord r;
  std::istringstream ss(line);
  std::string token;
  int got = 0;
  while (ss >> token) {
    const size_t eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("bad metrics token: " + token);
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    ++got;
    if (key == "epoch") r.epoch = static_cast<int>(parse_int(value, "epoch"));
    else if (key == "lr") r.lr = parse_real(value, "lr");
    else if (key == "loss_total") r.loss_total = parse_real(value, "loss_total");
    else if (key == "loss_ent") r.loss_ent = parse_real(value, "loss_ent");
    else if (key == "loss_ent_diag") r.loss_ent_diag = parse_real(value, "loss_ent_diag");
    else if (key == "loss_ent_offdiag") r.loss_ent_offdiag = parse_real(value, "loss_ent_offdiag");
    else if (key == "loss_ti") r.loss_ti = parse_real(value, "loss_ti");
    else if (key == "marginal_entropy_mean") r.marginal_entropy_mean = parse_real(value, "marginal_entropy_mean");
    else if (key == "collapse_fraction") r.collapse_fraction = parse_real(value, "collapse_fraction");
    else if (key == "marginal_dev_max") r.marginal_dev_max = parse_real(value, "marginal_dev_max");
    else if (key == "wall_ms") r.wall_ms = parse_real(value, "wall_ms");
    else throw ConfigError("unknown metrics key: " + key);
  }
  if (got == 0) throw ConfigError("empty metrics line");
  return r;
}

OptimizerState make_optimizer_state(const ModelParams& params) {
  OptimizerState opt;
  const auto add = [&](const std::vector<LayerParams>& layers) {
    for (const LayerParams& p : layers) {
      opt.velocity_w.emplace_back(p.w.size(), 0.0);
      opt.velocity_b.emplace_back(p.b.size(), 0.0);
    }
  };
  add(params.encoder);
  add(params.projector);
  return opt;
}

StepResult train_step(ModelParams& params, OptimizerState& opt, const Dataset& data,
                      std::span<const int> batch_indices, const TrainConfig& config,
                      int64_t step_index, int64_t steps_per_epoch) {
  const int n = static_cast<int>(batch_indices.size());
  if (n != config.batch_size)
    throw UsageError("train_step: batch of " + std::to_string(n) + ", config says " +
                     std::to_string(config.batch_size));
  const int dim = data.dim();
  const int64_t epoch = step_index / steps_per_epoch;

  std::vector<Real> v1(static_cast<size_t>(n) * dim);
  std::vector<Real> v2(static_cast<size_t>(n) * dim);
  for (int i = 0; i < n; ++i) {
    const int idx = batch_indices[static_cast<size_t>(i)];
    Rng s1 = view_stream(config.seed, epoch, idx, 1);
    Rng s2 = view_stream(config.seed, epoch, idx, 2);
    augment_view(data.sample(idx), config.augment, s1,
                 {v1.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)});
    augment_view(data.sample(idx), config.augment, s2,
                 {v2.data() + static_cast<size_t>(i) * dim, static_cast<size_t>(dim)});
  }

  Tape tape;
  Var x1 = tape.leaf({n, dim}, std::move(v1), "view1");
  Var x2 = tape.leaf({n, dim}, std::move(v2), "view2");
  TapedModel model = bind_model(tape, params);
  ProbCode p1 = code_embedding(tape, project(tape, model, encode(tape, model, x1)), config.segments);
  ProbCode p2 = code_embedding(tape, project(tape, model, encode(tape, model, x2)), config.segments);
  LossGraph graph = total_loss(tape, p1, p2, config.lambda);

  StepResult result;
  result.loss = read_breakdown(graph, config.lambda);
  if (!result.loss.finite())
    throw NumericError("non-finite loss at step " + std::to_string(step_index) + ": " +
                       result.loss.str());
  result.lr = lr_at(step_index, config, steps_per_epoch);

  tape.backward(graph.total);

  // SGD with momentum; weight decay is decoupled from the gradient and never
  // applied to biases.
  size_t slot = 0;
  const auto update_stack = [&](std::vector<LayerParams>& layers,
                                const std::vector<std::pair<Var, Var>>& bound) {
    for (size_t l = 0; l < layers.size(); ++l, ++slot) {
      std::span<const Real> gw = bound[l].first.grad();
      std::span<const Real> gb = bound[l].second.grad();
      std::vector<Real>& vw = opt.velocity_w[slot];
      std::vector<Real>& vb = opt.velocity_b[slot];
      std::vector<Real>& w = layers[l].w;
      std::vector<Real>& b = layers[l].b;
      for (size_t i = 0; i < w.size(); ++i) {
        vw[i] = config.momentum * vw[i] + gw[i];
        w[i] -= result.lr * (vw[i] + config.weight_decay * w[i]);
      }
      for (size_t i = 0; i < b.size(); ++i) {
        vb[i] = config.momentum * vb[i] + gb[i];
        b[i] -= result.lr * vb[i];
      }
      quantize_span(w);
      quantize_span(b);
    }
  };
  update_stack(params.encoder, model.encoder);
  update_stack(params.projector, model.projector);

  const int s = config.segments.num_segments;
  const int ds = config.segments.segment_dim;
  result.code_sums.assign(static_cast<size_t>(s) * ds, 0.0);
  std::span<const Real> codes = p1.values.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < s * ds; ++j)
      result.code_sums[static_cast<size_t>(j)] += codes[static_cast<size_t>(i) * s * ds + j];
  return result;
}

namespace {

const char* const kCheckpointMagic = "music-checkpoint v1";

void write_layer(std::string& out, const char* stack, size_t index, const LayerParams& p) {
  out += "layer " + std::string(stack) + " " + std::to_string(index) + " in=" +
         std::to_string(p.in) + " out=" + std::to_string(p.out) + "\n";
  for (int r = 0; r < p.in; ++r) {
    out += "w";
    for (int c = 0; c < p.out; ++c) {
      out += ' ';
      out += fmt_real(p.w[static_cast<size_t>(r) * p.out + c]);
    }
    out += '\n';
  }
  out += "b";
  for (int c = 0; c < p.out; ++c) {
    out += ' ';
    out += fmt_real(p.b[static_cast<size_t>(c)]);
  }
  out += '\n';
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out += std::string(kCheckpointMagic) + "\n";
  out += "input_dim=" + std::to_string(ckpt.input_dim) + "\n";
  out += "step=" + std::to_string(ckpt.step) + "\n";
  out += "[config]\n";
  out += serialize_run_config(ckpt.config);
  out += "[metrics_tail]\n";
  out += (ckpt.metrics_tail.empty() ? "(none)" : ckpt.metrics_tail) + "\n";
  out += "[params]\n";
  for (size_t l = 0; l < ckpt.params.encoder.size(); ++l)
    write_layer(out, "enc", l, ckpt.params.encoder[l]);
  for (size_t l = 0; l < ckpt.params.projector.size(); ++l)
    write_layer(out, "proj", l, ckpt.params.projector[l]);
  out += "end\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write checkpoint: " + path);
  f << out;
  if (!f) throw ConfigError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read checkpoint: " + path);
  std::string line;
  if (!std::getline(f, line) || line != kCheckpointMagic)
    throw ConfigError("not a music checkpoint (or unsupported version): " + path);

  Checkpoint ckpt;
  const auto expect_line = [&](const char* what) {
    if (!std::getline(f, line)) throw ConfigError(std::string("truncated checkpoint (") + what + "): " + path);
    return line;
  };

  std::string l = expect_line("input_dim");
  if (l.rfind("input_dim=", 0) != 0) throw ConfigError("expected input_dim in " + path);
  ckpt.input_dim = static_cast<int>(parse_int(l.substr(10), "input_dim"));
  l = expect_line("step");
  if (l.rfind("step=", 0) != 0) throw ConfigError("expected step in " + path);
  ckpt.step = parse_int(l.substr(5), "step");
  if (expect_line("[config]") != "[config]") throw ConfigError("expected [config] in " + path);

  std::string config_text;
  while (expect_line("config body") != "[metrics_tail]") config_text += line + "\n";
  ckpt.config = parse_run_config(config_text);

  ckpt.metrics_tail = expect_line("metrics tail");
  if (ckpt.metrics_tail == "(none)") ckpt.metrics_tail.clear();
  if (expect_line("[params]") != "[params]") throw ConfigError("expected [params] in " + path);

  const MlpSpec enc_spec = ckpt.config.encoder_spec(ckpt.input_dim);
  const MlpSpec proj_spec = ckpt.config.projector_spec();
  ckpt.params.encoder_spec = enc_spec;
  ckpt.params.projector_spec = proj_spec;
  ckpt.params.seed = ckpt.config.seed;

  const auto read_stack = [&](const MlpSpec& spec, const char* stack) {
    std::vector<LayerParams> layers;
    for (int li = 0; li < spec.layers(); ++li) {
      std::string head = expect_line("layer header");
      char stack_buf[8] = {0};
      int index = 0, in = 0, out = 0;
      if (std::sscanf(head.c_str(), "layer %7s %d in=%d out=%d", stack_buf, &index, &in, &out) != 4 ||
          std::string(stack_buf) != stack || index != li)
        throw ConfigError("bad layer header '" + head + "' in " + path);
      if (in != spec.widths[static_cast<size_t>(li)] || out != spec.widths[static_cast<size_t>(li) + 1])
        throw ConfigError("layer shape mismatch with config in " + path);
      LayerParams p;
      p.in = in;
      p.out = out;
      p.w.reserve(static_cast<size_t>(in) * out);
      for (int r = 0; r < in; ++r) {
        std::istringstream ss(expect_line("weight row"));
        std::string tag;
        ss >> tag;
        if (tag != "w") throw ConfigError("expected weight row in " + path);
        Real v = 0;
        while (ss >> v) p.w.push_back(v);
        if (static_cast<int>(p.w.size()) != (r + 1) * out)
          throw ConfigError("weight row of wrong length in " + path);
      }
      std::istringstream ss(expect_line("bias row"));
      std::string tag;
      ss >> tag;
      if (tag != "b") throw ConfigError("expected bias row in " + path);
      Real v = 0;
      while (ss >> v) p.b.push_back(v);
      if (static_cast<int>(p.b.size()) != out)
        throw ConfigError("bias row of wrong length in " + path);
      layers.push_back(std::move(p));
    }
    return layers;
  };
  ckpt.params.encoder = read_stack(enc_spec, "enc");
  ckpt.params.projector = read_stack(proj_spec, "proj");
  if (expect_line("end") != "end") throw ConfigError("truncated checkpoint (missing end): " + path);
  return ckpt;
}

FitResult fit(const Dataset& data, const TrainConfig& config, std::ostream* metrics_out,
              std::ostream* progress) {
  config.validate();
  if (data.size() < config.batch_size)
    throw ConfigError("dataset of " + std::to_string(data.size()) +
                      " samples is smaller than batch_size " + std::to_string(config.batch_size));

  const int input_dim = data.dim();
  const MlpSpec enc_spec = config.encoder_spec(input_dim);
  const MlpSpec proj_spec = config.projector_spec();
  if (proj_spec.output_dim() != config.segments.embed_dim())
    throw ConfigError("projector output does not match S*D_S");

  FitResult result;
  result.checkpoint.config = config;
  result.checkpoint.input_dim = input_dim;
  result.checkpoint.params = init_model(enc_spec, proj_spec, config.seed);

  const int64_t steps_per_epoch = data.size() / config.batch_size;
  const int64_t total_steps = static_cast<int64_t>(config.epochs) * steps_per_epoch;
  OptimizerState opt = make_optimizer_state(result.checkpoint.params);

  const int s = config.segments.num_segments;
  const int ds = config.segments.segment_dim;
  std::vector<int> indices(static_cast<size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) indices[static_cast<size_t>(i)] = i;

  int64_t step_index = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_stream(config.seed, kShuffleTag, static_cast<uint64_t>(epoch)));
    for (size_t i = indices.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(shuffle_rng.below(i));
      std::swap(indices[i - 1], indices[j]);
    }

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    std::vector<Real> marginal_sums(static_cast<size_t>(s) * ds, 0.0);
    for (int64_t b = 0; b < steps_per_epoch; ++b, ++step_index) {
      StepResult sr = train_step(result.checkpoint.params, opt, data,
                                 {indices.data() + b * config.batch_size,
                                  static_cast<size_t>(config.batch_size)},
                                 config, step_index, steps_per_epoch);
      rec.lr = sr.lr;
      rec.loss_total += sr.loss.total;
      rec.loss_ent += sr.loss.ent_alg1;
      rec.loss_ent_diag += sr.loss.ent_diag;
      rec.loss_ent_offdiag += sr.loss.ent_offdiag;
      rec.loss_ti += sr.loss.ti;
      for (size_t j = 0; j < marginal_sums.size(); ++j) marginal_sums[j] += sr.code_sums[j];
    }
    const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
    rec.loss_total *= inv_steps;
    rec.loss_ent *= inv_steps;
    rec.loss_ent_diag *= inv_steps;
    rec.loss_ent_offdiag *= inv_steps;
    rec.loss_ti *= inv_steps;

    const double seen = static_cast<double>(steps_per_epoch) * config.batch_size;
    double collapse = 0.0, dev = 0.0, ent_mean = 0.0;
    for (int seg = 0; seg < s; ++seg) {
      double seg_max = 0.0, seg_dev = 0.0, seg_ent = 0.0;
      for (int d = 0; d < ds; ++d) {
        const double m = marginal_sums[static_cast<size_t>(seg) * ds + d] / seen;
        seg_max = std::max(seg_max, m);
        seg_dev = std::max(seg_dev, std::fabs(m - 1.0 / ds));
        seg_ent -= m * std::log(std::max(m, kLogEps));
      }
      collapse = std::max(collapse, seg_max);
      dev = std::max(dev, seg_dev);
      ent_mean += seg_ent;
    }
    rec.collapse_fraction = collapse;
    rec.marginal_dev_max = dev;
    rec.marginal_entropy_mean = ent_mean / s;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    result.metrics.push_back(rec);
    if (metrics_out) *metrics_out << rec.to_line() << "\n" << std::flush;
    if (progress) *progress << rec.to_line() << "\n" << std::flush;
  }

  result.checkpoint.step = total_steps;
  if (!result.metrics.empty())
    result.checkpoint.metrics_tail = strip_wall_ms_field(result.metrics.back().to_line());
  return result;
}

}  // namespace music
