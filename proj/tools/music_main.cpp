#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "music/diagnostics.hpp"
#include "music/textio.hpp"
#include "music/trainer.hpp"

namespace {

using namespace music;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitVerification = 3;

void apply_precision_env() {
  const char* env = std::getenv("MUSIC_PRECISION");
  if (!env || std::string(env).empty() || std::string(env) == "64") {
    set_precision_mode(Precision::f64);
  } else if (std::string(env) == "32") {
    set_precision_mode(Precision::f32);
  } else {
    throw ConfigError("MUSIC_PRECISION must be 64 or 32, got '" + std::string(env) + "'");
  }
}

std::ofstream open_out(const std::string& path, const char* what) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError(std::string("cannot write ") + what + ": " + path);
  return f;
}

std::string join_reals(std::span<const Real> vals) {
  std::string s;
  for (size_t i = 0; i < vals.size(); ++i) {
    if (i) s += ',';
    s += fmt_real(vals[i]);
  }
  return s;
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  int classes = 8;
  int dim_signal = 16;
  int dim_nuisance = 48;
  int per_class = 512;
  double separation = 0.25;
  double noise = 0.12;
  uint64_t seed = 7;
  std::string out;
};

int run_gen_data(const GenDataArgs& args) {
  Dataset data = gen_clusters(args.classes, args.dim_signal, args.dim_nuisance, args.per_class,
                              args.separation, args.noise, args.seed);
  save_dataset(data, args.out);
  std::cout << "gen-data wrote " << args.out << ": n=" << data.size() << " dim=" << data.dim()
            << " classes=" << data.classes << " seed=" << data.seed << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out_ckpt;
  std::string metrics;
};

int run_train(const TrainArgs& args) {
  TrainConfig config;
  if (!args.config.empty()) config = load_run_config(args.config);
  config.validate();
  Dataset data = load_dataset(args.data);

  std::ofstream metrics = open_out(args.metrics, "metrics file");
  FitResult result = fit(data, config, &metrics, &std::cout);
  save_checkpoint(result.checkpoint, args.out_ckpt);
  std::cout << "train wrote " << args.out_ckpt << " after " << result.checkpoint.step
            << " steps\n";
  return kExitOk;
}

// ---- probe ------------------------------------------------------------------

struct ProbeArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  uint64_t split_seed = 0;
  int epochs = 1000;
  double lr = 0.5;
};

int run_probe(const ProbeArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.ckpt);
  Dataset data = load_dataset(args.data);
  if (data.dim() != ckpt.input_dim)
    throw ConfigError("data dim " + std::to_string(data.dim()) + " does not match checkpoint " +
                      std::to_string(ckpt.input_dim));

  std::vector<Real> rep =
      compute_representations(ckpt.params, data.samples, data.size(), data.dim());
  ProbeResult result = linear_probe(rep, data.size(), ckpt.params.representation_dim(),
                                    data.labels, args.split_seed, args.epochs, args.lr);

  std::ofstream report = open_out(args.report, "probe report");
  report << "probe v1 ckpt=" << args.ckpt << " data=" << args.data
         << " split_seed=" << args.split_seed << " epochs=" << args.epochs
         << " lr=" << fmt_real(args.lr) << "\n";
  report << "result train_acc=" << fmt_real(result.train_acc)
         << " test_acc=" << fmt_real(result.test_acc) << " n_train=" << result.n_train
         << " n_test=" << result.n_test << " classes=" << data.classes << "\n";
  std::cout << "probe train_acc=" << fmt_real(result.train_acc)
            << " test_acc=" << fmt_real(result.test_acc) << "\n";
  return kExitOk;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  int batch = 256;
  uint64_t batch_seed = 0;
  bool cross_view = false;
  bool ideal = false;
  int num_segments = 4;
  int segment_dim = 8;
};

void write_theory_report(std::ostream& out, const TheoryReport& report, const char* view,
                         int batch, uint64_t batch_seed, const std::vector<Real>* cross_mi) {
  const int s = report.config.num_segments;
  const int ds = report.config.segment_dim;
  const int d = report.config.embed_dim();
  out << "analyze v1 view=" << view << " batch=" << batch << " num_segments=" << s
      << " segment_dim=" << ds << " batch_seed=" << batch_seed << "\n";
  for (int seg = 0; seg < s; ++seg)
    out << "marginal s=" << seg << " values="
        << join_reals({report.marginals.mean.data() + static_cast<size_t>(seg) * ds,
                       static_cast<size_t>(ds)})
        << "\n";
  out << "marginal_dev_max value=" << fmt_real(report.marginals.max_deviation) << "\n";
  for (int seg = 0; seg < s; ++seg)
    out << "marginal_entropy s=" << seg << " value="
        << fmt_real(report.marginal_entropy[static_cast<size_t>(seg)]) << "\n";
  const std::vector<Real>& mi = cross_mi ? *cross_mi : report.mi;
  for (int seg = 0; seg < s; ++seg)
    out << "mi s=" << seg << " values="
        << join_reals({mi.data() + static_cast<size_t>(seg) * s, static_cast<size_t>(s)}) << "\n";
  for (int r = 0; r < d; ++r)
    out << "cov r=" << r << " values="
        << join_reals({report.covariance.data() + static_cast<size_t>(r) * d,
                       static_cast<size_t>(d)})
        << "\n";
  double worst = 0;
  for (int seg = 0; seg < s; ++seg) {
    out << "collapse s=" << seg << " value=" << fmt_real(report.collapse[static_cast<size_t>(seg)])
        << "\n";
    worst = std::max(worst, report.collapse[static_cast<size_t>(seg)]);
  }
  out << "collapse_flag value=" << (worst > 0.9 ? 1 : 0) << " threshold=0.9\n";
  // The one-hot value is a reference point, not a verified maximum of the
  // selected entropy; soft configurations can score higher.
  out << "selected_entropy value=" << fmt_real(report.selected_entropy)
      << " onehot_reference=" << fmt_real(report.onehot_reference)
      << " note=reference-not-maximum\n";
  out << "encoding_capacity value=" << encoding_capacity(report.config) << "\n";
}

int run_analyze(const AnalyzeArgs& args) {
  std::ofstream report = open_out(args.report, "analyze report");

  if (args.ideal) {
    SegmentConfig config{args.num_segments, args.segment_dim};
    if (!args.ckpt.empty()) config = load_checkpoint(args.ckpt).config.segments;
    CodeBatch code = ideal_codes(config);
    TheoryReport theory = analyze_codes(code);
    write_theory_report(report, theory, "ideal", code.n, 0, nullptr);
    std::cout << "analyze wrote " << args.report << " (ideal codes, n=" << code.n << ")\n";
    return kExitOk;
  }
  if (args.ckpt.empty() || args.data.empty())
    throw ConfigError("analyze needs --ckpt and --data (or --ideal-codes)");

  Checkpoint ckpt = load_checkpoint(args.ckpt);
  Dataset data = load_dataset(args.data);
  if (data.dim() != ckpt.input_dim)
    throw ConfigError("data dim " + std::to_string(data.dim()) + " does not match checkpoint " +
                      std::to_string(ckpt.input_dim));
  const int batch = std::min(args.batch, data.size());
  if (batch < 2) throw ConfigError("analyze needs a batch of at least 2 samples");

  std::vector<int> order(static_cast<size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_stream(args.batch_seed, 0x51));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);

  const int dim = data.dim();
  std::vector<Real> raw(static_cast<size_t>(batch) * dim);
  std::vector<Real> aug1(static_cast<size_t>(batch) * dim);
  std::vector<Real> aug2(static_cast<size_t>(batch) * dim);
  for (int i = 0; i < batch; ++i) {
    const int idx = order[static_cast<size_t>(i)];
    std::span<const Real> x = data.sample(idx);
    std::copy(x.begin(), x.end(), raw.begin() + static_cast<size_t>(i) * dim);
    if (args.cross_view) {
      auto views = two_views(x, ckpt.config.augment, args.batch_seed, 0, idx);
      std::copy(views.first.begin(), views.first.end(), aug1.begin() + static_cast<size_t>(i) * dim);
      std::copy(views.second.begin(), views.second.end(), aug2.begin() + static_cast<size_t>(i) * dim);
    }
  }

  if (args.cross_view) {
    CodeBatch c1 = compute_codes(ckpt.params, ckpt.config.segments, aug1, batch, dim);
    CodeBatch c2 = compute_codes(ckpt.params, ckpt.config.segments, aug2, batch, dim);
    std::vector<Real> mi = segment_mutual_information_cross(c1, c2);
    TheoryReport theory = analyze_codes(c1);
    write_theory_report(report, theory, "cross", batch, args.batch_seed, &mi);
  } else {
    CodeBatch code = compute_codes(ckpt.params, ckpt.config.segments, raw, batch, dim);
    TheoryReport theory = analyze_codes(code);
    write_theory_report(report, theory, "single", batch, args.batch_seed, nullptr);
  }
  std::cout << "analyze wrote " << args.report << " (batch=" << batch << ")\n";
  return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradCheckArgs {
  uint64_t seed = 0;
  std::string sizes = "8,2,2";
  // central differences balance truncation against roundoff near 4e-6 for
  // this graph; 1e-6 drowns the smallest weight gradients in noise
  double step = 4e-6;
  double tol = 1e-5;
  bool inject_fault = false;
};

int run_gradcheck(const GradCheckArgs& args) {
  if (precision_mode() != Precision::f64)
    throw UsageError("gradcheck requires 64-bit precision (unset MUSIC_PRECISION or use 64)");

  int n = 8, s = 2, ds = 2;
  if (std::sscanf(args.sizes.c_str(), "%d,%d,%d", &n, &s, &ds) != 3 || n < 2 || s < 1 || ds < 2)
    throw ConfigError("--sizes must be N,S,D_S with N>=2, S>=1, D_S>=2");
  const SegmentConfig config{s, ds};

  // tiny twin model: widths stay <= 8 so finite differences are cheap
  const int input_dim = 6;
  const MlpSpec enc{{input_dim, 8, 5}};
  const MlpSpec proj{{5, 8, config.embed_dim()}};
  ModelParams params = init_model(enc, proj, args.seed);

  Rng rng(derive_stream(args.seed, 0x61));
  std::vector<LeafSpec> leaves;
  const auto add_batch = [&](const char* label) {
    LeafSpec spec;
    spec.shape = {n, input_dim};
    spec.values.resize(static_cast<size_t>(n) * input_dim);
    for (Real& v : spec.values) v = rng.normal();
    spec.label = label;
    leaves.push_back(std::move(spec));
  };
  add_batch("view1");
  add_batch("view2");
  const auto add_stack = [&](const std::vector<LayerParams>& layers, const char* prefix) {
    for (size_t l = 0; l < layers.size(); ++l) {
      leaves.push_back({{layers[l].in, layers[l].out}, layers[l].w,
                        std::string(prefix) + ".w" + std::to_string(l)});
      leaves.push_back({{layers[l].out}, layers[l].b,
                        std::string(prefix) + ".b" + std::to_string(l)});
    }
  };
  add_stack(params.encoder, "enc");
  add_stack(params.projector, "proj");

  const size_t enc_layers = params.encoder.size();
  const size_t proj_layers = params.projector.size();
  const ScalarGraph graph = [&](Tape& tape, std::span<const Var> vars) {
    TapedModel model;
    size_t at = 2;
    for (size_t l = 0; l < enc_layers; ++l, at += 2)
      model.encoder.emplace_back(vars[at], vars[at + 1]);
    for (size_t l = 0; l < proj_layers; ++l, at += 2)
      model.projector.emplace_back(vars[at], vars[at + 1]);
    ProbCode p1 = code_embedding(tape, project(tape, model, encode(tape, model, vars[0])), config);
    ProbCode p2 = code_embedding(tape, project(tape, model, encode(tape, model, vars[1])), config);
    return total_loss(tape, p1, p2, 1.0).total;
  };

  GradCheckReport report = grad_check(graph, leaves, args.step, args.inject_fault ? 1e-2 : 0.0);
  std::cout << "gradcheck " << report.summary() << "\n";
  if (!report.pass(args.tol)) {
    std::cout << "gradcheck FAIL (tolerance " << fmt_real(args.tol) << ")\n";
    return kExitVerification;
  }
  std::cout << "gradcheck PASS (tolerance " << fmt_real(args.tol) << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MUSIC: multi-segment softmax codes trained with a masked joint-entropy loss"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic Gaussian-cluster dataset");
  gen_cmd->alias("gen_data");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--dim-signal", gen.dim_signal, "Signal dimensions (class-dependent)")->capture_default_str();
  gen_cmd->add_option("--dim-nuisance", gen.dim_nuisance, "Nuisance dimensions (standard normal)")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class, "Samples per class")->capture_default_str();
  gen_cmd->add_option("--separation", gen.separation, "Std of class means per signal dim")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Within-class noise std in signal dims")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a MUSIC encoder on a dataset");
  train_cmd->add_option("--config", train.config, "Run config file (defaults when omitted)");
  train_cmd->add_option("--data", train.data, "Dataset path")->required();
  train_cmd->add_option("--out-ckpt", train.out_ckpt, "Checkpoint output path")->required();
  train_cmd->add_option("--metrics", train.metrics, "Metrics stream output path")->required();

  ProbeArgs probe;
  CLI::App* probe_cmd = app.add_subcommand("probe", "Linear-probe frozen representations");
  probe_cmd->add_option("--ckpt", probe.ckpt, "Checkpoint path")->required();
  probe_cmd->add_option("--data", probe.data, "Dataset path")->required();
  probe_cmd->add_option("--report", probe.report, "Report output path")->required();
  probe_cmd->add_option("--split-seed", probe.split_seed, "Seed for the 80/20 split")->capture_default_str();
  probe_cmd->add_option("--probe-epochs", probe.epochs, "Full-batch GD epochs")->capture_default_str();
  probe_cmd->add_option("--probe-lr", probe.lr, "Probe learning rate")->capture_default_str();

  AnalyzeArgs analyze;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Theory diagnostics on a batch of codes");
  analyze_cmd->add_option("--ckpt", analyze.ckpt, "Checkpoint path");
  analyze_cmd->add_option("--data", analyze.data, "Dataset path");
  analyze_cmd->add_option("--report", analyze.report, "Report output path")->required();
  analyze_cmd->add_option("--batch", analyze.batch, "Batch size for the diagnostics")->capture_default_str();
  analyze_cmd->add_option("--batch-seed", analyze.batch_seed, "Seed selecting the batch")->capture_default_str();
  analyze_cmd->add_flag("--cross-view", analyze.cross_view, "MI between the two augmented views instead of one");
  analyze_cmd->add_flag("--ideal-codes", analyze.ideal, "Analyze the constructed balanced one-hot codes");
  analyze_cmd->add_option("--num-segments", analyze.num_segments, "Segments for --ideal-codes without --ckpt")->capture_default_str();
  analyze_cmd->add_option("--segment-dim", analyze.segment_dim, "Units per segment for --ideal-codes without --ckpt")->capture_default_str();

  GradCheckArgs gradcheck;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full loss gradient");
  grad_cmd->add_option("--seed", gradcheck.seed, "Seed for leaves and weights")->capture_default_str();
  grad_cmd->add_option("--sizes", gradcheck.sizes, "N,S,D_S of the checked graph")->capture_default_str();
  grad_cmd->add_option("--step", gradcheck.step, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tol", gradcheck.tol, "Max relative error accepted")->capture_default_str();
  grad_cmd->add_flag("--inject-fault", gradcheck.inject_fault,
                     "Corrupt one analytic gradient to self-test the checker");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  }

  try {
    apply_precision_env();
    if (gen_cmd->parsed()) return run_gen_data(gen);
    if (train_cmd->parsed()) return run_train(train);
    if (probe_cmd->parsed()) return run_probe(probe);
    if (analyze_cmd->parsed()) return run_analyze(analyze);
    if (grad_cmd->parsed()) return run_gradcheck(gradcheck);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
