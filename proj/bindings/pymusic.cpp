// Python surface over the core library: code computation, the loss pieces,
// the theory diagnostics, and a small end-to-end fit entry point.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "music/diagnostics.hpp"
#include "music/trainer.hpp"

namespace py = pybind11;
using namespace music;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

CodeBatch code_batch_from(const Arr& p) {
  if (p.ndim() != 3) throw UsageError("codes must be an (N, S, D_S) array");
  CodeBatch code;
  code.n = static_cast<int>(p.shape(0));
  code.config = SegmentConfig{static_cast<int>(p.shape(1)), static_cast<int>(p.shape(2))};
  code.p.assign(p.data(), p.data() + p.size());
  code.validate();
  return code;
}

Arr to_array(const std::vector<Real>& values, std::vector<py::ssize_t> shape) {
  Arr out(shape);
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

Arr compute_code(const Arr& logits, int num_segments) {
  if (logits.ndim() != 2) throw UsageError("logits must be an (N, D) array");
  const int n = static_cast<int>(logits.shape(0));
  const int d = static_cast<int>(logits.shape(1));
  if (num_segments < 1 || d % num_segments != 0)
    throw UsageError("embedding width is not divisible by num_segments");
  const SegmentConfig config{num_segments, d / num_segments};
  Tape tape;
  std::vector<Real> vals(logits.data(), logits.data() + logits.size());
  ProbCode code = code_embedding(tape, tape.leaf({n, d}, std::move(vals)), config);
  return to_array({code.values.values().begin(), code.values.values().end()},
                  {n, config.num_segments, config.segment_dim});
}

py::dict loss_dict(const Arr& p1, const Arr& p2, double lambda) {
  const CodeBatch a = code_batch_from(p1);
  const CodeBatch b = code_batch_from(p2);
  Tape tape;
  ProbCode pa{tape.leaf({a.n, a.config.num_segments, a.config.segment_dim}, a.p), a.config};
  ProbCode pb{tape.leaf({b.n, b.config.num_segments, b.config.segment_dim}, b.p), b.config};
  const LossBreakdown breakdown = read_breakdown(total_loss(tape, pa, pb, lambda), lambda);
  py::dict out;
  out["ent_diag"] = breakdown.ent_diag;
  out["ent_offdiag"] = breakdown.ent_offdiag;
  out["ent_total"] = breakdown.ent_total;
  out["ent_alg1"] = breakdown.ent_alg1;
  out["ti"] = breakdown.ti;
  out["lambda"] = breakdown.lambda;
  out["total"] = breakdown.total;
  return out;
}

py::dict fit_arrays(const Arr& samples, const std::string& config_text,
                    const std::string& ckpt_path, const std::string& metrics_path) {
  if (samples.ndim() != 2) throw UsageError("samples must be an (N, dim) array");
  Dataset data;
  data.classes = 2;  // labels are not consumed by training
  data.per_class = static_cast<int>(samples.shape(0)) / 2;
  data.dim_signal = static_cast<int>(samples.shape(1));
  data.dim_nuisance = 0;
  data.samples.assign(samples.data(), samples.data() + samples.size());
  data.labels.assign(static_cast<size_t>(samples.shape(0)), 0);

  const TrainConfig config = parse_run_config(config_text);
  std::ostringstream metrics;
  FitResult result = fit(data, config, &metrics);
  if (!ckpt_path.empty()) save_checkpoint(result.checkpoint, ckpt_path);
  if (!metrics_path.empty()) {
    std::ofstream f(metrics_path, std::ios::binary);
    f << metrics.str();
  }
  py::list lines;
  for (const MetricsRecord& rec : result.metrics) lines.append(rec.to_line());
  py::dict out;
  out["metrics"] = lines;
  out["steps"] = result.checkpoint.step;
  if (!result.metrics.empty()) {
    out["final_loss"] = result.metrics.back().loss_total;
    out["final_collapse"] = result.metrics.back().collapse_fraction;
  }
  return out;
}

py::dict gradcheck_loss(int n, int s, int ds, uint64_t seed) {
  const SegmentConfig config{s, ds};
  Rng rng(derive_stream(seed, 0x97));
  std::vector<LeafSpec> leaves;
  for (const char* name : {"z1", "z2"}) {
    LeafSpec spec{{n, config.embed_dim()}, {}, name};
    spec.values.resize(static_cast<size_t>(n) * config.embed_dim());
    for (Real& v : spec.values) v = rng.normal();
    leaves.push_back(std::move(spec));
  }
  const ScalarGraph f = [&](Tape& tape, std::span<const Var> vars) {
    ProbCode p1 = code_embedding(tape, vars[0], config);
    ProbCode p2 = code_embedding(tape, vars[1], config);
    return total_loss(tape, p1, p2, 1.0).total;
  };
  const GradCheckReport report = grad_check(f, leaves, 1e-6);
  py::dict out;
  out["max_rel_err"] = report.max_rel_err;
  out["passed"] = report.pass(1e-5);
  out["summary"] = report.summary();
  return out;
}

}  // namespace

PYBIND11_MODULE(pymusic, m) {
  m.doc() = "Multi-segment softmax codes with a masked joint-entropy loss";

  m.def("code", &compute_code, py::arg("logits"), py::arg("num_segments"),
        "Partition (N, D) logits into segments and softmax each one");

  m.def("total_loss", &loss_dict, py::arg("p1"), py::arg("p2"), py::arg("lambda_") = 1.0,
        "Loss breakdown for a pair of code batches");

  m.def(
      "selection_mask",
      [](int s, int ds) {
        const SelectionMask mask = selection_mask(SegmentConfig{s, ds});
        const int d = s * ds;
        py::array_t<uint8_t> out({d, d});
        std::copy(mask.keep.begin(), mask.keep.end(), out.mutable_data());
        return out;
      },
      py::arg("num_segments"), py::arg("segment_dim"));

  m.def(
      "joint_distribution",
      [](const Arr& p1, const Arr& p2) {
        const CodeBatch a = code_batch_from(p1);
        const CodeBatch b = code_batch_from(p2);
        Tape tape;
        ProbCode pa{tape.leaf({a.n, a.config.num_segments, a.config.segment_dim}, a.p), a.config};
        ProbCode pb{tape.leaf({b.n, b.config.num_segments, b.config.segment_dim}, b.p), b.config};
        const JointDistribution j = joint_distribution(tape, pa, pb);
        const int d = a.config.embed_dim();
        return to_array({j.matrix.values().begin(), j.matrix.values().end()}, {d, d});
      },
      py::arg("p1"), py::arg("p2"));

  m.def(
      "lr_at",
      [](int64_t step, int64_t steps_per_epoch, int batch_size, int epochs, int warmup_epochs,
         double base_lr, double final_lr) {
        TrainConfig config;
        config.batch_size = batch_size;
        config.epochs = epochs;
        config.warmup_epochs = warmup_epochs;
        config.base_lr = base_lr;
        config.final_lr = final_lr;
        return lr_at(step, config, steps_per_epoch);
      },
      py::arg("step"), py::arg("steps_per_epoch"), py::arg("batch_size") = 256,
      py::arg("epochs") = 100, py::arg("warmup_epochs") = 10, py::arg("base_lr") = 0.3,
      py::arg("final_lr") = 0.002);

  m.def(
      "gen_clusters",
      [](int classes, int dim_signal, int dim_nuisance, int per_class, double separation,
         double noise_std, uint64_t seed) {
        const Dataset data = gen_clusters(classes, dim_signal, dim_nuisance, per_class, separation,
                                          noise_std, seed);
        py::dict out;
        out["samples"] = to_array(data.samples, {data.size(), data.dim()});
        py::array_t<int> labels(static_cast<py::ssize_t>(data.labels.size()));
        std::copy(data.labels.begin(), data.labels.end(), labels.mutable_data());
        out["labels"] = labels;
        return out;
      },
      py::arg("classes") = 8, py::arg("dim_signal") = 16, py::arg("dim_nuisance") = 48,
      py::arg("per_class") = 512, py::arg("separation") = 0.25, py::arg("noise_std") = 0.12,
      py::arg("seed") = 7);

  m.def(
      "two_views",
      [](const Arr& x, double noise_std, double dropout, double scale_lo, double scale_hi,
         uint64_t seed, int64_t epoch, int64_t index) {
        if (x.ndim() != 1) throw UsageError("two_views expects a 1-d sample");
        const AugmentSpec spec{noise_std, dropout, scale_lo, scale_hi};
        std::vector<Real> sample(x.data(), x.data() + x.size());
        auto [v1, v2] = two_views(sample, spec, seed, epoch, index);
        return py::make_tuple(to_array(v1, {x.shape(0)}), to_array(v2, {x.shape(0)}));
      },
      py::arg("x"), py::arg("noise_std") = 0.036, py::arg("dropout") = 0.2,
      py::arg("scale_lo") = 0.8, py::arg("scale_hi") = 1.25, py::arg("seed") = 0,
      py::arg("epoch") = 0, py::arg("index") = 0);

  m.def(
      "mutual_information",
      [](const Arr& p) {
        const CodeBatch code = code_batch_from(p);
        const int s = code.config.num_segments;
        return to_array(segment_mutual_information(code), {s, s});
      },
      py::arg("codes"));

  m.def(
      "cross_mutual_information",
      [](const Arr& p1, const Arr& p2) {
        const CodeBatch a = code_batch_from(p1);
        const CodeBatch b = code_batch_from(p2);
        const int s = a.config.num_segments;
        return to_array(segment_mutual_information_cross(a, b), {s, s});
      },
      py::arg("codes1"), py::arg("codes2"));

  m.def(
      "code_covariance",
      [](const Arr& p) {
        const CodeBatch code = code_batch_from(p);
        const int d = code.config.embed_dim();
        return to_array(code_covariance(code), {d, d});
      },
      py::arg("codes"));

  m.def(
      "collapse_fraction",
      [](const Arr& p) {
        const CodeBatch code = code_batch_from(p);
        return to_array(collapse_fraction(code), {code.config.num_segments});
      },
      py::arg("codes"));

  m.def(
      "marginals",
      [](const Arr& p) {
        const CodeBatch code = code_batch_from(p);
        const MarginalReport report = marginal_uniformity(code);
        return py::make_tuple(
            to_array(report.mean, {code.config.num_segments, code.config.segment_dim}),
            report.max_deviation);
      },
      py::arg("codes"));

  m.def(
      "ideal_codes",
      [](int s, int ds) {
        const CodeBatch code = ideal_codes(SegmentConfig{s, ds});
        return to_array(code.p, {code.n, s, ds});
      },
      py::arg("num_segments"), py::arg("segment_dim"));

  m.def(
      "encoding_capacity",
      [](int s, int ds) { return encoding_capacity(SegmentConfig{s, ds}); },
      py::arg("num_segments"), py::arg("segment_dim"));

  m.def(
      "linear_probe",
      [](const Arr& features, const std::vector<int>& labels, uint64_t split_seed, int epochs,
         double lr) {
        if (features.ndim() != 2) throw UsageError("features must be (N, dim)");
        std::vector<Real> f(features.data(), features.data() + features.size());
        const ProbeResult r = linear_probe(f, static_cast<int>(features.shape(0)),
                                           static_cast<int>(features.shape(1)), labels, split_seed,
                                           epochs, lr);
        py::dict out;
        out["train_acc"] = r.train_acc;
        out["test_acc"] = r.test_acc;
        out["n_train"] = r.n_train;
        out["n_test"] = r.n_test;
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("split_seed") = 0, py::arg("epochs") = 400,
      py::arg("lr") = 0.5);

  m.def("default_config", [] { return serialize_run_config(TrainConfig{}); },
        "Canonical run-config document with every default");

  m.def("fit", &fit_arrays, py::arg("samples"), py::arg("config_text"),
        py::arg("ckpt_path") = std::string(), py::arg("metrics_path") = std::string(),
        "Train on an (N, dim) array; returns metric lines and summary values");

  m.def("gradcheck_loss", &gradcheck_loss, py::arg("n") = 8, py::arg("s") = 2, py::arg("ds") = 2,
        py::arg("seed") = 0, "Finite-difference check of the loss gradient");

  py::register_exception<ConfigError>(m, "MusicConfigError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "MusicUsageError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "MusicNumericError", PyExc_ArithmeticError);
}
