#include "music/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "music/loss.hpp"
#include "music/rng.hpp"

namespace music {

namespace {

double entropy_of(std::span<const Real> dist) {
  double h = 0.0;
  for (Real v : dist) h -= v * std::log(std::max(v, kLogEps));
  return h;
}

// marginals m(s,d) = mean_i p_i(s,d)
std::vector<Real> marginals_of(const CodeBatch& code) {
  const int s = code.config.num_segments, ds = code.config.segment_dim;
  std::vector<Real> m(static_cast<size_t>(s) * ds, 0.0);
  for (int i = 0; i < code.n; ++i)
    for (int j = 0; j < s * ds; ++j)
      m[static_cast<size_t>(j)] += code.p[static_cast<size_t>(i) * s * ds + j];
  for (Real& v : m) v /= code.n;
  return m;
}

std::vector<Real> mi_matrix(const CodeBatch& a, const CodeBatch& b, bool same_batch) {
  const int s = a.config.num_segments, ds = a.config.segment_dim;
  const std::vector<Real> ma = marginals_of(a);
  const std::vector<Real> mb = marginals_of(b);
  std::vector<Real> mi(static_cast<size_t>(s) * s, 0.0);
  std::vector<Real> joint(static_cast<size_t>(ds) * ds);
  for (int s1 = 0; s1 < s; ++s1) {
    for (int s2 = 0; s2 < s; ++s2) {
      if (same_batch && s1 == s2) {
        mi[static_cast<size_t>(s1) * s + s2] =
            entropy_of({ma.data() + static_cast<size_t>(s1) * ds, static_cast<size_t>(ds)});
        continue;
      }
      std::fill(joint.begin(), joint.end(), 0.0);
      for (int i = 0; i < a.n; ++i)
        for (int d1 = 0; d1 < ds; ++d1) {
          const Real pa = a.at(i, s1, d1);
          if (pa == 0.0) continue;
          for (int d2 = 0; d2 < ds; ++d2)
            joint[static_cast<size_t>(d1) * ds + d2] += pa * b.at(i, s2, d2);
        }
      for (Real& v : joint) v /= a.n;
      const double h1 = entropy_of({ma.data() + static_cast<size_t>(s1) * ds, static_cast<size_t>(ds)});
      const double h2 = entropy_of({mb.data() + static_cast<size_t>(s2) * ds, static_cast<size_t>(ds)});
      mi[static_cast<size_t>(s1) * s + s2] = h1 + h2 - entropy_of(joint);
    }
  }
  return mi;
}

}  // namespace

void CodeBatch::validate() const {
  config.validate();
  if (n < 1) throw UsageError("code batch must have n >= 1");
  if (p.size() != static_cast<size_t>(n) * config.num_segments * config.segment_dim)
    throw UsageError("code batch storage does not match its shape");
}

MarginalReport marginal_uniformity(const CodeBatch& code) {
  code.validate();
  MarginalReport report;
  report.mean = marginals_of(code);
  const double target = 1.0 / code.config.segment_dim;
  for (Real v : report.mean)
    report.max_deviation = std::max(report.max_deviation, std::fabs(v - target));
  return report;
}

std::vector<Real> segment_mutual_information(const CodeBatch& code) {
  code.validate();
  if (code.n < 2) throw UsageError("mutual information needs n >= 2");
  return mi_matrix(code, code, true);
}

std::vector<Real> segment_mutual_information_cross(const CodeBatch& a, const CodeBatch& b) {
  a.validate();
  b.validate();
  if (a.n != b.n || !(a.config == b.config))
    throw UsageError("cross-view MI needs matching batches");
  if (a.n < 2) throw UsageError("mutual information needs n >= 2");
  return mi_matrix(a, b, false);
}

std::vector<Real> code_covariance(const CodeBatch& code) {
  code.validate();
  if (code.n < 2) throw UsageError("covariance needs n >= 2");
  const int d = code.config.embed_dim();
  const std::vector<Real> m = marginals_of(code);
  std::vector<Real> cov(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < code.n; ++i) {
    const Real* row = code.p.data() + static_cast<size_t>(i) * d;
    for (int r = 0; r < d; ++r) {
      const Real xr = row[r] - m[static_cast<size_t>(r)];
      if (xr == 0.0) continue;
      for (int c = 0; c < d; ++c)
        cov[static_cast<size_t>(r) * d + c] += xr * (row[c] - m[static_cast<size_t>(c)]);
    }
  }
  for (Real& v : cov) v /= code.n;
  return cov;
}

std::vector<Real> collapse_fraction(const CodeBatch& code) {
  code.validate();
  const int s = code.config.num_segments, ds = code.config.segment_dim;
  const std::vector<Real> m = marginals_of(code);
  std::vector<Real> frac(static_cast<size_t>(s), 0.0);
  for (int seg = 0; seg < s; ++seg)
    for (int d = 0; d < ds; ++d)
      frac[static_cast<size_t>(seg)] =
          std::max(frac[static_cast<size_t>(seg)], m[static_cast<size_t>(seg) * ds + d]);
  return frac;
}

CodeBatch ideal_codes(const SegmentConfig& config) {
  config.validate();
  const int s = config.num_segments, ds = config.segment_dim;
  double combos = 1.0;
  for (int i = 0; i < s; ++i) combos *= ds;
  if (combos > (1 << 20))
    throw ConfigError("ideal code enumeration D_S^S = " + encoding_capacity(config) +
                      " is too large to materialize");
  const int n = static_cast<int>(combos);
  CodeBatch code;
  code.n = n;
  code.config = config;
  code.p.assign(static_cast<size_t>(n) * s * ds, 0.0);
  for (int i = 0; i < n; ++i) {
    int rem = i;
    for (int seg = s - 1; seg >= 0; --seg) {
      const int unit = rem % ds;
      rem /= ds;
      code.p[(static_cast<size_t>(i) * s + seg) * ds + unit] = 1.0;
    }
  }
  return code;
}

TheoryReport analyze_codes(const CodeBatch& code) {
  code.validate();
  TheoryReport report;
  report.config = code.config;
  report.batch = code.n;
  report.marginals = marginal_uniformity(code);
  const int s = code.config.num_segments, ds = code.config.segment_dim;
  for (int seg = 0; seg < s; ++seg)
    report.marginal_entropy.push_back(
        entropy_of({report.marginals.mean.data() + static_cast<size_t>(seg) * ds,
                    static_cast<size_t>(ds)}));
  report.mi = segment_mutual_information(code);
  report.covariance = code_covariance(code);
  report.collapse = collapse_fraction(code);

  // selected entropy of the single-view joint, 1/S^2 form
  Tape tape;
  ProbCode p{tape.leaf({code.n, s, ds}, code.p, "codes"), code.config};
  EntropyLossTerms terms = entropy_loss(tape, joint_distribution(tape, p, p),
                                        selection_mask(code.config));
  report.selected_entropy = terms.alg1.scalar();
  report.onehot_reference = -(2.0 * s - 1.0) / s * std::log(static_cast<double>(ds));
  return report;
}

std::string encoding_capacity(const SegmentConfig& config) {
  config.validate();
  // exact D_S^S over base-1e9 limbs
  std::vector<uint64_t> limbs{1};
  for (int i = 0; i < config.num_segments; ++i) {
    uint64_t carry = 0;
    for (uint64_t& limb : limbs) {
      const uint64_t v = limb * static_cast<uint64_t>(config.segment_dim) + carry;
      limb = v % 1000000000ULL;
      carry = v / 1000000000ULL;
    }
    while (carry) {
      limbs.push_back(carry % 1000000000ULL);
      carry /= 1000000000ULL;
    }
  }
  std::string out = std::to_string(limbs.back());
  char buf[16];
  for (size_t i = limbs.size() - 1; i-- > 0;) {
    std::snprintf(buf, sizeof(buf), "%09llu", static_cast<unsigned long long>(limbs[i]));
    out += buf;
  }
  return out;
}

ProbeResult linear_probe(const std::vector<Real>& features, int n, int dim,
                         const std::vector<int>& labels, uint64_t split_seed, int epochs,
                         double lr) {
  if (n < 5) throw UsageError("linear_probe needs at least 5 samples");
  if (features.size() != static_cast<size_t>(n) * dim || labels.size() != static_cast<size_t>(n))
    throw UsageError("linear_probe: feature/label sizes do not match n");
  int classes = 0;
  for (int y : labels) {
    if (y < 0) throw UsageError("linear_probe: negative label");
    classes = std::max(classes, y + 1);
  }
  {
    std::vector<char> present(static_cast<size_t>(classes), 0);
    for (int y : labels) present[static_cast<size_t>(y)] = 1;
    int distinct = 0;
    for (char c : present) distinct += c;
    if (distinct < 2) throw UsageError("linear_probe needs at least 2 classes present");
  }

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_stream(split_seed, 0x41));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);
  const int n_test = n / 5;
  const int n_train = n - n_test;

  // standardize with train statistics
  std::vector<double> mean(static_cast<size_t>(dim), 0.0), inv_std(static_cast<size_t>(dim), 0.0);
  for (int t = 0; t < n_train; ++t) {
    const Real* row = features.data() + static_cast<size_t>(order[static_cast<size_t>(t)]) * dim;
    for (int j = 0; j < dim; ++j) mean[static_cast<size_t>(j)] += row[j];
  }
  for (double& v : mean) v /= n_train;
  for (int t = 0; t < n_train; ++t) {
    const Real* row = features.data() + static_cast<size_t>(order[static_cast<size_t>(t)]) * dim;
    for (int j = 0; j < dim; ++j) {
      const double c = row[j] - mean[static_cast<size_t>(j)];
      inv_std[static_cast<size_t>(j)] += c * c;
    }
  }
  for (double& v : inv_std) v = 1.0 / std::sqrt(std::max(v / n_train, 1e-12));

  std::vector<double> x(static_cast<size_t>(n) * dim);
  for (int i = 0; i < n; ++i) {
    const Real* row = features.data() + static_cast<size_t>(i) * dim;
    for (int j = 0; j < dim; ++j)
      x[static_cast<size_t>(i) * dim + j] =
          (row[j] - mean[static_cast<size_t>(j)]) * inv_std[static_cast<size_t>(j)];
  }

  std::vector<double> w(static_cast<size_t>(dim) * classes, 0.0);
  std::vector<double> bias(static_cast<size_t>(classes), 0.0);
  std::vector<double> gw(w.size()), gb(bias.size()), logits(static_cast<size_t>(classes));

  const auto forward_row = [&](int i) {
    const double* row = x.data() + static_cast<size_t>(i) * dim;
    for (int c = 0; c < classes; ++c) logits[static_cast<size_t>(c)] = bias[static_cast<size_t>(c)];
    for (int j = 0; j < dim; ++j) {
      const double xv = row[j];
      if (xv == 0.0) continue;
      const double* wrow = w.data() + static_cast<size_t>(j) * classes;
      for (int c = 0; c < classes; ++c) logits[static_cast<size_t>(c)] += xv * wrow[c];
    }
    double mx = logits[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, logits[static_cast<size_t>(c)]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      logits[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - mx);
      sum += logits[static_cast<size_t>(c)];
    }
    for (int c = 0; c < classes; ++c) logits[static_cast<size_t>(c)] /= sum;
  };

  for (int e = 0; e < epochs; ++e) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (int t = 0; t < n_train; ++t) {
      const int i = order[static_cast<size_t>(t)];
      forward_row(i);
      logits[static_cast<size_t>(labels[static_cast<size_t>(i)])] -= 1.0;
      const double* row = x.data() + static_cast<size_t>(i) * dim;
      for (int j = 0; j < dim; ++j) {
        const double xv = row[j];
        if (xv == 0.0) continue;
        double* grow = gw.data() + static_cast<size_t>(j) * classes;
        for (int c = 0; c < classes; ++c) grow[c] += xv * logits[static_cast<size_t>(c)];
      }
      for (int c = 0; c < classes; ++c) gb[static_cast<size_t>(c)] += logits[static_cast<size_t>(c)];
    }
    const double scale = lr / n_train;
    for (size_t j = 0; j < w.size(); ++j) w[j] -= scale * gw[j];
    for (size_t c = 0; c < bias.size(); ++c) bias[c] -= scale * gb[c];
  }

  const auto accuracy = [&](int from, int to) {
    int correct = 0;
    for (int t = from; t < to; ++t) {
      const int i = order[static_cast<size_t>(t)];
      forward_row(i);
      int arg = 0;
      for (int c = 1; c < classes; ++c)
        if (logits[static_cast<size_t>(c)] > logits[static_cast<size_t>(arg)]) arg = c;
      if (arg == labels[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / std::max(1, to - from);
  };

  ProbeResult result;
  result.n_train = n_train;
  result.n_test = n_test;
  result.train_acc = accuracy(0, n_train);
  result.test_acc = accuracy(n_train, n);
  return result;
}

std::vector<Real> compute_representations(const ModelParams& params,
                                          const std::vector<Real>& samples, int n, int dim) {
  Tape tape;
  Var x = tape.leaf({n, dim}, samples, "probe_input");
  TapedModel model = bind_model(tape, params);
  Var rep = encode(tape, model, x);
  return {rep.values().begin(), rep.values().end()};
}

CodeBatch compute_codes(const ModelParams& params, const SegmentConfig& config,
                        const std::vector<Real>& samples, int n, int dim) {
  Tape tape;
  Var x = tape.leaf({n, dim}, samples, "analyze_input");
  TapedModel model = bind_model(tape, params);
  ProbCode p = code_embedding(tape, project(tape, model, encode(tape, model, x)), config);
  CodeBatch code;
  code.n = n;
  code.config = config;
  code.p.assign(p.values.values().begin(), p.values.values().end());
  return code;
}

}  // namespace music
