#include "music/loss.hpp"

#include <cmath>
#include <cstdio>

namespace music {

namespace {

void check_pair(const ProbCode& p1, const ProbCode& p2) {
  if (p1.config != p2.config)
    throw UsageError("code pair uses different segment configs");
  if (p1.values.shape() != p2.values.shape())
    throw UsageError("code pair shapes " + shape_str(p1.values.shape()) + " vs " +
                     shape_str(p2.values.shape()));
}

}  // namespace

int64_t SelectionMask::count() const {
  int64_t c = 0;
  for (uint8_t k : keep) c += k;
  return c;
}

SelectionMask selection_mask(const SegmentConfig& config) {
  config.validate();
  const int ds = config.segment_dim;
  const int d = config.embed_dim();
  SelectionMask mask{config, std::vector<uint8_t>(static_cast<size_t>(d) * d, 0)};
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const bool same_segment = r / ds == c / ds;
      mask.keep[static_cast<size_t>(r) * d + c] = same_segment ? (r == c) : 1;
    }
  }
  return mask;
}

JointDistribution joint_distribution(Tape& tape, const ProbCode& p1, const ProbCode& p2) {
  check_pair(p1, p2);
  const int n = p1.batch();
  const int d = p1.config.embed_dim();
  Var flat1 = tape.reshape(p1.values, {n, d});
  Var flat2 = tape.reshape(p2.values, {n, d});
  Var joint = tape.scale(tape.matmul(tape.transpose(flat1), flat2), Real(1) / n);
  return JointDistribution{joint, p1.config, n};
}

EntropyLossTerms entropy_loss(Tape& tape, const JointDistribution& joint,
                              const SelectionMask& mask) {
  if (mask.config != joint.config) throw UsageError("selection mask config mismatch");
  const int s = joint.config.num_segments;
  const int d = joint.config.embed_dim();
  if (joint.matrix.shape() != Shape{d, d})
    throw UsageError("joint matrix shape " + shape_str(joint.matrix.shape()));

  std::vector<Real> diag_keep(static_cast<size_t>(d) * d, 0.0);
  std::vector<Real> off_keep(static_cast<size_t>(d) * d, 0.0);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      if (mask.keep[static_cast<size_t>(r) * d + c])
        (r == c ? diag_keep : off_keep)[static_cast<size_t>(r) * d + c] = 1.0;

  Var plogp = tape.mul(joint.matrix, tape.log_clamped(joint.matrix));
  Var diag_sum = tape.sum_all(tape.mul(plogp, tape.leaf({d, d}, std::move(diag_keep), "mask_diag")));
  EntropyLossTerms terms;
  terms.diag = tape.scale(diag_sum, Real(1) / s);
  if (s > 1) {
    Var off_sum = tape.sum_all(tape.mul(plogp, tape.leaf({d, d}, std::move(off_keep), "mask_off")));
    terms.offdiag = tape.scale(off_sum, Real(1) / (static_cast<Real>(s) * (s - 1)));
    terms.alg1 = tape.scale(tape.add(diag_sum, off_sum), Real(1) / (static_cast<Real>(s) * s));
  } else {
    terms.offdiag = tape.zeros({1}, "ent_offdiag_zero");
    terms.alg1 = tape.scale(diag_sum, Real(1) / (static_cast<Real>(s) * s));
  }
  return terms;
}

Var ti_loss(Tape& tape, const ProbCode& p1, const ProbCode& p2) {
  check_pair(p1, p2);
  Var inner = tape.sum_last(tape.mul(p1.values, p2.values));  // (N, S)
  return tape.scale(tape.mean_all(tape.log_clamped(inner)), Real(-1));
}

LossGraph total_loss(Tape& tape, const ProbCode& p1, const ProbCode& p2, Real lambda) {
  if (lambda < 0) throw UsageError("lambda must be >= 0");
  LossGraph g;
  g.joint = joint_distribution(tape, p1, p2);
  EntropyLossTerms ent = entropy_loss(tape, g.joint, selection_mask(p1.config));
  g.ent_alg1 = ent.alg1;
  g.ent_diag = ent.diag;
  g.ent_offdiag = ent.offdiag;
  g.ti = ti_loss(tape, p1, p2);
  g.total = tape.add(g.ent_alg1, tape.scale(g.ti, lambda));
  return g;
}

bool LossBreakdown::finite() const {
  return std::isfinite(ent_diag) && std::isfinite(ent_offdiag) && std::isfinite(ent_alg1) &&
         std::isfinite(ti) && std::isfinite(total);
}

std::string LossBreakdown::str() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "total=%.9g ent_alg1=%.9g ent_diag=%.9g ent_offdiag=%.9g ti=%.9g lambda=%.9g",
                total, ent_alg1, ent_diag, ent_offdiag, ti, lambda);
  return buf;
}

LossBreakdown read_breakdown(const LossGraph& graph, Real lambda) {
  LossBreakdown b;
  b.ent_diag = graph.ent_diag.scalar();
  b.ent_offdiag = graph.ent_offdiag.scalar();
  b.ent_total = b.ent_diag + b.ent_offdiag;
  b.ent_alg1 = graph.ent_alg1.scalar();
  b.ti = graph.ti.scalar();
  b.lambda = lambda;
  b.total = graph.total.scalar();
  return b;
}

}  // namespace music
