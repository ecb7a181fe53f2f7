#pragma once

#include <cstdint>

#include "music/coder.hpp"

namespace music {

// D x D block matrix of pair probabilities between the two views' codes,
// indexed (s'*D_S+d', s''*D_S+d''). Every D_S x D_S block sums to 1.
struct JointDistribution {
  Var matrix;
  SegmentConfig config;
  int batch_size = 0;
};

// Keeps the main diagonal (s'=s'', d'=d'') plus every off-diagonal block
// (s'!=s''). True entry count is S*D_S + S*(S-1)*D_S^2.
struct SelectionMask {
  SegmentConfig config;
  std::vector<uint8_t> keep;  // D x D row-major, 0/1

  int64_t count() const;
};

SelectionMask selection_mask(const SegmentConfig& config);

// entry((s',d'),(s'',d'')) = (1/N) sum_i p1_i(s',d') * p2_i(s'',d'')
JointDistribution joint_distribution(Tape& tape, const ProbCode& p1, const ProbCode& p2);

// Selected-entropy sums under the two normalizations in use: `alg1` divides
// every selected term by S^2 and is the term trained on; `diag` (1/S) and
// `offdiag` (1/(S*(S-1))) are diagnostics. offdiag is a zero constant when
// S = 1.
struct EntropyLossTerms {
  Var alg1;
  Var diag;
  Var offdiag;
};

EntropyLossTerms entropy_loss(Tape& tape, const JointDistribution& joint,
                              const SelectionMask& mask);

// -(1/(N*S)) sum_{i,s} log(sum_d p1_i(s,d) * p2_i(s,d)); always >= 0, and 0
// exactly when both views agree on one-hot codes.
Var ti_loss(Tape& tape, const ProbCode& p1, const ProbCode& p2);

struct LossGraph {
  Var total;        // ent_alg1 + lambda * ti
  Var ent_alg1;
  Var ent_diag;
  Var ent_offdiag;
  Var ti;
  JointDistribution joint;
};

LossGraph total_loss(Tape& tape, const ProbCode& p1, const ProbCode& p2, Real lambda);

// Scalar snapshot of a LossGraph.
struct LossBreakdown {
  Real ent_diag = 0;     // 1/S normalization
  Real ent_offdiag = 0;  // 1/(S*(S-1)) normalization
  Real ent_total = 0;    // ent_diag + ent_offdiag
  Real ent_alg1 = 0;     // 1/S^2 normalization; the term inside `total`
  Real ti = 0;
  Real lambda = 0;
  Real total = 0;        // ent_alg1 + lambda * ti

  bool finite() const;
  std::string str() const;
};

LossBreakdown read_breakdown(const LossGraph& graph, Real lambda);

}  // namespace music
