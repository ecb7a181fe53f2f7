#pragma once

#include <string>
#include <vector>

#include "music/coder.hpp"
#include "music/data.hpp"
#include "music/model.hpp"

namespace music {

// Plain (tape-free) batch of MUSIC codes, shape (n, S, D_S) row-major.
struct CodeBatch {
  int n = 0;
  SegmentConfig config;
  std::vector<Real> p;

  Real at(int i, int s, int d) const {
    return p[(static_cast<size_t>(i) * config.num_segments + s) * config.segment_dim + d];
  }
  void validate() const;
};

struct MarginalReport {
  std::vector<Real> mean;  // S x D_S, batch mean of code probabilities
  double max_deviation = 0;  // max |mean - 1/D_S|
};

MarginalReport marginal_uniformity(const CodeBatch& code);

// S x S matrix, I = H(s') + H(s'') - H(s',s'') from empirical marginals and
// the pairwise product joint over the batch. Diagonal entries report H(s),
// the self-information limit. `cross` uses one factor from each view.
std::vector<Real> segment_mutual_information(const CodeBatch& code);
std::vector<Real> segment_mutual_information_cross(const CodeBatch& a, const CodeBatch& b);

// D x D empirical covariance of the flattened code vectors, population (1/N)
// normalization.
std::vector<Real> code_covariance(const CodeBatch& code);

// Per segment: max_d mean_i p_i(s,d). 1 means full collapse, 1/D_S balanced.
std::vector<Real> collapse_fraction(const CodeBatch& code);

// Balanced independent one-hot codes: the n = D_S^S mixed-radix enumeration
// of all unit combinations. The configuration with uniform marginals, zero
// cross-segment MI and within-segment covariance -1/D_S^2.
CodeBatch ideal_codes(const SegmentConfig& config);

// Everything cmd_analyze reports for one batch of codes.
struct TheoryReport {
  SegmentConfig config;
  int batch = 0;
  MarginalReport marginals;
  std::vector<Real> marginal_entropy;  // per segment
  std::vector<Real> mi;                // S x S
  std::vector<Real> covariance;        // D x D
  std::vector<Real> collapse;          // per segment
  // Selected-entropy value of this batch (1/S^2 form, single-view joint)
  // next to the one-hot reference -(2S-1)/S*ln(D_S). The reference is the
  // value attained by balanced one-hot codes, not a verified maximum: soft
  // configurations with diagonal mass 2/e per unit can exceed it.
  Real selected_entropy = 0;
  Real onehot_reference = 0;
};

TheoryReport analyze_codes(const CodeBatch& code);

// Exact D_S^S as a decimal string.
std::string encoding_capacity(const SegmentConfig& config);

struct ProbeResult {
  double train_acc = 0;
  double test_acc = 0;
  int n_train = 0;
  int n_test = 0;
};

// Multinomial logistic regression on frozen features by full-batch gradient
// descent over a seeded 80/20 split. Features are standardized with
// train-split statistics.
ProbeResult linear_probe(const std::vector<Real>& features, int n, int dim,
                         const std::vector<int>& labels, uint64_t split_seed, int epochs,
                         double lr);

// Encoder output for every row of `samples` (no augmentation, no gradients).
std::vector<Real> compute_representations(const ModelParams& params,
                                          const std::vector<Real>& samples, int n, int dim);

// Codes for every row of `samples` under the given segment config.
CodeBatch compute_codes(const ModelParams& params, const SegmentConfig& config,
                        const std::vector<Real>& samples, int n, int dim);

}  // namespace music
