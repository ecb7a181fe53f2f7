#pragma once

#include "music/diffcore.hpp"

namespace music {

// Partition geometry of the embedding space: S segments of D_S units each.
struct SegmentConfig {
  int num_segments = 4;  // S
  int segment_dim = 8;   // D_S, >= 2; a one-unit segment carries no information

  int embed_dim() const { return num_segments * segment_dim; }
  void validate() const;
  bool operator==(const SegmentConfig&) const = default;
};

// Batch of per-segment probability distributions, shape (N, S, D_S); each
// (sample, segment) row sums to 1.
struct ProbCode {
  Var values;
  SegmentConfig config;

  int batch() const { return values.shape()[0]; }
};

// (N, D) -> (N, S, D_S); element (i, s, d) is embedding element (i, s*D_S+d).
Var partition(Tape& tape, Var embedding, const SegmentConfig& config);

// Softmax independently over each (sample, segment) row of D_S units.
ProbCode segment_softmax(Tape& tape, Var segments, const SegmentConfig& config);

// partition + segment_softmax.
ProbCode code_embedding(Tape& tape, Var embedding, const SegmentConfig& config);

}  // namespace music
