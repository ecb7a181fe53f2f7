#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "music/diffcore.hpp"

namespace music {

// Fully-connected stack: widths = {input, hidden..., output}, rectified-linear
// between layers and nothing after the last.
struct MlpSpec {
  std::vector<int> widths;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layers() const { return static_cast<int>(widths.size()) - 1; }
  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

struct LayerParams {
  int in = 0;
  int out = 0;
  std::vector<Real> w;  // in x out, row-major
  std::vector<Real> b;  // out
};

// Encoder + projector weights, shared by both branches of the twin setup.
struct ModelParams {
  MlpSpec encoder_spec;
  MlpSpec projector_spec;
  std::vector<LayerParams> encoder;
  std::vector<LayerParams> projector;
  uint64_t seed = 0;

  int representation_dim() const { return encoder_spec.output_dim(); }
  int embed_dim() const { return projector_spec.output_dim(); }
};

// Weights ~ N(0, 2/fan_in), biases zero; bit-identical for a given seed.
ModelParams init_model(const MlpSpec& encoder_spec, const MlpSpec& projector_spec, uint64_t seed);

// Tape handles for one training step. Order matches ModelParams layers:
// encoder first, then projector, (weight, bias) per layer.
struct TapedModel {
  std::vector<std::pair<Var, Var>> encoder;
  std::vector<std::pair<Var, Var>> projector;
};

TapedModel bind_model(Tape& tape, const ModelParams& params);

// batch: (N, input_dim) -> representation (N, rep_dim)
Var encode(Tape& tape, const TapedModel& model, Var batch);

// representation -> embedding (N, embed_dim)
Var project(Tape& tape, const TapedModel& model, Var representation);

}  // namespace music
