#include "music/model.hpp"

#include <cmath>

#include "music/rng.hpp"

namespace music {

namespace {

constexpr uint64_t kInitTag = 0x11;

std::vector<LayerParams> init_stack(const MlpSpec& spec, uint64_t seed, uint64_t stack_tag) {
  std::vector<LayerParams> layers;
  for (int l = 0; l < spec.layers(); ++l) {
    LayerParams p;
    p.in = spec.widths[static_cast<size_t>(l)];
    p.out = spec.widths[static_cast<size_t>(l) + 1];
    p.w.resize(static_cast<size_t>(p.in) * p.out);
    p.b.assign(static_cast<size_t>(p.out), 0.0);
    Rng rng(derive_stream(seed, kInitTag, stack_tag, static_cast<uint64_t>(l)));
    const Real std = std::sqrt(Real(2) / p.in);
    for (Real& w : p.w) w = quantize(std * rng.normal());
    layers.push_back(std::move(p));
  }
  return layers;
}

Var mlp_forward(Tape& tape, const std::vector<std::pair<Var, Var>>& layers, Var x,
                const MlpSpec& spec, const char* name) {
  if (x.shape().size() != 2 || x.shape()[1] != spec.input_dim())
    throw ConfigError(std::string(name) + ": input shape " + shape_str(x.shape()) +
                      " does not match spec width " + std::to_string(spec.input_dim()));
  Var h = x;
  for (size_t l = 0; l < layers.size(); ++l) {
    h = tape.add_row(tape.matmul(h, layers[l].first), layers[l].second);
    if (l + 1 < layers.size()) h = tape.relu(h);
  }
  return h;
}

}  // namespace

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("MlpSpec needs at least one layer (two widths)");
  for (int w : widths)
    if (w < 1) throw ConfigError("MlpSpec widths must be positive");
}

ModelParams init_model(const MlpSpec& encoder_spec, const MlpSpec& projector_spec, uint64_t seed) {
  encoder_spec.validate();
  projector_spec.validate();
  if (encoder_spec.output_dim() != projector_spec.input_dim())
    throw ConfigError("projector input width " + std::to_string(projector_spec.input_dim()) +
                      " does not match encoder output " + std::to_string(encoder_spec.output_dim()));
  ModelParams params;
  params.encoder_spec = encoder_spec;
  params.projector_spec = projector_spec;
  params.seed = seed;
  params.encoder = init_stack(encoder_spec, seed, 0);
  params.projector = init_stack(projector_spec, seed, 1);
  return params;
}

TapedModel bind_model(Tape& tape, const ModelParams& params) {
  TapedModel model;
  const auto bind_stack = [&](const std::vector<LayerParams>& layers, const char* prefix) {
    std::vector<std::pair<Var, Var>> bound;
    for (size_t l = 0; l < layers.size(); ++l) {
      const LayerParams& p = layers[l];
      bound.emplace_back(
          tape.leaf({p.in, p.out}, p.w, std::string(prefix) + ".w" + std::to_string(l)),
          tape.leaf({p.out}, p.b, std::string(prefix) + ".b" + std::to_string(l)));
    }
    return bound;
  };
  model.encoder = bind_stack(params.encoder, "enc");
  model.projector = bind_stack(params.projector, "proj");
  return model;
}

Var encode(Tape& tape, const TapedModel& model, Var batch) {
  // spec widths are recoverable from the bound weight shapes
  MlpSpec spec;
  spec.widths.push_back(model.encoder.front().first.shape()[0]);
  for (const auto& layer : model.encoder) spec.widths.push_back(layer.first.shape()[1]);
  return mlp_forward(tape, model.encoder, batch, spec, "encode");
}

Var project(Tape& tape, const TapedModel& model, Var representation) {
  MlpSpec spec;
  spec.widths.push_back(model.projector.front().first.shape()[0]);
  for (const auto& layer : model.projector) spec.widths.push_back(layer.first.shape()[1]);
  return mlp_forward(tape, model.projector, representation, spec, "project");
}

}  // namespace music
