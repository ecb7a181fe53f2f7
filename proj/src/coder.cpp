#include "music/coder.hpp"

namespace music {

void SegmentConfig::validate() const {
  if (num_segments < 1)
    throw ConfigError("num_segments must be >= 1, got " + std::to_string(num_segments));
  if (segment_dim < 2)
    throw ConfigError("segment_dim must be >= 2, got " + std::to_string(segment_dim));
}

Var partition(Tape& tape, Var embedding, const SegmentConfig& config) {
  config.validate();
  const Shape& s = embedding.shape();
  if (s.size() != 2 || s[1] != config.embed_dim())
    throw ConfigError("partition: embedding shape " + shape_str(s) + " does not match S*D_S = " +
                      std::to_string(config.embed_dim()));
  return tape.reshape(embedding, {s[0], config.num_segments, config.segment_dim});
}

ProbCode segment_softmax(Tape& tape, Var segments, const SegmentConfig& config) {
  config.validate();
  const Shape& s = segments.shape();
  if (s.size() != 3 || s[1] != config.num_segments || s[2] != config.segment_dim)
    throw ConfigError("segment_softmax: shape " + shape_str(s) + " does not match config");
  return ProbCode{tape.softmax_last(segments), config};
}

ProbCode code_embedding(Tape& tape, Var embedding, const SegmentConfig& config) {
  return segment_softmax(tape, partition(tape, embedding, config), config);
}

}  // namespace music
