#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace music {

using Real = double;

// Invalid shapes, flags, or file contents. CLI exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: non-scalar backward root, mismatched code pairs, out-of-range
// schedule step. CLI exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation produced non-finite values. CLI exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runtime precision mode. Storage stays double either way; f32 rounds every
// primitive result, initial parameter, and optimizer update to binary32.
// Selected once at startup (MUSIC_PRECISION=64|32), default f64.
enum class Precision { f64, f32 };

Precision precision_mode();
void set_precision_mode(Precision p);

inline Real quantize(Real x) {
  return precision_mode() == Precision::f32 ? static_cast<Real>(static_cast<float>(x)) : x;
}

void quantize_span(std::span<Real> xs);

}  // namespace music
