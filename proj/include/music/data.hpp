#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "music/common.hpp"
#include "music/rng.hpp"

namespace music {

// Labeled Gaussian-cluster data. Labels exist for probing and diagnostics
// only; the training loop never reads them.
struct Dataset {
  int classes = 0;
  int dim_signal = 0;
  int dim_nuisance = 0;
  int per_class = 0;
  double separation = 0;
  double noise_std = 0;
  uint64_t seed = 0;
  std::vector<Real> samples;  // N x dim(), row-major
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return dim_signal + dim_nuisance; }
  std::span<const Real> sample(int i) const {
    return {samples.data() + static_cast<size_t>(i) * dim(), static_cast<size_t>(dim())};
  }
};

// Class means ~ N(0, separation^2) per signal dim; samples add N(0, noise_std^2)
// around their mean; nuisance dims are standard normal, carrying per-sample
// but no per-class information.
Dataset gen_clusters(int classes, int dim_signal, int dim_nuisance, int per_class,
                     double separation, double noise_std, uint64_t seed);

// Vector-space stand-ins for the usual image transforms: additive Gaussian
// noise, coordinate dropout, global scale jitter — in that order. Defaults
// pair with the default dataset: noise at 0.3x the within-class std, and
// enough dropout that single-coordinate (nuisance) features are unstable
// across views while the redundant class direction survives.
struct AugmentSpec {
  double gaussian_noise_std = 0.036;
  double dropout_prob = 0.2;
  double scale_lo = 0.8;
  double scale_hi = 1.25;

  void validate() const;
  bool operator==(const AugmentSpec&) const = default;
};

void augment_view(std::span<const Real> x, const AugmentSpec& spec, Rng& stream,
                  std::span<Real> out);

// Stream key for one (epoch, sample, view) triple; replaying an epoch
// reproduces every view bit-exactly.
Rng view_stream(uint64_t seed, int64_t epoch, int64_t sample_index, int view_index);

std::pair<std::vector<Real>, std::vector<Real>> two_views(std::span<const Real> x,
                                                          const AugmentSpec& spec, uint64_t seed,
                                                          int64_t epoch, int64_t sample_index);

// Text format: one header line (counts/dims/seed), then `label v1 .. vd` per
// sample in %.17g decimals, byte-stable for a given dataset.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace music
