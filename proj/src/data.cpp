#include "music/data.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "music/textio.hpp"

namespace music {

namespace {

constexpr uint64_t kMeanTag = 0x21;
constexpr uint64_t kSampleTag = 0x22;
constexpr uint64_t kViewTag = 0x23;

}  // namespace

Dataset gen_clusters(int classes, int dim_signal, int dim_nuisance, int per_class,
                     double separation, double noise_std, uint64_t seed) {
  if (classes < 2) throw ConfigError("gen_clusters: classes must be >= 2");
  if (dim_signal < 1 || dim_nuisance < 0)
    throw ConfigError("gen_clusters: dim_signal >= 1 and dim_nuisance >= 0 required");
  if (per_class < 1) throw ConfigError("gen_clusters: per_class must be >= 1");
  if (separation < 0 || noise_std < 0)
    throw ConfigError("gen_clusters: separation and noise_std must be >= 0");

  Dataset data;
  data.classes = classes;
  data.dim_signal = dim_signal;
  data.dim_nuisance = dim_nuisance;
  data.per_class = per_class;
  data.separation = separation;
  data.noise_std = noise_std;
  data.seed = seed;

  std::vector<Real> means(static_cast<size_t>(classes) * dim_signal);
  for (int c = 0; c < classes; ++c) {
    Rng rng(derive_stream(seed, kMeanTag, static_cast<uint64_t>(c)));
    for (int j = 0; j < dim_signal; ++j)
      means[static_cast<size_t>(c) * dim_signal + j] = separation * rng.normal();
  }

  const int n = classes * per_class;
  const int dim = dim_signal + dim_nuisance;
  data.samples.resize(static_cast<size_t>(n) * dim);
  data.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i / per_class;
    data.labels[static_cast<size_t>(i)] = c;
    Rng rng(derive_stream(seed, kSampleTag, static_cast<uint64_t>(i)));
    Real* row = data.samples.data() + static_cast<size_t>(i) * dim;
    for (int j = 0; j < dim_signal; ++j)
      row[j] = means[static_cast<size_t>(c) * dim_signal + j] + noise_std * rng.normal();
    for (int j = dim_signal; j < dim; ++j) row[j] = rng.normal();
  }
  quantize_span(data.samples);
  return data;
}

void AugmentSpec::validate() const {
  if (gaussian_noise_std < 0) throw ConfigError("augment: gaussian_noise_std must be >= 0");
  if (dropout_prob < 0 || dropout_prob >= 1)
    throw ConfigError("augment: dropout_prob must be in [0,1)");
  if (!(scale_hi >= scale_lo && scale_lo > 0))
    throw ConfigError("augment: scale range requires hi >= lo > 0");
}

void augment_view(std::span<const Real> x, const AugmentSpec& spec, Rng& stream,
                  std::span<Real> out) {
  spec.validate();
  if (out.size() != x.size()) throw UsageError("augment_view: output size mismatch");
  // Fixed draw order regardless of parameter values keeps streams aligned
  // between configs: one normal per dim, one uniform per dim, one scale draw.
  for (size_t j = 0; j < x.size(); ++j)
    out[j] = x[j] + spec.gaussian_noise_std * stream.normal();
  for (size_t j = 0; j < x.size(); ++j)
    if (stream.uniform01() < spec.dropout_prob) out[j] = 0.0;
  const Real scale = stream.uniform(spec.scale_lo, spec.scale_hi);
  for (size_t j = 0; j < x.size(); ++j) out[j] *= scale;
  quantize_span(out);
}

Rng view_stream(uint64_t seed, int64_t epoch, int64_t sample_index, int view_index) {
  return Rng(derive_stream(seed ^ (kViewTag << 56), static_cast<uint64_t>(epoch),
                           static_cast<uint64_t>(sample_index),
                           static_cast<uint64_t>(view_index)));
}

std::pair<std::vector<Real>, std::vector<Real>> two_views(std::span<const Real> x,
                                                          const AugmentSpec& spec, uint64_t seed,
                                                          int64_t epoch, int64_t sample_index) {
  std::vector<Real> v1(x.size()), v2(x.size());
  Rng s1 = view_stream(seed, epoch, sample_index, 1);
  Rng s2 = view_stream(seed, epoch, sample_index, 2);
  augment_view(x, spec, s1, v1);
  augment_view(x, spec, s2, v2);
  return {std::move(v1), std::move(v2)};
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::string out;
  out.reserve(data.samples.size() * 20);
  out += "music-dataset v1 classes=" + std::to_string(data.classes) +
         " dim_signal=" + std::to_string(data.dim_signal) +
         " dim_nuisance=" + std::to_string(data.dim_nuisance) +
         " per_class=" + std::to_string(data.per_class) + " separation=" +
         fmt_real(data.separation) + " noise_std=" + fmt_real(data.noise_std) +
         " seed=" + std::to_string(data.seed) + "\n";
  const int dim = data.dim();
  for (int i = 0; i < data.size(); ++i) {
    out += std::to_string(data.labels[static_cast<size_t>(i)]);
    for (int j = 0; j < dim; ++j) {
      out += ' ';
      out += fmt_real(data.samples[static_cast<size_t>(i) * dim + j]);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write dataset file: " + path);
  f << out;
  if (!f) throw ConfigError("short write to dataset file: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read dataset file: " + path);
  std::string header;
  if (!std::getline(f, header)) throw ConfigError("empty dataset file: " + path);

  Dataset data;
  unsigned long long seed = 0;
  if (std::sscanf(header.c_str(),
                  "music-dataset v1 classes=%d dim_signal=%d dim_nuisance=%d per_class=%d "
                  "separation=%lf noise_std=%lf seed=%llu",
                  &data.classes, &data.dim_signal, &data.dim_nuisance, &data.per_class,
                  &data.separation, &data.noise_std, &seed) != 7)
    throw ConfigError("bad dataset header in " + path + ": " + header);
  data.seed = seed;

  const int n = data.classes * data.per_class;
  const int dim = data.dim();
  data.samples.reserve(static_cast<size_t>(n) * dim);
  data.labels.reserve(static_cast<size_t>(n));
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int label = 0;
    if (!(ss >> label)) throw ConfigError("bad sample line in " + path + ": " + line);
    data.labels.push_back(label);
    Real v = 0;
    int got = 0;
    while (ss >> v) {
      data.samples.push_back(v);
      ++got;
    }
    if (got != dim)
      throw ConfigError("sample with " + std::to_string(got) + " values, expected " +
                        std::to_string(dim) + " in " + path);
  }
  if (data.size() != n)
    throw ConfigError("dataset has " + std::to_string(data.size()) + " samples, header says " +
                      std::to_string(n));
  return data;
}

}  // namespace music
