#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "hublab/embedding.hpp"
#include "hublab/hubness.hpp"

namespace hublab {

/// mt19937_64 with hand-rolled uniform/normal draws. The standard
/// distributions are implementation-defined, so they would break bitwise
/// reproducibility across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller (the spare draw is cached).
  double normal();
  /// Uniform integer in [0, bound).
  std::size_t index(std::size_t bound);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Query/gallery rows matched by index, with relevance for evaluation.
struct PairedDataset {
  EmbeddingSet queries;
  EmbeddingSet galleries;
  RelevanceLabels relevance;
};

struct SynthConfig {
  std::size_t n_pairs = 1000;
  std::size_t dim = 64;
  double hub_fraction = 0.1;
  double contraction = 0.5;
  double noise = 0.8;
  /// Strength of the shared direction every base vector leans toward. It
  /// gives the gallery a nonzero centroid for the hub planting to contract to.
  double anisotropy = 0.5;
  std::uint64_t seed = 0;
};

struct SynthData {
  PairedDataset data;
  /// Gallery indices contracted toward the centroid, ascending.
  std::vector<std::size_t> planted;
};

/// Base z_i = normalize(anisotropy * a + r_i / sqrt(d)); mates are
/// normalize(z_i + noise * e / sqrt(d)) on each side. A hub_fraction subset
/// of gallery rows is then replaced by normalize(c + contraction (g - c)),
/// with c the gallery mean. Throws InvalidFraction for hub_fraction outside
/// [0, 1) or contraction outside (0, 1].
SynthData synth_generate(const SynthConfig& config);

}  // namespace hublab
