#include "hublab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hublab/error.hpp"

namespace hublab {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::index(std::size_t bound) {
  if (bound == 0) return 0;
  return std::min(bound - 1, static_cast<std::size_t>(uniform() * static_cast<double>(bound)));
}

namespace {

void normalize_row(Matrix& m, Eigen::Index r) {
  m.row(r) /= m.row(r).norm();
}

}  // namespace

SynthData synth_generate(const SynthConfig& config) {
  if (!(config.hub_fraction >= 0.0 && config.hub_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidFraction, "hub_fraction must lie in [0, 1)");
  }
  if (!(config.contraction > 0.0 && config.contraction <= 1.0)) {
    throw Error(ErrorCode::InvalidFraction, "contraction must lie in (0, 1]");
  }
  if (config.n_pairs < 1 || config.dim < 1) throw Error(ErrorCode::InvalidArgument, "n_pairs and dim must be >= 1");
  if (!(config.noise >= 0.0) || !(config.anisotropy >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise and anisotropy must be nonnegative");
  }

  const auto n = static_cast<Eigen::Index>(config.n_pairs);
  const auto d = static_cast<Eigen::Index>(config.dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.dim));
  Rng rng(config.seed);

  Vector axis(d);
  for (Eigen::Index c = 0; c < d; ++c) axis[c] = rng.normal();
  axis /= axis.norm();

  Matrix base(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) base(i, c) = config.anisotropy * axis[c] + rng.normal() * scale;
    normalize_row(base, i);
  }

  Matrix queries(n, d);
  Matrix galleries(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) queries(i, c) = base(i, c) + config.noise * rng.normal() * scale;
    for (Eigen::Index c = 0; c < d; ++c) galleries(i, c) = base(i, c) + config.noise * rng.normal() * scale;
    normalize_row(queries, i);
    normalize_row(galleries, i);
  }

  // The permutation is always drawn so that planting never shifts the stream.
  std::vector<std::size_t> order(config.n_pairs);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  SynthData out;
  const auto n_planted = static_cast<std::size_t>(std::floor(config.hub_fraction * static_cast<double>(config.n_pairs)));
  if (n_planted > 0 && config.contraction < 1.0) {
    const Vector centroid = galleries.colwise().mean().transpose();
    out.planted.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_planted));
    std::sort(out.planted.begin(), out.planted.end());
    for (std::size_t j : out.planted) {
      const auto r = static_cast<Eigen::Index>(j);
      galleries.row(r) = centroid.transpose() + config.contraction * (galleries.row(r) - centroid.transpose());
      normalize_row(galleries, r);
    }
  }

  auto& data = out.data;
  data.queries.data = std::move(queries);
  data.queries.modality = Modality::Query;
  data.galleries.data = std::move(galleries);
  data.galleries.modality = Modality::Gallery;
  for (std::size_t i = 0; i < config.n_pairs; ++i) {
    data.queries.ids.push_back("q" + std::to_string(i));
    data.galleries.ids.push_back("g" + std::to_string(i));
    data.queries.labels.push_back(static_cast<std::int64_t>(i));
    data.galleries.labels.push_back(static_cast<std::int64_t>(i));
  }
  data.relevance = RelevanceLabels::diagonal(config.n_pairs);
  return out;
}

}  // namespace hublab
