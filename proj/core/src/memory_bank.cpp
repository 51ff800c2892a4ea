#include "hublab/memory_bank.hpp"

#include <algorithm>
#include <cmath>

#include "hublab/error.hpp"

namespace hublab {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw Error(ErrorCode::InvalidArgument, "memory bank capacity must be positive");
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "memory bank dimension must be positive");
  for (auto& ring : rings_) ring.slots = Matrix::Zero(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dim));
}

void MemoryBank::push_batch(const EmbeddingSet& batch) {
  if (batch.size() > capacity_) {
    throw Error(ErrorCode::BatchTooLarge, "batch of " + std::to_string(batch.size()) +
                                              " exceeds capacity " + std::to_string(capacity_));
  }
  if (batch.dim() != dim_) throw Error(ErrorCode::DimensionMismatch, "batch dimension differs from bank");
  const EmbeddingSet unit = l2_normalize(batch);
  Ring& ring = rings_[index(batch.modality)];
  for (Eigen::Index r = 0; r < unit.data.rows(); ++r) {
    const std::size_t slot = (ring.head + ring.fill) % capacity_;
    ring.slots.row(static_cast<Eigen::Index>(slot)) = unit.data.row(r);
    if (ring.fill < capacity_) {
      ++ring.fill;
    } else {
      ring.head = (ring.head + 1) % capacity_;
    }
  }
}

Matrix MemoryBank::contents(Modality m) const {
  const Ring& ring = rings_[index(m)];
  Matrix out(static_cast<Eigen::Index>(ring.fill), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < ring.fill; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = ring.slots.row(static_cast<Eigen::Index>((ring.head + i) % capacity_));
  }
  return out;
}

Vector MemoryBank::slot_sum(Modality m) const {
  const Ring& ring = rings_[index(m)];
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < ring.fill; ++i) {
    sum += ring.slots.row(static_cast<Eigen::Index>((ring.head + i) % capacity_)).transpose();
  }
  return sum;
}

void MemoryBank::clear() {
  for (auto& ring : rings_) {
    ring.head = 0;
    ring.fill = 0;
  }
}

namespace {

// Slots are unit vectors, so the mean cosine is <x/|x|, mean(slots)>.
CentralityVector centrality_against(const MemoryBank& bank, const EmbeddingSet& samples, Modality slots,
                                    CentralityKind kind) {
  const std::size_t fill = bank.fill(slots);
  if (fill == 0) throw Error(ErrorCode::EmptyBank, "no stored vectors for the requested modality");
  if (samples.dim() != bank.dim()) throw Error(ErrorCode::DimensionMismatch, "sample dimension differs from bank");
  const Vector mean = bank.slot_sum(slots) / static_cast<double>(fill);
  const EmbeddingSet unit = l2_normalize(samples);
  CentralityVector out{std::vector<double>(samples.size()), kind};
  for (Eigen::Index i = 0; i < unit.data.rows(); ++i) {
    out.values[static_cast<std::size_t>(i)] = std::clamp(unit.data.row(i).dot(mean), -1.0, 1.0);
  }
  return out;
}

}  // namespace

CentralityVector intra_centrality(const MemoryBank& bank, const EmbeddingSet& samples) {
  return centrality_against(bank, samples, samples.modality, CentralityKind::Intra);
}

CentralityVector cross_centrality(const MemoryBank& bank, const EmbeddingSet& samples) {
  return centrality_against(bank, samples, opposite(samples.modality), CentralityKind::Cross);
}

std::vector<double> centrality_weights(const CentralityVector& c, double kappa, bool normalize) {
  if (!(kappa > 0.0)) throw Error(ErrorCode::NonPositiveKappa, "kappa must be > 0");
  if (c.kind != CentralityKind::Intra) {
    throw Error(ErrorCode::InvalidArgument, "centrality weights are defined on intra-modal centrality");
  }
  std::vector<double> w(c.values.size());
  if (!normalize) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(c.values[i] / kappa);
    return w;
  }
  if (w.empty()) return w;
  // Shift by the max before exponentiating; the shift cancels in the mean.
  const double mx = *std::max_element(c.values.begin(), c.values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp((c.values[i] - mx) / kappa);
    total += w[i];
  }
  const double mean = total / static_cast<double>(w.size());
  for (double& v : w) v /= mean;
  return w;
}

}  // namespace hublab
