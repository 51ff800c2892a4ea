#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "hublab/embedding.hpp"

namespace hublab {

enum class CentralityKind { Intra, Cross };

struct CentralityVector {
  std::vector<double> values;
  CentralityKind kind = CentralityKind::Intra;
};

/// Fixed-capacity FIFO of unit vectors, one ring per modality. Stored rows are
/// detached copies: nothing downstream differentiates through them.
///
/// Mutation (push_batch) needs exclusive access; const members may run
/// concurrently between mutations.
class MemoryBank {
 public:
  static constexpr std::size_t kDefaultCapacity = 10240;

  MemoryBank(std::size_t capacity, std::size_t dim);

  /// Appends the (re-normalized) rows of `batch` to the ring for
  /// `batch.modality`, evicting the oldest rows once full.
  /// Throws BatchTooLarge if batch.size() > capacity.
  void push_batch(const EmbeddingSet& batch);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t fill(Modality m) const noexcept { return rings_[index(m)].fill; }

  /// Stored rows for `m`, oldest first.
  Matrix contents(Modality m) const;

  /// Sum of stored rows for `m` (fill x d reduced in oldest-first order).
  Vector slot_sum(Modality m) const;

  void clear();

 private:
  struct Ring {
    Matrix slots;
    std::size_t head = 0;  // index of the oldest row
    std::size_t fill = 0;
  };

  static std::size_t index(Modality m) noexcept { return static_cast<std::size_t>(m); }

  std::size_t capacity_;
  std::size_t dim_;
  std::array<Ring, 2> rings_;
};

/// C(x_i): mean cosine of each sample to the same-modality slots. Divides by
/// the current fill, so a partially filled bank is averaged over what it holds.
CentralityVector intra_centrality(const MemoryBank& bank, const EmbeddingSet& samples);

/// Ĉ(y_j): mean cosine of each sample to the opposite-modality slots.
CentralityVector cross_centrality(const MemoryBank& bank, const EmbeddingSet& samples);

/// w_i = exp(C_i / kappa); with `normalize` the weights are rescaled to batch mean 1.
std::vector<double> centrality_weights(const CentralityVector& c, double kappa, bool normalize = true);

}  // namespace hublab
