#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hublab/embedding.hpp"
#include "hublab/memory_bank.hpp"

namespace hublab {

/// A scalar loss with its gradient with respect to the raw similarity scores.
/// `grad_high` is only populated by losses with a second similarity argument
/// (the KL distillation term); elsewhere it is empty.
struct LossBundle {
  double value = 0.0;
  Matrix grad;
  Matrix grad_high;
  std::vector<double> per_sample;
};

LossBundle zero_loss(std::size_t rows, std::size_t cols);

/// Centrality-weighted InfoNCE over a square batch whose diagonal holds the
/// positives:  L = -(1/B) sum_i w_i log softmax(S_i / tau)_i.
/// grad(i, j) = w_i / (B tau) * (P(j|i) - [i == j]).
LossBundle loss_wti(const SimilarityMatrix& s, std::span<const double> weights);

/// S~(i, j) = S(i, j) - Ĉ(y_j). Requires cross-modal centrality of length m.
SimilarityMatrix decentral_similarity(const SimilarityMatrix& s, const CentralityVector& gallery_centrality);

/// N(x_i) for one anchor plus its ground truth. `members` excludes the
/// ground truth and is ordered by descending raw score (ties to lower index).
struct NeighborSet {
  std::size_t anchor = 0;
  std::size_t ground_truth = 0;
  std::vector<std::size_t> members;

  /// N+(x_i): the ground truth followed by `members`.
  std::vector<std::size_t> extended() const;
};

inline constexpr std::size_t kDefaultNeighbors = 20;

/// Picks the min(k, m - 1) highest raw scores in row `anchor`, skipping the
/// ground truth (defaults to `anchor`, the diagonal positive).
NeighborSet select_neighbors(const SimilarityMatrix& s, std::size_t anchor, std::size_t k,
                             std::optional<std::size_t> ground_truth = std::nullopt);

/// Targets H over N+ in `extended()` order: H[0] = 1 for the ground truth,
/// the rest a softmax of S~ over the members.
std::vector<double> neighbor_targets(const SimilarityMatrix& s_tilde, const NeighborSet& ns);

enum class GradMode { Exact, Paper };

/// Neighbor adjusting loss for one anchor,  L = -sum_{j in N+} H_j log P(j | N+),
/// with P the softmax of S / tau restricted to N+.
///
/// Exact mode returns the true derivative (P_j sum(H) - H_j) / tau. Since
/// H(gt) = 1 and the member targets sum to 1, sum(H) = 2. Paper mode returns
/// the simplified (P_j - H_j) / tau, which assumes sum(H) = 1; it is a descent
/// direction, not the gradient of `value`.
///
/// The gradient is n x m and nonzero only on row `anchor` at N+ columns.
LossBundle loss_nbi(const SimilarityMatrix& s, std::span<const double> targets, const NeighborSet& ns,
                    GradMode mode = GradMode::Exact);

/// Neighbor sets and targets for every anchor row, fixed before the loss is
/// evaluated. Row i uses ground truth i.
struct NeighborPlan {
  std::vector<NeighborSet> sets;
  std::vector<std::vector<double>> targets;
};

/// Neighbors chosen on raw `s`, targets shaped by `s_tilde`. Needs m >= n.
NeighborPlan plan_neighbors(const SimilarityMatrix& s, const SimilarityMatrix& s_tilde, std::size_t k);

/// Mean of loss_nbi over the plan's anchors, accumulated into one n x m grad.
LossBundle loss_nbi_planned(const SimilarityMatrix& s, const NeighborPlan& plan, GradMode mode = GradMode::Exact);

/// Batch form: averages loss_nbi over every anchor row i, with ground truth i,
/// neighbors chosen on raw `s` and targets shaped by `s_tilde`.
LossBundle loss_nbi_batch(const SimilarityMatrix& s, const SimilarityMatrix& s_tilde, std::size_t k,
                          GradMode mode = GradMode::Exact);

/// (1/n) sum_i KL(softmax(high_i) || softmax(low_i)). `grad` is with respect
/// to `low`, `grad_high` with respect to `high`. With `symmetric` the reverse
/// divergence KL(low || high) is added.
LossBundle loss_kl(const SimilarityMatrix& low, const SimilarityMatrix& high, bool symmetric = false);

/// Per-direction loss terms. A term that is switched off should be passed as
/// zero_loss(...) rather than left empty; an empty slot is an error.
struct DirectionLosses {
  std::optional<LossBundle> wti;
  std::optional<LossBundle> nbi;
  std::optional<LossBundle> opt;
  std::optional<LossBundle> kl;
};

/// value = 1/2 (sum of forward terms + sum of backward terms). Forward grads
/// are n x m; backward grads are m x n and are transposed into n x m.
LossBundle total_loss(const DirectionLosses& forward, const DirectionLosses& backward);

}  // namespace hublab
