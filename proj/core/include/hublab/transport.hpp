#pragma once

#include <cstddef>
#include <vector>

#include "hublab/embedding.hpp"
#include "hublab/losses.hpp"

namespace hublab {

/// Entropic transport plan with uniform marginals (rows 1/n, columns 1/m).
struct TransportPlan {
  Matrix q;
  double epsilon = 0.0;
  std::size_t iterations_used = 0;
  /// L1 marginal error sum_i |r_i - 1/n| + sum_j |c_j - 1/m| of `q`.
  double residual = 0.0;
  /// False when max_iter was hit with residual in (tol, 100 tol].
  bool converged = true;
  /// Row-marginal L1 error after every iteration (columns are exact right
  /// after their update), first to last.
  std::vector<double> residual_history;
};

struct SinkhornOptions {
  double epsilon = 0.05;
  double tol = 1e-6;
  std::size_t max_iter = 200;
  /// When false, a solve that misses 100 tol is returned (converged = false)
  /// instead of throwing.
  bool strict = true;
};

/// Q = diag(u) exp(S / epsilon) diag(v), with the scalings found by
/// alternating row/column updates in the log domain. Stops once the residual
/// is <= tol. At max_iter, throws NotConvergedError if the residual exceeds
/// 100 tol, otherwise returns with converged = false.
TransportPlan sinkhorn_plan(const SimilarityMatrix& s, const SinkhornOptions& options = {});

/// (1 - beta) I + beta * rowstochastic(Q*). Q* rows are rescaled to sum to 1
/// before blending so the result is a probability target per row.
struct BlendedTarget {
  Matrix q_blend;
  double beta = 0.5;
};

BlendedTarget blend_targets(const TransportPlan& plan, double beta);

/// L = -(1/n) sum_ij T_ij log P(j|i), P the row softmax of S / tau.
/// grad(i, j) = -(1/(n tau)) (T_ij - P(j|i) sum_l T_il), which is
/// -(1/(n tau)) (T_ij - P(j|i)) for a row-stochastic target.
LossBundle loss_opt(const SimilarityMatrix& s, const Matrix& target);

inline LossBundle loss_opt(const SimilarityMatrix& s, const BlendedTarget& target) {
  return loss_opt(s, target.q_blend);
}

}  // namespace hublab
