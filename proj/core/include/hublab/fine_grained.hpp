#pragma once

#include <cstddef>
#include <vector>

#include "hublab/embedding.hpp"

namespace hublab {

/// N tokens of one sample plus nonnegative weights summing to 1.
struct TokenSet {
  Matrix tokens;
  std::vector<double> weights;

  std::size_t size() const noexcept { return static_cast<std::size_t>(tokens.rows()); }

  /// Same tokens with uniform weights 1/N.
  static TokenSet uniform(Matrix tokens);
  void validate() const;
};

/// Weighted token-wise interaction:
///   1/2 (sum_i wv_i max_j a_ij + sum_j wt_j max_i a_ij),  a_ij = cos(v_i, t_j).
double wti_similarity(const TokenSet& v, const TokenSet& t);

/// Density-peaks clustering over tokens with k-NN density.
struct DpcClustering {
  std::vector<double> density;  // exp(-mean squared distance to k_density nearest tokens)
  std::vector<double> delta;    // distance to nearest higher-density token
  std::vector<std::size_t> parent;  // nearest higher-density token (self for the peak)
  std::vector<std::size_t> centers;  // ascending token indices
  std::vector<std::size_t> assignment;  // token -> cluster position in `centers`
};

std::size_t default_k_density(std::size_t n_tokens);

/// Centers are the c largest density * delta scores (ties to the lower index);
/// the global density peak is always a center. Remaining tokens follow their
/// `parent` chain until they hit a center. Throws InvalidClusterCount unless
/// 1 <= c <= N.
DpcClustering dpc_knn_cluster(const TokenSet& tokens, std::size_t clusters, std::size_t k_density);

/// One token per cluster: the weight-weighted mean of its members, carrying the
/// summed member weight. Output order follows ascending center index.
TokenSet dpc_knn_merge(const TokenSet& tokens, std::size_t clusters, std::size_t k_density);
TokenSet dpc_knn_merge(const TokenSet& tokens, std::size_t clusters);

/// Pairwise WTI scores between two lists of token sets.
SimilarityMatrix wti_similarity_matrix(const std::vector<TokenSet>& queries, const std::vector<TokenSet>& gallery,
                                       double temperature = 1.0);

}  // namespace hublab
