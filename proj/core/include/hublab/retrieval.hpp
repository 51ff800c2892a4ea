#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "hublab/embedding.hpp"
#include "hublab/hubness.hpp"
#include "hublab/memory_bank.hpp"

namespace hublab {

/// Recalls are percentages (0-100); mAP@R and R-Precision are fractions.
struct RetrievalScores {
  std::map<std::size_t, double> r_at;
  double median_rank = 0.0;
  double mean_rank = 0.0;
  double rsum = 0.0;
  double map_at_r = 0.0;
  double r_precision = 0.0;
  /// 1-based rank of the best-ranked relevant item per query.
  std::vector<std::size_t> first_relevant_rank;
};

/// Full ranking of row `i`, best first (ties to the lower gallery index).
std::vector<std::size_t> rank_row(const SimilarityMatrix& s, std::size_t i);

/// R@K uses the rank of the first relevant item. mAP@R and R-Precision use
/// the query's R relevant items and its top-R list. Throws NoRelevant if a
/// query has no relevant item, MissingLabels on a shape mismatch.
RetrievalScores retrieval_eval(const SimilarityMatrix& s, const RelevanceLabels& labels,
                               const std::vector<std::size_t>& ks = {1, 5, 10});

/// Test-time de-centrality ranking: S - Ĉ(gallery) with Ĉ measured against
/// the bank's opposite-modality slots. Throws EmptyBank.
SimilarityMatrix infer_simi_cent(const SimilarityMatrix& s, const MemoryBank& bank, const EmbeddingSet& gallery);

}  // namespace hublab
