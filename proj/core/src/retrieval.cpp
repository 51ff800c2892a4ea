#include "hublab/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "hublab/error.hpp"
#include "hublab/losses.hpp"
#include "hublab/parallel.hpp"

namespace hublab {

std::vector<std::size_t> rank_row(const SimilarityMatrix& s, std::size_t i) {
  const auto row = static_cast<Eigen::Index>(i);
  std::vector<std::size_t> order(static_cast<std::size_t>(s.cols()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = s.scores(row, static_cast<Eigen::Index>(a));
    const double sb = s.scores(row, static_cast<Eigen::Index>(b));
    return sa > sb || (sa == sb && a < b);
  });
  return order;
}

RetrievalScores retrieval_eval(const SimilarityMatrix& s, const RelevanceLabels& labels,
                               const std::vector<std::size_t>& ks) {
  const auto n = static_cast<std::size_t>(s.rows());
  const auto m = static_cast<std::size_t>(s.cols());
  if (labels.n_queries() != n || labels.n_gallery() != m) {
    throw Error(ErrorCode::MissingLabels, "relevance labels do not match the similarity shape");
  }
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "no queries to evaluate");
  labels.validate();

  RetrievalScores out;
  out.first_relevant_rank.assign(n, 0);
  std::vector<double> ap(n, 0.0);
  std::vector<double> rp(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const std::vector<std::size_t> order = rank_row(s, i);
    const std::size_t r = labels.relevant_count(i);
    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t pos = 0; pos < m; ++pos) {
      if (!labels.relevant(i, order[pos])) continue;
      if (out.first_relevant_rank[i] == 0) out.first_relevant_rank[i] = pos + 1;
      if (pos < r) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
      } else {
        break;
      }
    }
    ap[i] = precision_sum / static_cast<double>(r);
    rp[i] = static_cast<double>(hits) / static_cast<double>(r);
  });

  for (std::size_t k : ks) {
    std::size_t within = 0;
    for (std::size_t rank : out.first_relevant_rank) within += rank <= k ? 1 : 0;
    out.r_at[k] = 100.0 * static_cast<double>(within) / static_cast<double>(n);
  }
  out.rsum = 0.0;
  for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{10}}) {
    auto it = out.r_at.find(k);
    if (it == out.r_at.end()) {
      std::size_t within = 0;
      for (std::size_t rank : out.first_relevant_rank) within += rank <= k ? 1 : 0;
      out.rsum += 100.0 * static_cast<double>(within) / static_cast<double>(n);
    } else {
      out.rsum += it->second;
    }
  }

  std::vector<std::size_t> ranks = out.first_relevant_rank;
  std::sort(ranks.begin(), ranks.end());
  out.median_rank = n % 2 == 1 ? static_cast<double>(ranks[n / 2])
                               : 0.5 * static_cast<double>(ranks[n / 2 - 1] + ranks[n / 2]);
  double total = 0.0;
  for (std::size_t rank : ranks) total += static_cast<double>(rank);
  out.mean_rank = total / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.map_at_r += ap[i];
    out.r_precision += rp[i];
  }
  out.map_at_r /= static_cast<double>(n);
  out.r_precision /= static_cast<double>(n);
  return out;
}

SimilarityMatrix infer_simi_cent(const SimilarityMatrix& s, const MemoryBank& bank, const EmbeddingSet& gallery) {
  return decentral_similarity(s, cross_centrality(bank, gallery));
}

}  // namespace hublab
