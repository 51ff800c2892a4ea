#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "hublab/embedding.hpp"

namespace hublab {

/// N_k per gallery item: how many query rows list it among their top k.
struct KOccurrence {
  std::vector<std::int64_t> counts;
  std::size_t k = 0;
  std::size_t n_queries = 0;
};

/// Top-k gallery indices per query row, best first. Ranking uses raw scores
/// with ties broken toward the lower gallery index.
std::vector<std::vector<std::size_t>> top_k_lists(const SimilarityMatrix& s, std::size_t k);

/// Throws KTooLarge when k > m.
KOccurrence k_occurrence(const SimilarityMatrix& s, std::size_t k);

enum class LabelSource { GroundTruth, PseudoPositive };

/// Dense n x m relevance mask.
class RelevanceLabels {
 public:
  RelevanceLabels() = default;
  RelevanceLabels(std::size_t n_queries, std::size_t n_gallery, LabelSource source = LabelSource::GroundTruth);

  /// Query i relevant to gallery i only.
  static RelevanceLabels diagonal(std::size_t n);
  /// Query i relevant to gallery j iff both carry the same class label.
  static RelevanceLabels from_classes(const std::vector<std::int64_t>& query_classes,
                                      const std::vector<std::int64_t>& gallery_classes);
  static RelevanceLabels from_pairs(std::size_t n_queries, std::size_t n_gallery,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    LabelSource source = LabelSource::GroundTruth);

  bool relevant(std::size_t i, std::size_t j) const { return mask_[i * n_gallery_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value) { mask_[i * n_gallery_ + j] = value ? 1 : 0; }

  std::size_t n_queries() const noexcept { return n_queries_; }
  std::size_t n_gallery() const noexcept { return n_gallery_; }
  LabelSource source() const noexcept { return source_; }
  void set_source(LabelSource s) noexcept { source_ = s; }

  std::size_t relevant_count(std::size_t i) const;
  /// Relevant (i, j) pairs in row-major order.
  std::vector<std::pair<std::size_t, std::size_t>> pairs() const;
  /// Throws NoRelevant if some query has no relevant item.
  void validate() const;

  bool operator==(const RelevanceLabels&) const = default;

 private:
  std::size_t n_queries_ = 0;
  std::size_t n_gallery_ = 0;
  LabelSource source_ = LabelSource::GroundTruth;
  std::vector<std::uint8_t> mask_;
};

/// Splits each top-k slot into good (relevant to that query) and bad counts.
/// good + bad equals k_occurrence(s, k).counts elementwise.
struct GoodBadOccurrence {
  std::vector<std::int64_t> good;
  std::vector<std::int64_t> bad;
};

GoodBadOccurrence good_bad_occurrence(const SimilarityMatrix& s, std::size_t k, const RelevanceLabels& labels);

/// A statistic that falls back to 0 when its spread vanishes.
struct Statistic {
  double value = 0.0;
  bool degenerate = false;
};

/// Population skewness E[(N - mu)^3] / sigma^3. Degenerate (0) when sigma < 1e-12.
Statistic skewness(const KOccurrence& occ);

/// Skewness of the zero-truncated multiset {N_k(x) : N_k(x) > 0}. Throws AllZero.
Statistic truncated_skewness(const KOccurrence& occ);

/// 1 - mean(N^(1 - eps))^(1 / (1 - eps)) / mu for eps in (0, 1). Throws ZeroMean.
double atkinson(const KOccurrence& occ, double epsilon);

/// Hoover form sum|N - mu| / (2 sum N). Throws ZeroTotal.
double robin_hood(const KOccurrence& occ);

/// Fraction of gallery items with N_k = 0.
double antihub_occurrence(const KOccurrence& occ);

/// Share of all n k neighbor slots held by items with N_k > k * hub_size_factor.
double hub_occurrence(const KOccurrence& occ, double hub_size_factor);

/// Intra-text probe: (i, j) relevant iff cos(t_i, t_j) >= threshold or i == j.
RelevanceLabels pseudo_positive_probe(const EmbeddingSet& texts, double threshold);

struct HubnessParams {
  std::size_t k = 15;
  double hub_size_factor = 2.0;
  double atkinson_epsilon = 0.5;
};

struct HubnessReport {
  HubnessParams params;
  std::size_t n_queries = 0;
  std::size_t n_gallery = 0;
  double skew = 0.0;
  double trunc = 0.0;
  double atkinson = 0.0;
  double robin = 0.0;
  double anti = 0.0;
  double hub = 0.0;
  bool skew_degenerate = false;
  bool trunc_degenerate = false;
  /// histogram[c] = number of gallery items with N_k = c.
  std::vector<std::int64_t> histogram;
  KOccurrence occurrence;
  std::optional<GoodBadOccurrence> good_bad;
};

std::vector<std::int64_t> count_histogram(const std::vector<std::int64_t>& counts);

/// All six metrics and the histogram from one shared k-occurrence pass.
HubnessReport hubness_report(const SimilarityMatrix& s, const HubnessParams& params = {});
HubnessReport hubness_report(const SimilarityMatrix& s, const HubnessParams& params, const RelevanceLabels& labels);

}  // namespace hublab
