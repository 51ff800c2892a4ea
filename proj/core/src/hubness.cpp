#include "hublab/hubness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hublab/error.hpp"
#include "hublab/parallel.hpp"

namespace hublab {

std::vector<std::vector<std::size_t>> top_k_lists(const SimilarityMatrix& s, std::size_t k) {
  const std::size_t m = s.cols();
  if (k > m) throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds gallery size " + std::to_string(m));
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<std::vector<std::size_t>> lists(s.rows());
  parallel_for(s.rows(), [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = s.scores(row, static_cast<Eigen::Index>(a));
                        const double sb = s.scores(row, static_cast<Eigen::Index>(b));
                        return sa > sb || (sa == sb && a < b);
                      });
    idx.resize(k);
    lists[i] = std::move(idx);
  });
  return lists;
}

KOccurrence k_occurrence(const SimilarityMatrix& s, std::size_t k) {
  const auto lists = top_k_lists(s, k);
  KOccurrence occ{std::vector<std::int64_t>(s.cols(), 0), k, s.rows()};
  for (const auto& list : lists) {
    for (std::size_t j : list) ++occ.counts[j];
  }
  return occ;
}

RelevanceLabels::RelevanceLabels(std::size_t n_queries, std::size_t n_gallery, LabelSource source)
    : n_queries_(n_queries), n_gallery_(n_gallery), source_(source), mask_(n_queries * n_gallery, 0) {}

RelevanceLabels RelevanceLabels::diagonal(std::size_t n) {
  RelevanceLabels labels(n, n);
  for (std::size_t i = 0; i < n; ++i) labels.set(i, i, true);
  return labels;
}

RelevanceLabels RelevanceLabels::from_classes(const std::vector<std::int64_t>& query_classes,
                                              const std::vector<std::int64_t>& gallery_classes) {
  RelevanceLabels labels(query_classes.size(), gallery_classes.size());
  for (std::size_t i = 0; i < query_classes.size(); ++i) {
    for (std::size_t j = 0; j < gallery_classes.size(); ++j) {
      if (query_classes[i] == gallery_classes[j]) labels.set(i, j, true);
    }
  }
  return labels;
}

RelevanceLabels RelevanceLabels::from_pairs(std::size_t n_queries, std::size_t n_gallery,
                                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                            LabelSource source) {
  RelevanceLabels labels(n_queries, n_gallery, source);
  for (const auto& [i, j] : pairs) {
    if (i >= n_queries || j >= n_gallery) throw Error(ErrorCode::InvalidArgument, "relevance pair out of range");
    labels.set(i, j, true);
  }
  return labels;
}

std::size_t RelevanceLabels::relevant_count(std::size_t i) const {
  const auto begin = mask_.begin() + static_cast<std::ptrdiff_t>(i * n_gallery_);
  return static_cast<std::size_t>(std::count(begin, begin + static_cast<std::ptrdiff_t>(n_gallery_), std::uint8_t{1}));
}

std::vector<std::pair<std::size_t, std::size_t>> RelevanceLabels::pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_queries_; ++i) {
    for (std::size_t j = 0; j < n_gallery_; ++j) {
      if (relevant(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

void RelevanceLabels::validate() const {
  for (std::size_t i = 0; i < n_queries_; ++i) {
    if (relevant_count(i) == 0) throw Error(ErrorCode::NoRelevant, "query " + std::to_string(i) + " has no relevant item");
  }
}

GoodBadOccurrence good_bad_occurrence(const SimilarityMatrix& s, std::size_t k, const RelevanceLabels& labels) {
  if (labels.n_queries() != s.rows() || labels.n_gallery() != s.cols()) {
    throw Error(ErrorCode::MissingLabels, "relevance labels do not cover the similarity grid");
  }
  const auto lists = top_k_lists(s, k);
  GoodBadOccurrence out{std::vector<std::int64_t>(s.cols(), 0), std::vector<std::int64_t>(s.cols(), 0)};
  for (std::size_t i = 0; i < lists.size(); ++i) {
    for (std::size_t j : lists[i]) {
      if (labels.relevant(i, j)) {
        ++out.good[j];
      } else {
        ++out.bad[j];
      }
    }
  }
  return out;
}

namespace {

Statistic sample_skewness(const std::vector<double>& x) {
  if (x.empty()) return {0.0, true};
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : x) {
    const double dev = v - mean;
    m2 += dev * dev;
    m3 += dev * dev * dev;
  }
  m2 /= n;
  m3 /= n;
  const double sigma = std::sqrt(m2);
  if (sigma < 1e-12) return {0.0, true};
  return {m3 / (sigma * sigma * sigma), false};
}

double mean_count(const KOccurrence& occ) {
  double total = 0.0;
  for (auto c : occ.counts) total += static_cast<double>(c);
  return occ.counts.empty() ? 0.0 : total / static_cast<double>(occ.counts.size());
}

}  // namespace

Statistic skewness(const KOccurrence& occ) {
  std::vector<double> x(occ.counts.begin(), occ.counts.end());
  return sample_skewness(x);
}

Statistic truncated_skewness(const KOccurrence& occ) {
  std::vector<double> x;
  for (auto c : occ.counts) {
    if (c > 0) x.push_back(static_cast<double>(c));
  }
  if (x.empty()) throw Error(ErrorCode::AllZero, "every k-occurrence is zero");
  return sample_skewness(x);
}

double atkinson(const KOccurrence& occ, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorCode::InvalidArgument, "atkinson epsilon must lie in (0, 1)");
  const double mu = mean_count(occ);
  if (!(mu > 0.0)) throw Error(ErrorCode::ZeroMean, "k-occurrence mean is zero");
  const double power = 1.0 - epsilon;
  double acc = 0.0;
  for (auto c : occ.counts) {
    if (c > 0) acc += std::pow(static_cast<double>(c), power);
  }
  acc /= static_cast<double>(occ.counts.size());
  return 1.0 - std::pow(acc, 1.0 / power) / mu;
}

double robin_hood(const KOccurrence& occ) {
  double total = 0.0;
  for (auto c : occ.counts) total += static_cast<double>(c);
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroTotal, "k-occurrence total is zero");
  const double mu = total / static_cast<double>(occ.counts.size());
  double dev = 0.0;
  for (auto c : occ.counts) dev += std::abs(static_cast<double>(c) - mu);
  return dev / (2.0 * total);
}

double antihub_occurrence(const KOccurrence& occ) {
  if (occ.counts.empty()) return 0.0;
  const auto zeros = std::count(occ.counts.begin(), occ.counts.end(), std::int64_t{0});
  return static_cast<double>(zeros) / static_cast<double>(occ.counts.size());
}

double hub_occurrence(const KOccurrence& occ, double hub_size_factor) {
  const double slots = static_cast<double>(occ.n_queries) * static_cast<double>(occ.k);
  if (!(slots > 0.0)) return 0.0;
  const double threshold = static_cast<double>(occ.k) * hub_size_factor;
  double held = 0.0;
  for (auto c : occ.counts) {
    if (static_cast<double>(c) > threshold) held += static_cast<double>(c);
  }
  return held / slots;
}

RelevanceLabels pseudo_positive_probe(const EmbeddingSet& texts, double threshold) {
  if (!std::isfinite(threshold)) throw Error(ErrorCode::InvalidArgument, "probe threshold must be finite");
  const SimilarityMatrix s = cosine_similarity_matrix(texts, texts);
  const std::size_t n = texts.size();
  RelevanceLabels labels(n, n, LabelSource::PseudoPositive);
  for (std::size_t i = 0; i < n; ++i) {
    labels.set(i, i, true);
    for (std::size_t j = i + 1; j < n; ++j) {
      // cosine_similarity_matrix is exactly symmetric; read one triangle so
      // the mask is symmetric by construction.
      if (s.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) >= threshold) {
        labels.set(i, j, true);
        labels.set(j, i, true);
      }
    }
  }
  return labels;
}

std::vector<std::int64_t> count_histogram(const std::vector<std::int64_t>& counts) {
  std::int64_t max_count = 0;
  for (auto c : counts) max_count = std::max(max_count, c);
  std::vector<std::int64_t> hist(static_cast<std::size_t>(max_count) + 1, 0);
  for (auto c : counts) ++hist[static_cast<std::size_t>(c)];
  return hist;
}

namespace {

HubnessReport report_from(const KOccurrence& occ, const HubnessParams& params, std::size_t n_gallery) {
  HubnessReport r;
  r.params = params;
  r.n_queries = occ.n_queries;
  r.n_gallery = n_gallery;
  const auto skew = skewness(occ);
  r.skew = skew.value;
  r.skew_degenerate = skew.degenerate;
  const auto trunc = truncated_skewness(occ);
  r.trunc = trunc.value;
  r.trunc_degenerate = trunc.degenerate;
  r.atkinson = atkinson(occ, params.atkinson_epsilon);
  r.robin = robin_hood(occ);
  r.anti = antihub_occurrence(occ);
  r.hub = hub_occurrence(occ, params.hub_size_factor);
  r.histogram = count_histogram(occ.counts);
  r.occurrence = occ;
  return r;
}

}  // namespace

HubnessReport hubness_report(const SimilarityMatrix& s, const HubnessParams& params) {
  const KOccurrence occ = k_occurrence(s, params.k);
  const auto total = std::accumulate(occ.counts.begin(), occ.counts.end(), std::int64_t{0});
  if (total != static_cast<std::int64_t>(occ.n_queries * occ.k)) {
    throw Error(ErrorCode::InvalidArgument, "k-occurrence total differs from n * k");
  }
  return report_from(occ, params, s.cols());
}

HubnessReport hubness_report(const SimilarityMatrix& s, const HubnessParams& params, const RelevanceLabels& labels) {
  HubnessReport r = hubness_report(s, params);
  r.good_bad = good_bad_occurrence(s, params.k, labels);
  return r;
}

}  // namespace hublab
