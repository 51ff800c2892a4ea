#include "hublab/fine_grained.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hublab/error.hpp"
#include "hublab/parallel.hpp"

namespace hublab {

TokenSet TokenSet::uniform(Matrix tokens) {
  TokenSet t;
  const auto n = static_cast<std::size_t>(tokens.rows());
  t.tokens = std::move(tokens);
  t.weights.assign(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  return t;
}

void TokenSet::validate() const {
  if (tokens.rows() < 1 || tokens.cols() < 1) throw Error(ErrorCode::InvalidArgument, "token set is empty");
  if (weights.size() != size()) throw Error(ErrorCode::LengthMismatch, "token weight count differs from token count");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "token weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "token weights must sum to 1");
  if (!tokens.allFinite()) throw Error(ErrorCode::InvalidArgument, "token set contains non-finite entries");
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    if (!(tokens.row(r).norm() >= kZeroNormThreshold)) throw ZeroVectorError(static_cast<std::size_t>(r));
  }
}

double wti_similarity(const TokenSet& v, const TokenSet& t) {
  v.validate();
  t.validate();
  if (v.tokens.cols() != t.tokens.cols()) throw Error(ErrorCode::DimensionMismatch, "token dimensions differ");
  EmbeddingSet ve{v.tokens, Modality::Gallery, {}, {}};
  EmbeddingSet te{t.tokens, Modality::Query, {}, {}};
  const Matrix a = cosine_similarity_matrix(ve, te).scores;

  double visual_to_text = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) visual_to_text += v.weights[static_cast<std::size_t>(i)] * a.row(i).maxCoeff();
  double text_to_visual = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) text_to_visual += t.weights[static_cast<std::size_t>(j)] * a.col(j).maxCoeff();
  return 0.5 * (visual_to_text + text_to_visual);
}

std::size_t default_k_density(std::size_t n_tokens) {
  if (n_tokens <= 1) return 0;
  return std::min(std::max<std::size_t>(2, n_tokens / 4), n_tokens - 1);
}

DpcClustering dpc_knn_cluster(const TokenSet& tokens, std::size_t clusters, std::size_t k_density) {
  tokens.validate();
  const std::size_t n = tokens.size();
  if (clusters < 1 || clusters > n) {
    throw Error(ErrorCode::InvalidClusterCount, "cluster count " + std::to_string(clusters) + " not in [1, " +
                                                    std::to_string(n) + "]");
  }
  if (n > 1 && (k_density < 1 || k_density >= n)) {
    throw Error(ErrorCode::InvalidArgument, "k_density must lie in [1, N)");
  }

  Matrix dist(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (tokens.tokens.row(static_cast<Eigen::Index>(i)) - tokens.tokens.row(static_cast<Eigen::Index>(j))).norm();
    }
  }

  DpcClustering out;
  out.density.assign(n, 1.0);
  if (n > 1) {
    std::vector<double> sq(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t t = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        sq[t++] = d * d;
      }
      std::partial_sort(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(k_density), sq.end());
      double mean = 0.0;
      for (std::size_t q = 0; q < k_density; ++q) mean += sq[q];
      out.density[i] = std::exp(-mean / static_cast<double>(k_density));
    }
  }

  // Strict order on tokens: higher density first, lower index on ties.
  auto higher = [&](std::size_t a, std::size_t b) {
    return out.density[a] > out.density[b] || (out.density[a] == out.density[b] && a < b);
  };

  out.delta.assign(n, 0.0);
  out.parent.resize(n);
  std::size_t peak = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (higher(i, peak)) peak = i;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (i == peak) {
      out.parent[i] = i;
      out.delta[i] = n > 1 ? dist.row(row).maxCoeff() : 0.0;
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = peak;
    for (std::size_t j = 0; j < n; ++j) {
      if (!higher(j, i)) continue;
      const double d = dist(row, static_cast<Eigen::Index>(j));
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    out.parent[i] = best_j;
    out.delta[i] = best;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.density[a] * out.delta[a] > out.density[b] * out.delta[b];
  });
  std::vector<std::size_t> centers(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(clusters));
  if (std::find(centers.begin(), centers.end(), peak) == centers.end()) centers.back() = peak;
  std::sort(centers.begin(), centers.end());
  out.centers = centers;

  std::vector<std::ptrdiff_t> cluster_of(n, -1);
  for (std::size_t c = 0; c < centers.size(); ++c) cluster_of[centers[c]] = static_cast<std::ptrdiff_t>(c);
  // Parents are strictly higher in the order, so visiting tokens from the
  // highest down resolves every chain in one pass.
  std::vector<std::size_t> by_density(n);
  std::iota(by_density.begin(), by_density.end(), std::size_t{0});
  std::sort(by_density.begin(), by_density.end(), higher);
  for (std::size_t i : by_density) {
    if (cluster_of[i] < 0) cluster_of[i] = cluster_of[out.parent[i]];
  }
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.assignment[i] = static_cast<std::size_t>(cluster_of[i]);
  return out;
}

TokenSet dpc_knn_merge(const TokenSet& tokens, std::size_t clusters, std::size_t k_density) {
  const DpcClustering clustering = dpc_knn_cluster(tokens, clusters, k_density);
  const Eigen::Index d = tokens.tokens.cols();
  TokenSet merged;
  merged.tokens = Matrix::Zero(static_cast<Eigen::Index>(clusters), d);
  merged.weights.assign(clusters, 0.0);
  std::vector<std::size_t> members(clusters, 0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t c = clustering.assignment[i];
    merged.tokens.row(static_cast<Eigen::Index>(c)) += tokens.weights[i] * tokens.tokens.row(static_cast<Eigen::Index>(i));
    merged.weights[c] += tokens.weights[i];
    ++members[c];
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    if (members[c] == 1) {
      // Singleton clusters reproduce their token exactly.
      merged.tokens.row(row) = tokens.tokens.row(static_cast<Eigen::Index>(clustering.centers[c]));
    } else if (merged.weights[c] > 0.0) {
      merged.tokens.row(row) /= merged.weights[c];
    } else {
      // All members carry zero weight: fall back to the plain mean.
      merged.tokens.row(row).setZero();
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (clustering.assignment[i] == c) merged.tokens.row(row) += tokens.tokens.row(static_cast<Eigen::Index>(i));
      }
      merged.tokens.row(row) /= static_cast<double>(members[c]);
    }
  }
  return merged;
}

TokenSet dpc_knn_merge(const TokenSet& tokens, std::size_t clusters) {
  return dpc_knn_merge(tokens, clusters, default_k_density(tokens.size()));
}

SimilarityMatrix wti_similarity_matrix(const std::vector<TokenSet>& queries, const std::vector<TokenSet>& gallery,
                                       double temperature) {
  SimilarityMatrix s{Matrix(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(gallery.size())),
                     temperature};
  // Validate up front: the per-row workers must not throw.
  for (const auto& t : queries) t.validate();
  for (const auto& t : gallery) {
    t.validate();
    if (!queries.empty() && t.tokens.cols() != queries.front().tokens.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "token dimensions differ");
    }
  }
  for (const auto& t : queries) {
    if (!gallery.empty() && t.tokens.cols() != gallery.front().tokens.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "token dimensions differ");
    }
  }
  parallel_for(queries.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      s.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = wti_similarity(gallery[j], queries[i]);
    }
  });
  return s;
}

}  // namespace hublab
