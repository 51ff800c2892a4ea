#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hublab {

// Row-major so that one embedding is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Modality : std::uint8_t { Query = 0, Gallery = 1 };

constexpr Modality opposite(Modality m) noexcept {
  return m == Modality::Query ? Modality::Gallery : Modality::Query;
}

/// A batch of n d-dimensional vectors with a modality tag. `ids` and `labels`
/// are either empty or hold exactly n entries.
struct EmbeddingSet {
  Matrix data;
  Modality modality = Modality::Query;
  std::vector<std::string> ids;
  std::vector<std::int64_t> labels;

  std::size_t size() const noexcept { return static_cast<std::size_t>(data.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(data.cols()); }

  /// Throws InvalidArgument if empty, non-finite, or ids/labels have the wrong length.
  void validate() const;
};

/// n x m score grid. Losses exponentiate scores as S / temperature.
struct SimilarityMatrix {
  Matrix scores;
  double temperature = 1.0;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(scores.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(scores.cols()); }
};

inline constexpr double kZeroNormThreshold = 1e-12;

EmbeddingSet l2_normalize(const EmbeddingSet& e);

/// scores(i, j) = <q_i, g_j> / (|q_i| |g_j|), each dot product summed left to right.
SimilarityMatrix cosine_similarity_matrix(const EmbeddingSet& q, const EmbeddingSet& g,
                                          double temperature = 1.0);

/// Max-subtracted softmax of `logits / temperature`.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Log of the softmax above, computed as x - logsumexp(x).
std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0);

double log_sum_exp(std::span<const double> values);

/// Softmax over row `row` of `s`, using `s.temperature`.
std::vector<double> scaled_exp_softmax_row(const SimilarityMatrix& s, std::size_t row);

/// Row-wise softmax of the whole matrix.
Matrix softmax_rows(const SimilarityMatrix& s);

inline std::span<const double> row_span(const Matrix& m, Eigen::Index row) {
  return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace hublab
