#include "hublab/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hublab/error.hpp"
#include "hublab/parallel.hpp"

namespace hublab {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonSquareBatch: return "NonSquareBatch";
    case ErrorCode::NonSquarePlan: return "NonSquarePlan";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::NonPositiveKappa: return "NonPositiveKappa";
    case ErrorCode::InconsistentTargets: return "InconsistentTargets";
    case ErrorCode::MissingPart: return "MissingPart";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::ZeroMean: return "ZeroMean";
    case ErrorCode::ZeroTotal: return "ZeroTotal";
    case ErrorCode::InvalidClusterCount: return "InvalidClusterCount";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::NoRelevant: return "NoRelevant";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

void EmbeddingSet::validate() const {
  if (data.rows() < 1 || data.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument, "embedding set must have n >= 1 and d >= 1");
  }
  if (!data.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "embedding set contains non-finite entries");
  }
  if (!ids.empty() && ids.size() != size()) {
    throw Error(ErrorCode::LengthMismatch, "ids length does not match row count");
  }
  if (!labels.empty() && labels.size() != size()) {
    throw Error(ErrorCode::LengthMismatch, "labels length does not match row count");
  }
}

namespace {

double row_norm(const Matrix& m, Eigen::Index r) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < m.cols(); ++c) acc += m(r, c) * m(r, c);
  return std::sqrt(acc);
}

}  // namespace

EmbeddingSet l2_normalize(const EmbeddingSet& e) {
  EmbeddingSet out = e;
  for (Eigen::Index r = 0; r < e.data.rows(); ++r) {
    const double norm = row_norm(e.data, r);
    if (!(norm >= kZeroNormThreshold)) throw ZeroVectorError(static_cast<std::size_t>(r));
    out.data.row(r) = e.data.row(r) / norm;
  }
  return out;
}

SimilarityMatrix cosine_similarity_matrix(const EmbeddingSet& q, const EmbeddingSet& g,
                                          double temperature) {
  if (q.dim() != g.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "query d=" + std::to_string(q.dim()) + " vs gallery d=" + std::to_string(g.dim()));
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");

  std::vector<double> qn(q.size()), gn(g.size());
  for (Eigen::Index r = 0; r < q.data.rows(); ++r) {
    qn[r] = row_norm(q.data, r);
    if (!(qn[r] >= kZeroNormThreshold)) throw ZeroVectorError(static_cast<std::size_t>(r));
  }
  for (Eigen::Index r = 0; r < g.data.rows(); ++r) {
    gn[r] = row_norm(g.data, r);
    if (!(gn[r] >= kZeroNormThreshold)) throw ZeroVectorError(static_cast<std::size_t>(r));
  }

  SimilarityMatrix s{Matrix(q.data.rows(), g.data.rows()), temperature};
  const Eigen::Index d = q.data.cols();
  parallel_for(q.size(), [&](std::size_t i) {
    const double* qi = q.data.data() + static_cast<Eigen::Index>(i) * d;
    for (Eigen::Index j = 0; j < g.data.rows(); ++j) {
      const double* gj = g.data.data() + j * d;
      double dot = 0.0;
      for (Eigen::Index c = 0; c < d; ++c) dot += qi[c] * gj[c];
      s.scores(static_cast<Eigen::Index>(i), j) = dot / (qn[i] * gn[j]);
    }
  });
  return s;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v / temperature);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / temperature - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
  const double lse = log_sum_exp(scaled);
  for (double& v : scaled) v -= lse;
  return scaled;
}

std::vector<double> scaled_exp_softmax_row(const SimilarityMatrix& s, std::size_t row) {
  if (row >= s.rows()) throw Error(ErrorCode::InvalidArgument, "row index out of range");
  return softmax(row_span(s.scores, static_cast<Eigen::Index>(row)), s.temperature);
}

Matrix softmax_rows(const SimilarityMatrix& s) {
  Matrix p(s.scores.rows(), s.scores.cols());
  for (Eigen::Index i = 0; i < s.scores.rows(); ++i) {
    const auto row = softmax(row_span(s.scores, i), s.temperature);
    for (Eigen::Index j = 0; j < s.scores.cols(); ++j) p(i, j) = row[j];
  }
  return p;
}

}  // namespace hublab
