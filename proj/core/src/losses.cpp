#include "hublab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hublab/error.hpp"

namespace hublab {

LossBundle zero_loss(std::size_t rows, std::size_t cols) {
  LossBundle out;
  out.grad = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return out;
}

LossBundle loss_wti(const SimilarityMatrix& s, std::span<const double> weights) {
  const auto b = s.scores.rows();
  if (b != s.scores.cols()) throw Error(ErrorCode::NonSquareBatch, "loss_wti needs a square batch");
  if (static_cast<Eigen::Index>(weights.size()) != b) {
    throw Error(ErrorCode::LengthMismatch, "weight vector length differs from batch size");
  }
  const double tau = s.temperature;
  const double inv_b = 1.0 / static_cast<double>(b);

  LossBundle out;
  out.grad.resize(b, b);
  out.per_sample.resize(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto logp = log_softmax(row_span(s.scores, i), tau);
    const double wi = weights[static_cast<std::size_t>(i)];
    out.per_sample[static_cast<std::size_t>(i)] = -wi * logp[static_cast<std::size_t>(i)];
    out.value += out.per_sample[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < b; ++j) {
      const double p = std::exp(logp[static_cast<std::size_t>(j)]);
      out.grad(i, j) = wi * inv_b / tau * (p - (i == j ? 1.0 : 0.0));
    }
  }
  out.value *= inv_b;
  return out;
}

SimilarityMatrix decentral_similarity(const SimilarityMatrix& s, const CentralityVector& gallery_centrality) {
  if (gallery_centrality.kind != CentralityKind::Cross) {
    throw Error(ErrorCode::InvalidArgument, "de-centrality similarity needs cross-modal centrality");
  }
  if (gallery_centrality.values.size() != s.cols()) {
    throw Error(ErrorCode::LengthMismatch, "centrality length differs from gallery count");
  }
  SimilarityMatrix out = s;
  for (Eigen::Index j = 0; j < out.scores.cols(); ++j) {
    out.scores.col(j).array() -= gallery_centrality.values[static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<std::size_t> NeighborSet::extended() const {
  std::vector<std::size_t> all;
  all.reserve(members.size() + 1);
  all.push_back(ground_truth);
  all.insert(all.end(), members.begin(), members.end());
  return all;
}

NeighborSet select_neighbors(const SimilarityMatrix& s, std::size_t anchor, std::size_t k,
                             std::optional<std::size_t> ground_truth) {
  const std::size_t m = s.cols();
  if (anchor >= s.rows()) throw Error(ErrorCode::InvalidArgument, "anchor out of range");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (m < 2) throw Error(ErrorCode::InvalidArgument, "neighbor selection needs m >= 2");
  NeighborSet ns;
  ns.anchor = anchor;
  ns.ground_truth = ground_truth.value_or(anchor);
  if (ns.ground_truth >= m) throw Error(ErrorCode::InvalidArgument, "ground truth out of range");

  std::vector<std::size_t> candidates;
  candidates.reserve(m - 1);
  for (std::size_t j = 0; j < m; ++j) {
    if (j != ns.ground_truth) candidates.push_back(j);
  }
  const std::size_t take = std::min(k, m - 1);
  const auto row = static_cast<Eigen::Index>(anchor);
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = s.scores(row, static_cast<Eigen::Index>(a));
                      const double sb = s.scores(row, static_cast<Eigen::Index>(b));
                      return sa > sb || (sa == sb && a < b);
                    });
  candidates.resize(take);
  ns.members = std::move(candidates);
  return ns;
}

std::vector<double> neighbor_targets(const SimilarityMatrix& s_tilde, const NeighborSet& ns) {
  if (ns.members.empty()) throw Error(ErrorCode::InvalidArgument, "neighbor set has no members");
  std::vector<double> logits(ns.members.size());
  const auto row = static_cast<Eigen::Index>(ns.anchor);
  for (std::size_t t = 0; t < ns.members.size(); ++t) {
    logits[t] = s_tilde.scores(row, static_cast<Eigen::Index>(ns.members[t]));
  }
  const auto member_targets = softmax(logits, s_tilde.temperature);
  std::vector<double> h;
  h.reserve(member_targets.size() + 1);
  h.push_back(1.0);
  h.insert(h.end(), member_targets.begin(), member_targets.end());
  return h;
}

namespace {

// Accumulates scale * dL/dS for one anchor into `grad` and returns the loss.
double nbi_anchor(const SimilarityMatrix& s, std::span<const double> targets, const NeighborSet& ns, GradMode mode,
                  double scale, Matrix& grad) {
  const auto cols = ns.extended();
  if (targets.size() != cols.size()) {
    throw Error(ErrorCode::InconsistentTargets, "target length " + std::to_string(targets.size()) +
                                                    " != |N+| " + std::to_string(cols.size()));
  }
  const auto row = static_cast<Eigen::Index>(ns.anchor);
  std::vector<double> logits(cols.size());
  for (std::size_t t = 0; t < cols.size(); ++t) logits[t] = s.scores(row, static_cast<Eigen::Index>(cols[t]));
  const double tau = s.temperature;
  const auto logp = log_softmax(logits, tau);
  const double h_total = std::accumulate(targets.begin(), targets.end(), 0.0);
  const double mass = mode == GradMode::Exact ? h_total : 1.0;

  double value = 0.0;
  for (std::size_t t = 0; t < cols.size(); ++t) {
    value -= targets[t] * logp[t];
    const double p = std::exp(logp[t]);
    grad(row, static_cast<Eigen::Index>(cols[t])) += scale * (p * mass - targets[t]) / tau;
  }
  return value;
}

}  // namespace

LossBundle loss_nbi(const SimilarityMatrix& s, std::span<const double> targets, const NeighborSet& ns, GradMode mode) {
  LossBundle out = zero_loss(s.rows(), s.cols());
  out.value = nbi_anchor(s, targets, ns, mode, 1.0, out.grad);
  out.per_sample.assign(s.rows(), 0.0);
  out.per_sample[ns.anchor] = out.value;
  return out;
}

NeighborPlan plan_neighbors(const SimilarityMatrix& s, const SimilarityMatrix& s_tilde, std::size_t k) {
  if (s.scores.rows() != s_tilde.scores.rows() || s.scores.cols() != s_tilde.scores.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "similarity and de-centrality similarity differ in shape");
  }
  if (s.cols() < s.rows()) throw Error(ErrorCode::InvalidArgument, "batch neighbor loss needs m >= n");
  NeighborPlan plan;
  plan.sets.reserve(s.rows());
  plan.targets.reserve(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    plan.sets.push_back(select_neighbors(s, i, k));
    plan.targets.push_back(neighbor_targets(s_tilde, plan.sets.back()));
  }
  return plan;
}

LossBundle loss_nbi_planned(const SimilarityMatrix& s, const NeighborPlan& plan, GradMode mode) {
  const std::size_t n = plan.sets.size();
  if (plan.targets.size() != n) throw Error(ErrorCode::InconsistentTargets, "one target vector per anchor required");
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "neighbor plan is empty");
  const double scale = 1.0 / static_cast<double>(n);
  LossBundle out = zero_loss(s.rows(), s.cols());
  out.per_sample.assign(s.rows(), 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const double v = nbi_anchor(s, plan.targets[a], plan.sets[a], mode, scale, out.grad);
    out.per_sample[plan.sets[a].anchor] += v;
    out.value += v;
  }
  out.value *= scale;
  return out;
}

LossBundle loss_nbi_batch(const SimilarityMatrix& s, const SimilarityMatrix& s_tilde, std::size_t k, GradMode mode) {
  return loss_nbi_planned(s, plan_neighbors(s, s_tilde, k), mode);
}

namespace {

// Adds (1/n) KL(p || q) for row-softmaxes of `from` (p) and `to` (q) and
// accumulates its gradients into grad_from / grad_to.
double kl_rows(const SimilarityMatrix& from, const SimilarityMatrix& to, Matrix& grad_from, Matrix& grad_to) {
  const Eigen::Index n = from.scores.rows();
  const Eigen::Index m = from.scores.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto logp = log_softmax(row_span(from.scores, i), from.temperature);
    const auto logq = log_softmax(row_span(to.scores, i), to.temperature);
    double kl = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) kl += std::exp(logp[j]) * (logp[j] - logq[j]);
    total += kl;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double p = std::exp(logp[j]);
      const double q = std::exp(logq[j]);
      grad_from(i, j) += inv_n / from.temperature * p * ((logp[j] - logq[j]) - kl);
      grad_to(i, j) += inv_n / to.temperature * (q - p);
    }
  }
  return total * inv_n;
}

}  // namespace

LossBundle loss_kl(const SimilarityMatrix& low, const SimilarityMatrix& high, bool symmetric) {
  if (low.scores.rows() != high.scores.rows() || low.scores.cols() != high.scores.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "low and high similarity matrices differ in shape");
  }
  LossBundle out = zero_loss(low.rows(), low.cols());
  out.grad_high = Matrix::Zero(high.scores.rows(), high.scores.cols());
  out.value = kl_rows(high, low, out.grad_high, out.grad);
  if (symmetric) out.value += kl_rows(low, high, out.grad, out.grad_high);
  return out;
}

LossBundle total_loss(const DirectionLosses& forward, const DirectionLosses& backward) {
  const std::optional<LossBundle>* fwd[] = {&forward.wti, &forward.nbi, &forward.opt, &forward.kl};
  const std::optional<LossBundle>* bwd[] = {&backward.wti, &backward.nbi, &backward.opt, &backward.kl};
  for (auto* part : fwd) {
    if (!part->has_value()) throw Error(ErrorCode::MissingPart, "forward direction is missing a loss term");
  }
  for (auto* part : bwd) {
    if (!part->has_value()) throw Error(ErrorCode::MissingPart, "backward direction is missing a loss term");
  }
  const Eigen::Index n = (*fwd[0])->grad.rows();
  const Eigen::Index m = (*fwd[0])->grad.cols();

  LossBundle out;
  out.grad = Matrix::Zero(n, m);
  out.grad_high = Matrix::Zero(n, m);
  for (auto* part : fwd) {
    const LossBundle& b = **part;
    if (b.grad.rows() != n || b.grad.cols() != m) throw Error(ErrorCode::ShapeMismatch, "forward term shape differs");
    out.value += 0.5 * b.value;
    out.grad += 0.5 * b.grad;
    if (b.grad_high.size() > 0) out.grad_high += 0.5 * b.grad_high;
  }
  for (auto* part : bwd) {
    const LossBundle& b = **part;
    if (b.grad.rows() != m || b.grad.cols() != n) throw Error(ErrorCode::ShapeMismatch, "backward term shape differs");
    out.value += 0.5 * b.value;
    out.grad += 0.5 * b.grad.transpose();
    if (b.grad_high.size() > 0) out.grad_high += 0.5 * b.grad_high.transpose();
  }
  return out;
}

}  // namespace hublab
