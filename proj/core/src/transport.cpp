#include "hublab/transport.hpp"

#include <cmath>

#include "hublab/error.hpp"

namespace hublab {

namespace {

double marginal_residual(const Matrix& q) {
  const double row_target = 1.0 / static_cast<double>(q.rows());
  const double col_target = 1.0 / static_cast<double>(q.cols());
  double residual = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) residual += std::abs(q.row(i).sum() - row_target);
  for (Eigen::Index j = 0; j < q.cols(); ++j) residual += std::abs(q.col(j).sum() - col_target);
  return residual;
}

}  // namespace

TransportPlan sinkhorn_plan(const SimilarityMatrix& s, const SinkhornOptions& options) {
  if (!(options.epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (!(options.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
  if (options.max_iter == 0) throw Error(ErrorCode::InvalidArgument, "max_iter must be positive");
  if (s.scores.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty similarity matrix");
  if (!s.scores.allFinite()) throw Error(ErrorCode::InvalidArgument, "similarity matrix has non-finite entries");

  const Eigen::Index n = s.scores.rows();
  const Eigen::Index m = s.scores.cols();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const Matrix kernel = s.scores / options.epsilon;

  // log Q_ij = f_i + kernel_ij + g_j. After each column update the column
  // marginals are exact, so the row sums carry the whole marginal error.
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  Vector row_lse(n);
  std::vector<double> buf(static_cast<std::size_t>(std::max(n, m)));

  auto update_row_lse = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) buf[j] = kernel(i, j) + g[j];
      row_lse[i] = log_sum_exp({buf.data(), static_cast<std::size_t>(m)});
    }
  };

  TransportPlan plan;
  plan.epsilon = options.epsilon;
  plan.converged = false;
  update_row_lse();
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) f[i] = log_a - row_lse[i];
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) buf[i] = kernel(i, j) + f[i];
      g[j] = log_b - log_sum_exp({buf.data(), static_cast<std::size_t>(n)});
    }
    update_row_lse();
    double residual = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) residual += std::abs(std::exp(f[i] + row_lse[i]) - std::exp(log_a));
    plan.residual_history.push_back(residual);
    plan.iterations_used = it;
    if (residual <= options.tol) {
      plan.converged = true;
      break;
    }
  }

  plan.q.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) plan.q(i, j) = std::exp(f[i] + kernel(i, j) + g[j]);
  }
  plan.residual = marginal_residual(plan.q);
  if (options.strict && !plan.converged && plan.residual > 100.0 * options.tol) throw NotConvergedError(plan.residual);
  return plan;
}

BlendedTarget blend_targets(const TransportPlan& plan, double beta) {
  if (plan.q.rows() != plan.q.cols()) throw Error(ErrorCode::NonSquarePlan, "target blending needs a square plan");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must lie in [0, 1]");
  const Eigen::Index b = plan.q.rows();
  BlendedTarget out{Matrix(b, b), beta};
  for (Eigen::Index i = 0; i < b; ++i) {
    const double row_sum = plan.q.row(i).sum();
    for (Eigen::Index j = 0; j < b; ++j) {
      const double stochastic = row_sum > 0.0 ? plan.q(i, j) / row_sum : 1.0 / static_cast<double>(b);
      out.q_blend(i, j) = beta * stochastic + (i == j ? 1.0 - beta : 0.0);
    }
  }
  return out;
}

LossBundle loss_opt(const SimilarityMatrix& s, const Matrix& target) {
  if (target.rows() != s.scores.rows() || target.cols() != s.scores.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "target and similarity matrix differ in shape");
  }
  const Eigen::Index n = s.scores.rows();
  const Eigen::Index m = s.scores.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double tau = s.temperature;
  LossBundle out;
  out.grad.resize(n, m);
  out.per_sample.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto logp = log_softmax(row_span(s.scores, i), tau);
    const double mass = target.row(i).sum();
    double row_loss = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (target(i, j) != 0.0) row_loss -= target(i, j) * logp[j];
      out.grad(i, j) = -inv_n / tau * (target(i, j) - std::exp(logp[j]) * mass);
    }
    out.per_sample[static_cast<std::size_t>(i)] = row_loss;
    out.value += row_loss;
  }
  out.value *= inv_n;
  return out;
}

}  // namespace hublab
