#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "hublab/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hublab;

namespace {

SimilarityMatrix sim(const Matrix& m, double tau = 1.0) { return {m, tau}; }

std::vector<double> random_weights(std::size_t n, std::uint64_t seed) {
  const Matrix r = oracle::random_matrix(1, static_cast<Eigen::Index>(n), seed, 0.2, 2.0);
  return {r.data(), r.data() + n};
}

double wti_value(const Matrix& s, const std::vector<double>& w, double tau) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) v -= w[static_cast<std::size_t>(i)] * std::log(oracle::softmax_row(s, i, tau)[static_cast<std::size_t>(i)]);
  return v / static_cast<double>(s.rows());
}

// -sum_t H_t log P_t with P the softmax over the listed columns.
double nbi_value(const Matrix& s, Eigen::Index row, const std::vector<std::size_t>& cols, const std::vector<double>& h,
                 double tau) {
  double z = 0.0;
  for (std::size_t c : cols) z += std::exp(s(row, static_cast<Eigen::Index>(c)) / tau);
  double v = 0.0;
  for (std::size_t t = 0; t < cols.size(); ++t) v -= h[t] * std::log(std::exp(s(row, static_cast<Eigen::Index>(cols[t])) / tau) / z);
  return v;
}

double kl_value(const Matrix& low, const Matrix& high) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < low.rows(); ++i) {
    const auto p = oracle::softmax_row(high, i);
    const auto q = oracle::softmax_row(low, i);
    for (std::size_t j = 0; j < p.size(); ++j) v += p[j] * std::log(p[j] / q[j]);
  }
  return v / static_cast<double>(low.rows());
}

}  // namespace

// ---- Wti ----

TEST(LossWti, SaturatedPositives) {
  Matrix s(2, 2);
  s << 10, -10, -10, 10;
  const std::vector<double> w{1, 1};
  const auto l = loss_wti(sim(s), w);
  EXPECT_NEAR(l.value, std::log1p(std::exp(-20.0)), 1e-15);
  EXPECT_NEAR(l.value, 2.06e-9, 1e-11);
  EXPECT_LT(l.grad.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LossWti, EqualRowsGiveLogB) {
  const Matrix s = Matrix::Constant(5, 5, 0.3);
  const std::vector<double> w(5, 1.0);
  EXPECT_NEAR(loss_wti(sim(s), w).value, std::log(5.0), 1e-15);
}

TEST(LossWti, UnitWeightsReduceToInfoNce) {
  const Matrix s = oracle::random_matrix(6, 6, 1);
  const std::vector<double> w(6, 1.0);
  EXPECT_NEAR(loss_wti(sim(s, 0.5), w).value, wti_value(s, w, 0.5), 1e-13);
}

TEST(LossWti, FiniteDifferences) {
  const Matrix s = oracle::random_matrix(6, 6, 2);
  const auto w = random_weights(6, 3);
  for (double tau : {1.0, 0.2}) {
    const auto l = loss_wti(sim(s, tau), w);
    EXPECT_NEAR(l.value, wti_value(s, w, tau), 1e-12);
    const Matrix fd = oracle::fd_gradient([&](const Matrix& x) { return loss_wti(sim(x, tau), w).value; }, s);
    EXPECT_LT(oracle::max_rel_error(l.grad, fd), 1e-5) << "tau " << tau;
  }
}

TEST(LossWti, Errors) {
  EXPECT_CODE(loss_wti(sim(Matrix::Zero(2, 3)), std::vector<double>{1, 1}), ErrorCode::NonSquareBatch);
  EXPECT_CODE(loss_wti(sim(Matrix::Zero(2, 2)), std::vector<double>{1}), ErrorCode::LengthMismatch);
}

// ---- de-centrality ----

TEST(Decentral, IdentityAndCancellation) {
  const Matrix s = oracle::random_matrix(3, 4, 4);
  EXPECT_TRUE(decentral_similarity(sim(s), {{0, 0, 0, 0}, CentralityKind::Cross}).scores == s);
  const auto z = decentral_similarity(sim(Matrix::Constant(3, 4, 0.5)), {{0.5, 0.5, 0.5, 0.5}, CentralityKind::Cross});
  EXPECT_EQ(z.scores.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Decentral, Reconstructs) {
  const Matrix s = oracle::random_matrix(5, 6, 5);
  const Matrix c = oracle::random_matrix(1, 6, 6);
  CentralityVector cv{{c.data(), c.data() + 6}, CentralityKind::Cross};
  const auto t = decentral_similarity(sim(s), cv);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(t.scores(i, j) + c(0, j), s(i, j), 1e-15);
  EXPECT_CODE(decentral_similarity(sim(s), {{0.1}, CentralityKind::Cross}), ErrorCode::LengthMismatch);
}

// ---- neighbor selection and targets ----

TEST(Neighbors, Ordering) {
  Matrix s(1, 3);
  s << 0.9, 0.1, 0.5;
  const auto ns = select_neighbors(sim(s), 0, 1);
  EXPECT_EQ(ns.members, (std::vector<std::size_t>{2}));
  EXPECT_EQ(ns.extended(), (std::vector<std::size_t>{0, 2}));
}

TEST(Neighbors, ClampAndTies) {
  Matrix s = Matrix::Constant(1, 5, 0.2);
  const auto ns = select_neighbors(sim(s), 0, 10, std::size_t{3});
  EXPECT_EQ(ns.members, (std::vector<std::size_t>{0, 1, 2, 4}));
}

TEST(Neighbors, FullSortOracle) {
  const Matrix s = oracle::random_matrix(1, 50, 7);
  const auto ns = select_neighbors(sim(s), 0, 10, std::size_t{17});
  std::vector<std::size_t> all(50);
  std::iota(all.begin(), all.end(), std::size_t{0});
  all.erase(all.begin() + 17);
  std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
    return s(0, static_cast<Eigen::Index>(a)) > s(0, static_cast<Eigen::Index>(b));
  });
  all.resize(10);
  EXPECT_EQ(ns.members, all);
}

TEST(Neighbors, ConstantCentralityKeepsSelection) {
  const Matrix s = oracle::random_matrix(4, 12, 8);
  const auto shifted = decentral_similarity(sim(s), {std::vector<double>(12, 0.37), CentralityKind::Cross});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(select_neighbors(sim(s), i, 5).members, select_neighbors(shifted, i, 5).members);
  }
}

TEST(Targets, SingletonAndTwoEqual) {
  NeighborSet one{0, 0, {1}};
  EXPECT_EQ(neighbor_targets(sim(Matrix::Zero(1, 2)), one), (std::vector<double>{1.0, 1.0}));
  NeighborSet two{0, 0, {1, 2}};
  EXPECT_EQ(neighbor_targets(sim(Matrix::Zero(1, 3)), two), (std::vector<double>{1.0, 0.5, 0.5}));
}

TEST(Targets, ScalarSoftmax) {
  Matrix st(1, 4);
  st << 9.0, 1.0, 0.0, -1.0;
  const auto h = neighbor_targets(sim(st), {0, 0, {1, 2, 3}});
  const double z = std::exp(1.0) + 1.0 + std::exp(-1.0);
  EXPECT_EQ(h[0], 1.0);
  EXPECT_NEAR(h[1], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(h[2], 1.0 / z, 1e-15);
  EXPECT_NEAR(h[3], std::exp(-1.0) / z, 1e-15);
}

// ---- Nbi ----

TEST(LossNbi, SymmetricHandArithmetic) {
  const NeighborSet ns{0, 0, {1}};
  const std::vector<double> h{1.0, 1.0};
  const auto exact = loss_nbi(sim(Matrix::Zero(1, 2)), h, ns, GradMode::Exact);
  EXPECT_NEAR(exact.grad(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(exact.grad(0, 1), 0.0, 1e-15);
  const auto paper = loss_nbi(sim(Matrix::Zero(1, 2)), h, ns, GradMode::Paper);
  EXPECT_NEAR(paper.grad(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(paper.grad(0, 1), -0.5, 1e-15);
}

TEST(LossNbi, ConcentratedTargetsGiveCrossEntropy) {
  Matrix s = oracle::random_matrix(1, 5, 9);
  Matrix st = s;
  for (Eigen::Index j = 1; j < 5; ++j) st(0, j) = -1e6;
  st(0, 1) = 0.0;
  const NeighborSet ns{0, 0, {1, 2, 3, 4}};
  const auto h = neighbor_targets(sim(st), ns);
  const auto l = loss_nbi(sim(s), h, ns);
  const std::vector<std::size_t> cols{0, 1, 2, 3, 4};
  EXPECT_NEAR(l.value, nbi_value(s, 0, cols, {1, 0, 0, 0, 0}, 1.0) + nbi_value(s, 0, cols, {0, 1, 0, 0, 0}, 1.0),
              1e-12);
}

TEST(LossNbi, ExactMatchesFiniteDifferencesPaperDiffersByMass) {
  const Matrix s = oracle::random_matrix(3, 12, 10);
  const Matrix st = oracle::random_matrix(3, 12, 11);
  for (double tau : {1.0, 0.3}) {
    const auto ns = select_neighbors(sim(s, tau), 1, 8);
    const auto h = neighbor_targets(sim(st, tau), ns);
    const auto exact = loss_nbi(sim(s, tau), h, ns, GradMode::Exact);
    EXPECT_NEAR(exact.value, nbi_value(s, 1, ns.extended(), h, tau), 1e-12);
    const Matrix fd = oracle::fd_gradient([&](const Matrix& x) { return loss_nbi(sim(x, tau), h, ns).value; }, s);
    EXPECT_LT(oracle::max_rel_error(exact.grad, fd), 1e-6);

    const auto paper = loss_nbi(sim(s, tau), h, ns, GradMode::Paper);
    const double mass = std::accumulate(h.begin(), h.end(), 0.0);
    EXPECT_NEAR(mass, 2.0, 1e-12);
    const auto cols = ns.extended();
    double z = 0.0;
    for (std::size_t c : cols) z += std::exp(s(1, static_cast<Eigen::Index>(c)) / tau);
    for (std::size_t t = 0; t < cols.size(); ++t) {
      const auto c = static_cast<Eigen::Index>(cols[t]);
      const double p = std::exp(s(1, c) / tau) / z;
      EXPECT_NEAR(paper.grad(1, c), exact.grad(1, c) - p * (mass - 1.0) / tau, 1e-12);
      EXPECT_NEAR(paper.grad(1, c), (p - h[t]) / tau, 1e-12);
    }
  }
}

TEST(LossNbi, ZeroOutsideExtendedSet) {
  const Matrix s = oracle::random_matrix(4, 10, 12);
  const auto ns = select_neighbors(sim(s), 2, 3);
  const auto l = loss_nbi(sim(s), neighbor_targets(sim(s), ns), ns);
  const auto cols = ns.extended();
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 10; ++j) {
      const bool inside = i == 2 && std::find(cols.begin(), cols.end(), static_cast<std::size_t>(j)) != cols.end();
      if (!inside) EXPECT_EQ(l.grad(i, j), 0.0);
    }
}

TEST(LossNbi, StationaryAtNormalizedTargets) {
  // Choose scores so that softmax over N+ equals H / sum(H).
  const std::vector<double> h{1.0, 0.6, 0.3, 0.1};
  Matrix s(1, 4);
  for (Eigen::Index j = 0; j < 4; ++j) s(0, j) = std::log(h[static_cast<std::size_t>(j)] / 2.0);
  const NeighborSet ns{0, 0, {1, 2, 3}};
  const auto l = loss_nbi(sim(s), h, ns);
  EXPECT_LT(l.grad.cwiseAbs().maxCoeff(), 1e-15);
  const Matrix fd = oracle::fd_gradient([&](const Matrix& x) { return loss_nbi(sim(x), h, ns).value; }, s);
  EXPECT_LT((fd - l.grad).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LossNbi, InconsistentTargets) {
  const NeighborSet ns{0, 0, {1, 2}};
  EXPECT_CODE(loss_nbi(sim(Matrix::Zero(1, 3)), std::vector<double>{1.0, 1.0}, ns), ErrorCode::InconsistentTargets);
}

TEST(LossNbi, BatchIsMeanOfAnchors) {
  const Matrix s = oracle::random_matrix(5, 5, 13);
  const Matrix st = oracle::random_matrix(5, 5, 14);
  const auto batch = loss_nbi_batch(sim(s), sim(st), 3);
  double total = 0.0;
  Matrix grad = Matrix::Zero(5, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto ns = select_neighbors(sim(s), i, 3);
    const auto l = loss_nbi(sim(s), neighbor_targets(sim(st), ns), ns);
    total += l.value;
    grad += l.grad;
  }
  EXPECT_NEAR(batch.value, total / 5.0, 1e-14);
  EXPECT_LT((batch.grad - grad / 5.0).cwiseAbs().maxCoeff(), 1e-15);
}

// ---- KL ----

TEST(LossKl, IdenticalIsZero) {
  const Matrix s = oracle::random_matrix(4, 4, 15);
  const auto l = loss_kl(sim(s), sim(s));
  EXPECT_NEAR(l.value, 0.0, 1e-12);
  EXPECT_LT(l.grad.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(l.grad_high.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LossKl, OneHotVersusUniform) {
  Matrix high = Matrix::Zero(1, 4);
  high(0, 0) = 20.0;
  const auto l = loss_kl(sim(Matrix::Zero(1, 4)), sim(high));
  EXPECT_NEAR(l.value, std::log(4.0), 1e-6);
}

TEST(LossKl, FiniteDifferencesBothSides) {
  const Matrix low = oracle::random_matrix(5, 5, 16);
  const Matrix high = oracle::random_matrix(5, 5, 17);
  for (bool symmetric : {false, true}) {
    const auto l = loss_kl(sim(low), sim(high), symmetric);
    const double expect = kl_value(low, high) + (symmetric ? kl_value(high, low) : 0.0);
    EXPECT_NEAR(l.value, expect, 1e-12);
    const Matrix fd_low = oracle::fd_gradient([&](const Matrix& x) { return loss_kl(sim(x), sim(high), symmetric).value; }, low);
    const Matrix fd_high = oracle::fd_gradient([&](const Matrix& x) { return loss_kl(sim(low), sim(x), symmetric).value; }, high);
    EXPECT_LT(oracle::max_rel_error(l.grad, fd_low), 1e-6);
    EXPECT_LT(oracle::max_rel_error(l.grad_high, fd_high), 1e-6);
  }
}

TEST(LossKl, ShapeMismatch) {
  EXPECT_CODE(loss_kl(sim(Matrix::Zero(2, 3)), sim(Matrix::Zero(3, 2))), ErrorCode::ShapeMismatch);
}

// ---- total ----

TEST(TotalLoss, ZeroAndSinglePart) {
  DirectionLosses f{zero_loss(3, 3), zero_loss(3, 3), zero_loss(3, 3), zero_loss(3, 3)};
  DirectionLosses b = f;
  EXPECT_EQ(total_loss(f, b).value, 0.0);
  f.opt->value = 1.7;
  EXPECT_DOUBLE_EQ(total_loss(f, b).value, 0.85);
}

TEST(TotalLoss, LinearRecombination) {
  const Matrix s = oracle::random_matrix(4, 4, 18);
  const Matrix st = oracle::random_matrix(4, 4, 19);
  const auto w = random_weights(4, 20);
  DirectionLosses f{loss_wti(sim(s), w), loss_nbi_batch(sim(s), sim(st), 2), zero_loss(4, 4), loss_kl(sim(s), sim(st))};
  const Matrix t = s.transpose();
  DirectionLosses b{loss_wti(sim(t), w), loss_nbi_batch(sim(t), sim(st.transpose()), 2), loss_wti(sim(t), w),
                    loss_kl(sim(t), sim(st.transpose()))};
  const auto total = total_loss(f, b);
  const double v = 0.5 * (f.wti->value + f.nbi->value + f.opt->value + f.kl->value + b.wti->value + b.nbi->value +
                          b.opt->value + b.kl->value);
  EXPECT_NEAR(total.value, v, 1e-12);
  const Matrix g = 0.5 * (f.wti->grad + f.nbi->grad + f.opt->grad + f.kl->grad +
                          (b.wti->grad + b.nbi->grad + b.opt->grad + b.kl->grad).transpose());
  EXPECT_LT((total.grad - g).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix gh = 0.5 * (f.kl->grad_high + b.kl->grad_high.transpose());
  EXPECT_LT((total.grad_high - gh).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TotalLoss, Errors) {
  DirectionLosses f{zero_loss(2, 2), zero_loss(2, 2), zero_loss(2, 2), std::nullopt};
  DirectionLosses b{zero_loss(2, 2), zero_loss(2, 2), zero_loss(2, 2), zero_loss(2, 2)};
  EXPECT_CODE(total_loss(f, b), ErrorCode::MissingPart);
  f.kl = zero_loss(2, 2);
  b.wti = zero_loss(3, 2);
  EXPECT_CODE(total_loss(f, b), ErrorCode::ShapeMismatch);
}

TEST(LossShift, RowConstantLeavesValuesUnchanged) {
  const Matrix s = oracle::random_matrix(6, 6, 21);
  Matrix shifted = s;
  for (Eigen::Index i = 0; i < 6; ++i) shifted.row(i).array() += 3.0 * static_cast<double>(i) - 7.0;
  const auto w = random_weights(6, 22);
  EXPECT_NEAR(loss_wti(sim(s), w).value, loss_wti(sim(shifted), w).value, 1e-9);
  const Matrix st = oracle::random_matrix(6, 6, 23);
  EXPECT_NEAR(loss_nbi_batch(sim(s), sim(st), 3).value, loss_nbi_batch(sim(shifted), sim(st), 3).value, 1e-9);
  EXPECT_NEAR(loss_kl(sim(s), sim(st)).value, loss_kl(sim(shifted), sim(st)).value, 1e-9);
}
