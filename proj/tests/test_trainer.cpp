#include <cmath>

#include <gtest/gtest.h>

#include "hublab/trainer.hpp"
#include "test_util.hpp"

using namespace hublab;

namespace {

PairedDataset toy(std::size_t n, std::size_t d, double noise, std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_pairs = n;
  c.dim = d;
  c.noise = noise;
  c.seed = seed;
  return synth_generate(c).data;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 3;
  c.k_neighbors = 4;
  c.bank_capacity = 32;
  return c;
}

void expect_same_report(const HubnessReport& a, const HubnessReport& b) {
  EXPECT_EQ(a.occurrence.counts, b.occurrence.counts);
  EXPECT_EQ(a.histogram, b.histogram);
  EXPECT_EQ(a.skew, b.skew);
  EXPECT_EQ(a.trunc, b.trunc);
  EXPECT_EQ(a.atkinson, b.atkinson);
  EXPECT_EQ(a.robin, b.robin);
  EXPECT_EQ(a.anti, b.anti);
  EXPECT_EQ(a.hub, b.hub);
}

}  // namespace

TEST(Train, ZeroLearningRateFreezesModel) {
  const auto data = toy(40, 16, 0.8);
  for (ModelKind kind : {ModelKind::EmbeddingTable, ModelKind::LinearProjection}) {
    TrainConfig c = tiny_config();
    c.learning_rate = 0.0;
    c.model = kind;
    const auto r = train(c, data, {5, 2.0, 0.5});
    EXPECT_LT((r.queries.data - l2_normalize(data.queries).data).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((r.galleries.data - l2_normalize(data.galleries).data).cwiseAbs().maxCoeff(), 1e-15);
    // more steps at lr 0 must not move anything, not even by rounding
    c.epochs = 1;
    const auto once = train(c, data, {5, 2.0, 0.5});
    EXPECT_EQ(r.queries.data, once.queries.data);
    EXPECT_EQ(r.galleries.data, once.galleries.data);
    expect_same_report(r.before, r.after);
    EXPECT_EQ(r.retrieval_before.rsum, r.retrieval_after.rsum);
    EXPECT_EQ(r.loss_curve.size(), 15u);
  }
}

TEST(Train, WtiOnlyToySeparates) {
  const auto data = toy(8, 8, 2.0);
  TrainConfig c = tiny_config();
  c.losses = {true, false, false, false};
  c.epochs = 200;
  c.learning_rate = 1e-2;
  const auto r = train(c, data, {1, 2.0, 0.5});
  EXPECT_LT(r.retrieval_before.r_at.at(1), 100.0);
  EXPECT_EQ(r.retrieval_after.r_at.at(1), 100.0);
  EXPECT_EQ(r.loss_curve.size(), 200u);
  EXPECT_LT(r.loss_curve.back().loss, r.loss_curve.front().loss);
}

TEST(Train, DeterministicAndUnitNorm) {
  const auto data = toy(40, 16, 0.8);
  TrainConfig c = tiny_config();
  const auto a = train(c, data, {5, 2.0, 0.5});
  const auto b = train(c, data, {5, 2.0, 0.5});
  ASSERT_EQ(a.loss_curve.size(), b.loss_curve.size());
  for (std::size_t t = 0; t < a.loss_curve.size(); ++t) {
    EXPECT_EQ(a.loss_curve[t].loss, b.loss_curve[t].loss);
    EXPECT_TRUE(std::isfinite(a.loss_curve[t].loss));
  }
  EXPECT_EQ(a.queries.data, b.queries.data);
  expect_same_report(a.after, b.after);
  for (Eigen::Index r = 0; r < a.queries.data.rows(); ++r) {
    EXPECT_NEAR(a.queries.data.row(r).norm(), 1.0, 1e-12);
    EXPECT_NEAR(a.galleries.data.row(r).norm(), 1.0, 1e-12);
  }
  c.seed = 9;
  EXPECT_NE(train(c, data, {5, 2.0, 0.5}).queries.data, a.queries.data);
}

TEST(Train, TrailingSingletonBatchSkipped) {
  const auto data = toy(17, 8, 0.8);
  TrainConfig c = tiny_config();
  c.epochs = 2;
  const auto r = train(c, data, {3, 2.0, 0.5});
  EXPECT_EQ(r.loss_curve.size(), 4u);
}

TEST(Train, ConfigErrors) {
  const auto data = toy(16, 8, 0.8);
  TrainConfig c = tiny_config();
  c.kappa = 0.0;
  EXPECT_CODE(train(c, data), ErrorCode::NonPositiveKappa);
  c = tiny_config();
  c.batch_size = 1;
  EXPECT_CODE(train(c, data), ErrorCode::InvalidArgument);
  c = tiny_config();
  c.beta = 1.5;
  EXPECT_CODE(train(c, data), ErrorCode::InvalidArgument);
  EXPECT_CODE(grad_check(tiny_config(), data, 1e-2), ErrorCode::InvalidArgument);
}

TEST(GradCheck, EveryToggleCombination) {
  const auto data = toy(8, 8, 0.8);
  for (ModelKind kind : {ModelKind::EmbeddingTable, ModelKind::LinearProjection}) {
    for (int mask = 1; mask < 16; ++mask) {
      TrainConfig c = tiny_config();
      c.model = kind;
      c.losses = {(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
      const auto r = grad_check(c, data);
      EXPECT_LT(r.total.max_rel_error, 1e-5) << "mask " << mask;
      for (const TermCheck* t : {&r.wti, &r.nbi, &r.opt, &r.kl}) EXPECT_LT(t->max_rel_error, 1e-5) << "mask " << mask;
    }
  }
}

TEST(GradCheck, SwitchedOffTermsReportZero) {
  TrainConfig c = tiny_config();
  c.losses = {true, false, false, false};
  const auto r = grad_check(c, toy(8, 8, 0.8));
  for (double v : r.nbi.analytic) EXPECT_EQ(v, 0.0);
  for (double v : r.opt.numeric) EXPECT_EQ(v, 0.0);
  // single-vector mode: both similarity levels coincide
  for (double v : r.kl.analytic) EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, PaperModeIsolatesNeighborTerm) {
  const auto data = toy(8, 8, 0.8);
  TrainConfig c = tiny_config();
  c.grad_mode = GradMode::Paper;
  const auto paper = grad_check(c, data);
  c.grad_mode = GradMode::Exact;
  const auto exact = grad_check(c, data);
  EXPECT_GT(paper.nbi.max_abs_error, 1e-3);
  EXPECT_LT(exact.nbi.max_rel_error, 1e-5);
  EXPECT_LT(paper.wti.max_rel_error, 1e-5);
  EXPECT_LT(paper.opt.max_rel_error, 1e-5);
  // The loss values do not depend on the mode, only the emitted gradient does.
  EXPECT_EQ(paper.nbi.numeric, exact.nbi.numeric);
  // total = sum of terms, so the total's deviation is the neighbor term's.
  for (std::size_t i = 0; i < paper.total.analytic.size(); ++i) {
    EXPECT_NEAR(paper.total.analytic[i] - exact.total.analytic[i], paper.nbi.analytic[i] - exact.nbi.analytic[i], 1e-12);
  }
}
