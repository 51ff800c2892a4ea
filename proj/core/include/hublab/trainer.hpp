#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hublab/embedding.hpp"
#include "hublab/hubness.hpp"
#include "hublab/losses.hpp"
#include "hublab/retrieval.hpp"
#include "hublab/synth.hpp"

namespace hublab {

/// What the optimizer updates. EmbeddingTable learns one free vector per
/// sample (initialized from the data); LinearProjection learns a d x d map per
/// modality over the fixed input features (initialized to the identity).
enum class ModelKind { EmbeddingTable, LinearProjection };

struct LossToggles {
  bool wti = true;
  bool nbi = true;
  bool opt = true;
  bool kl = true;
};

struct TrainConfig {
  double kappa = 0.1;
  double beta = 0.5;
  double epsilon_sinkhorn = 0.05;
  double temperature = 1.0;
  std::size_t k_neighbors = kDefaultNeighbors;
  std::size_t bank_capacity = MemoryBank::kDefaultCapacity;
  double learning_rate = 1e-3;
  std::size_t epochs = 25;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  GradMode grad_mode = GradMode::Exact;
  bool normalize_weights = true;
  ModelKind model = ModelKind::EmbeddingTable;
  LossToggles losses;
  /// Candidate pool for N(x_i) also covers older gallery slots in the bank.
  bool neighbors_from_bank = false;
  bool kl_symmetric = false;
  double sinkhorn_tol = 1e-6;
  std::size_t sinkhorn_max_iter = 200;

  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
};

struct TrainStep {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  EmbeddingSet queries;
  EmbeddingSet galleries;
  std::vector<TrainStep> loss_curve;
  HubnessReport before;
  HubnessReport after;
  RetrievalScores retrieval_before;
  RetrievalScores retrieval_after;
  /// Steps whose Sinkhorn solve stopped at max_iter short of tol.
  std::size_t unconverged_plans = 0;
};

/// Mini-batch training on index-matched pairs. Each epoch visits a seeded
/// permutation in batches; a trailing batch of one pair is skipped. Throws
/// DivergenceDetected if the loss or the parameters stop being finite.
TrainResult train(const TrainConfig& config, const PairedDataset& data, const HubnessParams& eval = {});

/// Analytic vs central-difference gradient for one loss term.
struct TermCheck {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_abs_error = 0.0;
  /// max_i |a_i - f_i| / max(|a_i|, |f_i|, 1e-6).
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  TermCheck wti;
  TermCheck nbi;
  TermCheck opt;
  TermCheck kl;
  TermCheck total;
};

/// Checks d(loss)/d(parameters) on the first min(batch_size, n) pairs. The
/// bank, centrality weights, neighbor sets, targets and transport plans are
/// taken at the unperturbed point and held fixed, as in training. Terms
/// switched off in `config.losses` report zeros. `h` must lie in [1e-7, 1e-3].
GradCheckReport grad_check(const TrainConfig& config, const PairedDataset& data, double h = 1e-5);

}  // namespace hublab
