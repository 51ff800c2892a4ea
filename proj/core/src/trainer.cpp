#include "hublab/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "hublab/error.hpp"
#include "hublab/memory_bank.hpp"
#include "hublab/transport.hpp"

namespace hublab {

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(kappa > 0.0)) throw Error(ErrorCode::NonPositiveKappa, "kappa must be positive");
  if (!(beta >= 0.0 && beta <= 1.0)) bad("beta must lie in [0, 1]");
  if (!(epsilon_sinkhorn > 0.0)) bad("epsilon_sinkhorn must be positive");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (k_neighbors < 1) bad("k_neighbors must be >= 1");
  if (bank_capacity < 1) bad("bank_capacity must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be finite and >= 0");
  if (batch_size < 2) bad("batch_size must be >= 2");
  if (!(sinkhorn_tol > 0.0)) bad("sinkhorn_tol must be positive");
  if (sinkhorn_max_iter < 1) bad("sinkhorn_max_iter must be >= 1");
}

namespace {

using Index = std::vector<std::size_t>;

struct Params {
  Matrix q;
  Matrix g;
};

// Table rows are free vectors; projections map fixed features x to x W^T.
class Model {
 public:
  Model(ModelKind kind, const PairedDataset& data) : kind_(kind) {
    if (kind == ModelKind::EmbeddingTable) {
      params.q = l2_normalize(data.queries).data;
      params.g = l2_normalize(data.galleries).data;
    } else {
      features_q_ = data.queries.data;
      features_g_ = data.galleries.data;
      const Eigen::Index d = data.queries.data.cols();
      params.q = Matrix::Identity(d, d);
      params.g = Matrix::Identity(d, d);
    }
  }

  // u: unnormalized rows, e: unit rows.
  void forward(Modality m, const Index& idx, Matrix& u, Matrix& e) const {
    const Matrix& p = m == Modality::Query ? params.q : params.g;
    const auto b = static_cast<Eigen::Index>(idx.size());
    if (kind_ == ModelKind::EmbeddingTable) {
      u.resize(b, p.cols());
      for (Eigen::Index r = 0; r < b; ++r) u.row(r) = p.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]));
    } else {
      const Matrix& x = m == Modality::Query ? features_q_ : features_g_;
      Matrix rows(b, x.cols());
      for (Eigen::Index r = 0; r < b; ++r) rows.row(r) = x.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]));
      u = rows * p.transpose();
    }
    e.resize(u.rows(), u.cols());
    for (Eigen::Index r = 0; r < b; ++r) {
      const double norm = u.row(r).norm();
      if (!(norm >= kZeroNormThreshold)) {
        throw Error(ErrorCode::DivergenceDetected, "embedding row " + std::to_string(idx[static_cast<std::size_t>(r)]) +
                                                       " collapsed to zero or non-finite");
      }
      e.row(r) = u.row(r) / norm;
    }
  }

  void backward(Modality m, const Index& idx, const Matrix& u, const Matrix& e, const Matrix& de, Params& grad) const {
    Matrix& gp = m == Modality::Query ? grad.q : grad.g;
    const auto b = static_cast<Eigen::Index>(idx.size());
    Matrix du(b, u.cols());
    for (Eigen::Index r = 0; r < b; ++r) {
      // d(u/|u|)/du = (I - e e^T) / |u|
      du.row(r) = (de.row(r) - de.row(r).dot(e.row(r)) * e.row(r)) / u.row(r).norm();
    }
    if (kind_ == ModelKind::EmbeddingTable) {
      for (Eigen::Index r = 0; r < b; ++r) gp.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)])) += du.row(r);
    } else {
      const Matrix& x = m == Modality::Query ? features_q_ : features_g_;
      for (Eigen::Index r = 0; r < b; ++r) {
        gp += du.row(r).transpose() * x.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]));
      }
    }
  }

  std::size_t n_samples() const {
    return static_cast<std::size_t>(kind_ == ModelKind::EmbeddingTable ? params.q.rows() : features_q_.rows());
  }

  Matrix embed_all(Modality m) const {
    Index all(n_samples());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Matrix u;
    Matrix e;
    forward(m, all, u, e);
    return e;
  }

  ModelKind kind() const { return kind_; }

  Params params;

 private:
  ModelKind kind_;
  Matrix features_q_;
  Matrix features_g_;
};

Params zeros_like(const Params& p) {
  return {Matrix::Zero(p.q.rows(), p.q.cols()), Matrix::Zero(p.g.rows(), p.g.cols())};
}

class Adam {
 public:
  explicit Adam(const Params& like) : m_(zeros_like(like)), v_(zeros_like(like)) {}

  // Returns per-row flags marking rows that actually moved.
  void step(Params& p, const Params& grad, double lr, std::vector<bool>& moved_q, std::vector<bool>& moved_g) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    update(p.q, grad.q, m_.q, v_.q, lr, c1, c2, moved_q);
    update(p.g, grad.g, m_.g, v_.g, lr, c1, c2, moved_g);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  static void update(Matrix& p, const Matrix& g, Matrix& m, Matrix& v, double lr, double c1, double c2,
                     std::vector<bool>& moved) {
    moved.assign(static_cast<std::size_t>(p.rows()), false);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        m(r, c) = kBeta1 * m(r, c) + (1.0 - kBeta1) * g(r, c);
        v(r, c) = kBeta2 * v(r, c) + (1.0 - kBeta2) * g(r, c) * g(r, c);
        const double delta = lr * (m(r, c) / c1) / (std::sqrt(v(r, c) / c2) + kEps);
        if (delta != 0.0) {
          p(r, c) -= delta;
          moved[static_cast<std::size_t>(r)] = true;
        }
      }
    }
  }

  Params m_;
  Params v_;
  std::size_t t_ = 0;
};

EmbeddingSet as_set(Matrix data, Modality m) {
  EmbeddingSet e;
  e.data = std::move(data);
  e.modality = m;
  return e;
}

// Everything held fixed while the loss is differentiated: centrality weights,
// neighbor sets and targets, transport targets and the bank candidates.
struct DirectionAux {
  std::vector<double> weights;
  NeighborPlan neighbors;
  Matrix opt_target;
  Matrix pool;  // older opposite-modality bank rows joining the neighbor pool
};

struct BatchAux {
  DirectionAux fwd;
  DirectionAux bwd;
  bool unconverged = false;
};

SimilarityMatrix scores(const Matrix& a, const Matrix& c, double tau) {
  return {a * c.transpose(), tau};
}

DirectionAux prepare_direction(const Matrix& anchors, Modality anchor_mod, const Matrix& cands, const MemoryBank& bank,
                               std::size_t fresh, const TrainConfig& cfg, bool& unconverged) {
  DirectionAux aux;
  const Modality cand_mod = opposite(anchor_mod);
  const SimilarityMatrix s = scores(anchors, cands, cfg.temperature);

  if (cfg.losses.wti) {
    aux.weights = centrality_weights(intra_centrality(bank, as_set(anchors, anchor_mod)), cfg.kappa,
                                     cfg.normalize_weights);
  }

  if (cfg.losses.nbi) {
    const std::size_t fill = bank.fill(cand_mod);
    if (cfg.neighbors_from_bank && fill > fresh) {
      aux.pool = bank.contents(cand_mod).topRows(static_cast<Eigen::Index>(fill - fresh));
    } else {
      aux.pool = Matrix(0, cands.cols());
    }
    const Eigen::Index b = cands.rows();
    const Eigen::Index extra = aux.pool.rows();
    SimilarityMatrix pooled{Matrix(anchors.rows(), b + extra), cfg.temperature};
    pooled.scores.leftCols(b) = s.scores;
    if (extra > 0) pooled.scores.rightCols(extra) = anchors * aux.pool.transpose();

    CentralityVector hat = cross_centrality(bank, as_set(cands, cand_mod));
    if (extra > 0) {
      const CentralityVector older = cross_centrality(bank, as_set(aux.pool, cand_mod));
      hat.values.insert(hat.values.end(), older.values.begin(), older.values.end());
    }
    aux.neighbors = plan_neighbors(pooled, decentral_similarity(pooled, hat), cfg.k_neighbors);
  }

  if (cfg.losses.opt) {
    SinkhornOptions opts;
    opts.epsilon = cfg.epsilon_sinkhorn;
    opts.tol = cfg.sinkhorn_tol;
    opts.max_iter = cfg.sinkhorn_max_iter;
    opts.strict = false;
    const TransportPlan plan = sinkhorn_plan(s, opts);
    if (!plan.converged) unconverged = true;
    aux.opt_target = blend_targets(plan, cfg.beta).q_blend;
  }
  return aux;
}

BatchAux prepare(const Matrix& eq, const Matrix& eg, const MemoryBank& bank, const TrainConfig& cfg) {
  BatchAux aux;
  const auto fresh = static_cast<std::size_t>(eq.rows());
  aux.fwd = prepare_direction(eq, Modality::Query, eg, bank, fresh, cfg, aux.unconverged);
  aux.bwd = prepare_direction(eg, Modality::Gallery, eq, bank, fresh, cfg, aux.unconverged);
  return aux;
}

// S-level terms for one direction, S = anchors cands^T.
struct DirectionTerms {
  LossBundle wti;
  LossBundle nbi;
  LossBundle opt;
  LossBundle kl;
  Matrix nbi_pool_grad;  // gradient on the bank columns of the neighbor pool
};

DirectionTerms direction_terms(const Matrix& anchors, const Matrix& cands, const DirectionAux& aux,
                               const TrainConfig& cfg) {
  const SimilarityMatrix s = scores(anchors, cands, cfg.temperature);
  const std::size_t b = s.rows();
  DirectionTerms t;
  t.wti = cfg.losses.wti ? loss_wti(s, aux.weights) : zero_loss(b, s.cols());
  if (cfg.losses.nbi) {
    const Eigen::Index extra = aux.pool.rows();
    if (extra > 0) {
      SimilarityMatrix pooled{Matrix(anchors.rows(), cands.rows() + extra), cfg.temperature};
      pooled.scores.leftCols(cands.rows()) = s.scores;
      pooled.scores.rightCols(extra) = anchors * aux.pool.transpose();
      LossBundle full = loss_nbi_planned(pooled, aux.neighbors, cfg.grad_mode);
      t.nbi_pool_grad = full.grad.rightCols(extra);
      full.grad = Matrix(full.grad.leftCols(cands.rows()));
      t.nbi = std::move(full);
    } else {
      t.nbi = loss_nbi_planned(s, aux.neighbors, cfg.grad_mode);
    }
  } else {
    t.nbi = zero_loss(b, s.cols());
  }
  t.opt = cfg.losses.opt ? loss_opt(s, aux.opt_target) : zero_loss(b, s.cols());
  if (cfg.losses.kl) {
    // Single-vector similarities serve as both levels, so the term is zero
    // here; it only separates once a token-level score is plugged in.
    t.kl = loss_kl(s, s, cfg.kl_symmetric);
  } else {
    t.kl = zero_loss(b, s.cols());
  }
  return t;
}

struct EmbeddingGrads {
  double value = 0.0;
  Matrix dq;
  Matrix dg;
};

// Combined gradient through total_loss, as used for the updates.
EmbeddingGrads objective(const Matrix& eq, const Matrix& eg, const BatchAux& aux, const TrainConfig& cfg) {
  const DirectionTerms f = direction_terms(eq, eg, aux.fwd, cfg);
  const DirectionTerms b = direction_terms(eg, eq, aux.bwd, cfg);
  const LossBundle total = total_loss({f.wti, f.nbi, f.opt, f.kl}, {b.wti, b.nbi, b.opt, b.kl});
  Matrix ds = total.grad;
  if (total.grad_high.size() > 0) ds += total.grad_high;  // S_high is S itself
  EmbeddingGrads out;
  out.value = total.value;
  out.dq = ds * eg;
  out.dg = ds.transpose() * eq;
  if (f.nbi_pool_grad.size() > 0) out.dq += 0.5 * f.nbi_pool_grad * aux.fwd.pool;
  if (b.nbi_pool_grad.size() > 0) out.dg += 0.5 * b.nbi_pool_grad * aux.bwd.pool;
  return out;
}

enum Term { kWti = 0, kNbi, kOpt, kKl, kTermCount };

const LossBundle& pick(const DirectionTerms& t, int term) {
  switch (term) {
    case kWti: return t.wti;
    case kNbi: return t.nbi;
    case kOpt: return t.opt;
    default: return t.kl;
  }
}

// Per-term values and embedding gradients, each already halved.
std::array<EmbeddingGrads, kTermCount> per_term(const Matrix& eq, const Matrix& eg, const BatchAux& aux,
                                                const TrainConfig& cfg) {
  const DirectionTerms f = direction_terms(eq, eg, aux.fwd, cfg);
  const DirectionTerms b = direction_terms(eg, eq, aux.bwd, cfg);
  std::array<EmbeddingGrads, kTermCount> out;
  for (int term = 0; term < kTermCount; ++term) {
    const LossBundle& lf = pick(f, term);
    const LossBundle& lb = pick(b, term);
    Matrix gf = lf.grad;
    Matrix gb = lb.grad;
    if (lf.grad_high.size() > 0) gf += lf.grad_high;
    if (lb.grad_high.size() > 0) gb += lb.grad_high;
    auto& o = out[static_cast<std::size_t>(term)];
    o.value = 0.5 * (lf.value + lb.value);
    o.dq = 0.5 * (gf * eg + gb.transpose() * eg);
    o.dg = 0.5 * (gf.transpose() * eq + gb * eq);
    if (term == kNbi) {
      if (f.nbi_pool_grad.size() > 0) o.dq += 0.5 * f.nbi_pool_grad * aux.fwd.pool;
      if (b.nbi_pool_grad.size() > 0) o.dg += 0.5 * b.nbi_pool_grad * aux.bwd.pool;
    }
  }
  return out;
}

void check_pairs(const PairedDataset& data) {
  data.queries.validate();
  data.galleries.validate();
  if (data.queries.size() != data.galleries.size()) {
    throw Error(ErrorCode::LengthMismatch, "queries and galleries must be index-matched pairs");
  }
  if (data.queries.dim() != data.galleries.dim()) throw Error(ErrorCode::DimensionMismatch, "modalities differ in dim");
  if (data.queries.size() < 2) throw Error(ErrorCode::InvalidArgument, "training needs at least two pairs");
}

void evaluate(const Model& model, const PairedDataset& data, const HubnessParams& eval, HubnessReport& report,
              RetrievalScores& retrieval) {
  const SimilarityMatrix s = scores(model.embed_all(Modality::Query), model.embed_all(Modality::Gallery), 1.0);
  report = hubness_report(s, eval);
  retrieval = retrieval_eval(s, data.relevance);
}

EmbeddingSet export_set(Matrix data, const EmbeddingSet& like) {
  EmbeddingSet e;
  e.data = std::move(data);
  e.modality = like.modality;
  e.ids = like.ids;
  e.labels = like.labels;
  return e;
}

bool finite(const Params& p) { return p.q.allFinite() && p.g.allFinite(); }

}  // namespace

TrainResult train(const TrainConfig& config, const PairedDataset& data, const HubnessParams& eval) {
  config.validate();
  check_pairs(data);
  const std::size_t n = data.queries.size();

  Model model(config.model, data);
  MemoryBank bank(config.bank_capacity, data.queries.dim());
  Adam adam(model.params);
  Rng rng(config.seed);

  TrainResult out;
  evaluate(model, data, eval, out.before, out.retrieval_before);

  Index order(n);
  std::vector<bool> moved_q;
  std::vector<bool> moved_g;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start + 1 < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const Index idx(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));

      Matrix uq, eq, ug, eg;
      model.forward(Modality::Query, idx, uq, eq);
      model.forward(Modality::Gallery, idx, ug, eg);
      bank.push_batch(as_set(eq, Modality::Query));
      bank.push_batch(as_set(eg, Modality::Gallery));

      const BatchAux aux = prepare(eq, eg, bank, config);
      if (aux.unconverged) ++out.unconverged_plans;
      const EmbeddingGrads g = objective(eq, eg, aux, config);
      if (!std::isfinite(g.value)) {
        throw Error(ErrorCode::DivergenceDetected, "loss is not finite at step " + std::to_string(step));
      }
      out.loss_curve.push_back({epoch, step, g.value});

      Params grad = zeros_like(model.params);
      model.backward(Modality::Query, idx, uq, eq, g.dq, grad);
      model.backward(Modality::Gallery, idx, ug, eg, g.dg, grad);
      adam.step(model.params, grad, config.learning_rate, moved_q, moved_g);
      if (!finite(model.params)) {
        throw Error(ErrorCode::DivergenceDetected, "parameters are not finite at step " + std::to_string(step));
      }
      if (model.kind() == ModelKind::EmbeddingTable) {
        for (Eigen::Index r = 0; r < model.params.q.rows(); ++r) {
          if (moved_q[static_cast<std::size_t>(r)]) model.params.q.row(r).normalize();
          if (moved_g[static_cast<std::size_t>(r)]) model.params.g.row(r).normalize();
        }
      }
      ++step;
    }
  }

  evaluate(model, data, eval, out.after, out.retrieval_after);
  out.queries = export_set(model.embed_all(Modality::Query), data.queries);
  out.galleries = export_set(model.embed_all(Modality::Gallery), data.galleries);
  return out;
}

namespace {

void finish(TermCheck& c) {
  c.max_abs_error = 0.0;
  c.max_rel_error = 0.0;
  for (std::size_t i = 0; i < c.analytic.size(); ++i) {
    const double a = c.analytic[i];
    const double f = c.numeric[i];
    const double err = std::abs(a - f);
    c.max_abs_error = std::max(c.max_abs_error, err);
    c.max_rel_error = std::max(c.max_rel_error, err / std::max({std::abs(a), std::abs(f), 1e-6}));
  }
}

void append(std::vector<double>& out, const Params& p) {
  out.insert(out.end(), p.q.data(), p.q.data() + p.q.size());
  out.insert(out.end(), p.g.data(), p.g.data() + p.g.size());
}

}  // namespace

GradCheckReport grad_check(const TrainConfig& config, const PairedDataset& data, double h) {
  config.validate();
  check_pairs(data);
  if (!(h >= 1e-7 && h <= 1e-3)) throw Error(ErrorCode::InvalidArgument, "h must lie in [1e-7, 1e-3]");

  const std::size_t b = std::min(config.batch_size, data.queries.size());
  PairedDataset batch;
  batch.queries = export_set(data.queries.data.topRows(static_cast<Eigen::Index>(b)), data.queries);
  batch.galleries = export_set(data.galleries.data.topRows(static_cast<Eigen::Index>(b)), data.galleries);
  batch.queries.ids.clear();
  batch.queries.labels.clear();
  batch.galleries.ids.clear();
  batch.galleries.labels.clear();

  Model model(config.model, batch);
  Index idx(b);
  for (std::size_t i = 0; i < b; ++i) idx[i] = i;

  Matrix uq, eq, ug, eg;
  model.forward(Modality::Query, idx, uq, eq);
  model.forward(Modality::Gallery, idx, ug, eg);
  MemoryBank bank(std::max(config.bank_capacity, b), eq.cols());
  bank.push_batch(as_set(eq, Modality::Query));
  bank.push_batch(as_set(eg, Modality::Gallery));
  const BatchAux aux = prepare(eq, eg, bank, config);

  GradCheckReport report;
  std::array<TermCheck*, kTermCount + 1> checks = {&report.wti, &report.nbi, &report.opt, &report.kl, &report.total};

  const auto terms = per_term(eq, eg, aux, config);
  for (int t = 0; t < kTermCount; ++t) {
    Params grad = zeros_like(model.params);
    model.backward(Modality::Query, idx, uq, eq, terms[static_cast<std::size_t>(t)].dq, grad);
    model.backward(Modality::Gallery, idx, ug, eg, terms[static_cast<std::size_t>(t)].dg, grad);
    append(checks[static_cast<std::size_t>(t)]->analytic, grad);
  }
  {
    const EmbeddingGrads g = objective(eq, eg, aux, config);
    Params grad = zeros_like(model.params);
    model.backward(Modality::Query, idx, uq, eq, g.dq, grad);
    model.backward(Modality::Gallery, idx, ug, eg, g.dg, grad);
    append(report.total.analytic, grad);
  }

  auto values_at = [&](std::array<double, kTermCount + 1>& v) {
    Matrix u1, e1, u2, e2;
    model.forward(Modality::Query, idx, u1, e1);
    model.forward(Modality::Gallery, idx, u2, e2);
    const auto parts = per_term(e1, e2, aux, config);
    for (int t = 0; t < kTermCount; ++t) v[static_cast<std::size_t>(t)] = parts[static_cast<std::size_t>(t)].value;
    v[kTermCount] = objective(e1, e2, aux, config).value;
  };

  for (Matrix* p : {&model.params.q, &model.params.g}) {
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      double& x = p->data()[i];
      const double saved = x;
      std::array<double, kTermCount + 1> plus{};
      std::array<double, kTermCount + 1> minus{};
      x = saved + h;
      values_at(plus);
      x = saved - h;
      values_at(minus);
      x = saved;
      for (std::size_t t = 0; t <= kTermCount; ++t) checks[t]->numeric.push_back((plus[t] - minus[t]) / (2.0 * h));
    }
  }
  for (TermCheck* c : checks) finish(*c);
  return report;
}

}  // namespace hublab
