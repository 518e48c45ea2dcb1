#pragma once
// Shared builders for tests and the acceptance binary.

#include <random>

#include "gcdlab/trainer.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace gcdlab;

inline Batch random_batch(int b, int d, int num_classes, const std::vector<bool>& known,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);
  Batch batch;
  batch.view1 = Matrix::NullaryExpr(b, d, [&]() { return n(rng); });
  batch.view2 = batch.view1 + 0.1 * Matrix::NullaryExpr(b, d, [&]() { return n(rng); });
  for (int i = 0; i < b; ++i) {
    const int y = cls(rng);
    batch.labels.push_back(y);
    batch.mask.push_back(known[y] && coin(rng));
    batch.sample_ids.push_back(static_cast<std::size_t>(i));
  }
  return batch;
}

inline oracle::Mat rows(const Matrix& m) {
  oracle::Mat out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out[i] = oracle::Vec(m.row(i).data(), m.row(i).data() + m.cols());
  return out;
}

/// Config for the baseline objective: LegoGCD components off and beta zero.
inline TrainConfig simgcd_config() {
  TrainConfig cfg;
  cfg.toggles = {false, false, false};
  cfg.beta = 0.0;
  return cfg;
}

/// Library total vs independently coded baseline objective on one random batch.
struct ReductionCheck {
  double library = 0.0;
  double reference = 0.0;
};

inline ReductionCheck simgcd_reduction(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int k = 3 + static_cast<int>(rng() % 6);
  const int d = 3 + static_cast<int>(rng() % 6);
  const int b = 2 + static_cast<int>(rng() % 15);
  std::vector<bool> known(k, false);
  for (int c = 0; c < (k + 1) / 2; ++c) known[c] = true;
  TrainConfig cfg = simgcd_config();
  cfg.hidden_dim = 7;
  cfg.feat_dim = 5;
  cfg.proj_dim = 4;
  const ModelParams params = init_params(d, cfg.hidden_dim, cfg.feat_dim, cfg.proj_dim, k, rng());
  const Batch batch = random_batch(b, d, k, known, rng());
  const double tau_t = teacher_temperature(static_cast<int>(rng() % 40), cfg);
  const ForwardCache cache = forward(params, batch);
  const StepTargets targets =
      detach_targets(cache, batch, cfg, tau_t, known, Vector::Zero(k));
  ReductionCheck r;
  r.library = evaluate_objective(params, cache, batch, cfg, targets).breakdown.total;
  oracle::SimGcdInputs in{rows(cache.view1.z),      rows(cache.view2.z),
                          rows(cache.view1.logits), rows(cache.view2.logits),
                          batch.labels,             batch.mask,
                          cfg.lambda,               cfg.epsilon,
                          cfg.tau_u,                cfg.tau_c,
                          cfg.tau_s,                tau_t};
  r.reference = oracle::simgcd_objective(in);
  return r;
}

/// Max relative error of the full objective's parameter gradient against central differences
/// on a toy model (b=6, K=5, d=8) with every LegoGCD component active.
struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t selected = 0;
  Eigen::Index parameters = 0;
};

inline GradientCheck full_objective_gradient_check(std::uint64_t seed) {
  const int k = 5, d = 8, b = 6;
  std::vector<bool> known = {true, true, true, false, false};
  TrainConfig cfg;
  cfg.hidden_dim = 6;
  cfg.feat_dim = 5;
  cfg.proj_dim = 4;
  // An untrained model is rarely confident; a low threshold keeps the selection non-empty.
  cfg.delta = 0.3;
  std::mt19937_64 rng(seed);
  ModelParams params = init_params(d, cfg.hidden_dim, cfg.feat_dim, cfg.proj_dim, k, rng());
  Batch batch = random_batch(b, d, k, known, rng());
  for (int i = 0; i < b; ++i) batch.mask[i] = (i % 3 == 0) && known[batch.labels[i]];
  // Two labeled samples of one class give the supervised term a positive pair.
  batch.labels[0] = batch.labels[3] = 1;
  batch.mask[0] = batch.mask[3] = true;
  EmaState ema = EmaState::uniform(k, cfg.ema_momentum);
  const ForwardCache cache = forward(params, batch);
  const Matrix dists = stacked_student_dists(cache, cfg.tau_s);
  const MarginUpdate mu = update_ema_and_margins(ema, dists, cfg.lambda_ler);
  const double tau_t = 0.05;
  const StepTargets targets = detach_targets(cache, batch, cfg, tau_t, known, mu.margins);
  const ObjectiveResult r = evaluate_objective(params, cache, batch, cfg, targets);
  auto f = [&](const Vector& flat) {
    ModelParams q = params;
    q.assign_flat(flat);
    return evaluate_objective(q, forward(q, batch), batch, cfg, targets).breakdown.total;
  };
  const Vector numeric = numeric_gradient(f, params.flatten());
  GradientCheck g;
  g.max_rel_error = max_relative_error(r.grads.flatten(), numeric);
  g.selected = targets.selection.selected_count();
  g.parameters = params.parameter_count();
  return g;
}

}  // namespace fixtures
