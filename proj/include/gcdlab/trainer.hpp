#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "gcdlab/config.hpp"
#include "gcdlab/eval.hpp"
#include "gcdlab/losses.hpp"
#include "gcdlab/model.hpp"
#include "gcdlab/synthdata.hpp"

namespace gcdlab {

/// lr0 * 0.5 * (1 + cos(pi * epoch / total)), floored at 0.
double cosine_lr(int epoch, int total, double lr0);

/// Cosine ramp from tau_t_start to tau_t_end over the warmup epochs, then constant.
double teacher_temperature(int epoch, const TrainConfig& cfg);

LossWeights loss_weights(const TrainConfig& cfg);

/// Quantities treated as constants when differentiating one step: teacher pseudo-labels,
/// the DKL reference view, the LER target branch, the known-sample selection and the MAP
/// margins. All are computed from the step's forward pass.
struct StepTargets {
  TeacherTargets teacher;
  Matrix dkl_reference;    // student distributions of view 2
  Matrix ler_targets;      // softmax(logits / tau_o), view 1 rows then view 2 rows
  SelectionState selection;
  Vector margins;
};

/// Student distributions at tau_s, view 1 rows then view 2 rows.
Matrix stacked_student_dists(const ForwardCache& cache, double tau_s);
/// The label mask M duplicated across views.
std::vector<bool> stacked_mask(const Batch& batch);

StepTargets detach_targets(const ForwardCache& cache, const Batch& batch, const TrainConfig& cfg,
                           double tau_t, const std::vector<bool>& known_lookup,
                           const Vector& margins);

struct ObjectiveResult {
  LossBreakdown breakdown;
  ParamGrads grads;
};

/// Full objective for one batch with the given constants, and its exact parameter gradient.
ObjectiveResult evaluate_objective(const ModelParams& params, const ForwardCache& cache,
                                   const Batch& batch, const TrainConfig& cfg,
                                   const StepTargets& targets);

struct TrainState {
  ModelParams params;
  ModelParams velocity;  // SGD momentum buffers
  EmaState ema;
  int epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  double lr0 = 0.0;  // effective base learning rate after the safety check
  bool lr_capped = false;
  std::size_t ema_updates = 0;
  std::vector<EpochMetrics> history;
};

TrainState init_state(const GcdDataset& dataset, const TrainConfig& cfg);

/// One step: forward, selection and EMA update (exactly once), objective, backward and an SGD
/// update with momentum and weight decay. Throws NonFiniteLoss naming the first bad term.
LossBreakdown training_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                            const std::vector<bool>& known_lookup, double lr, double tau_t);

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Writes `checkpoint_dir/checkpoint_epochNNNN.bin` every N epochs when N > 0.
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::uint64_t config_hash = 0;
  std::function<void(const std::string&)> log;
};

/// Seed of the batch stream for one epoch.
std::uint64_t epoch_seed(std::uint64_t seed, int epoch);

/// Runs cfg.epochs epochs, evaluating after each one.
TrainState train(const GcdDataset& dataset, const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace gcdlab
