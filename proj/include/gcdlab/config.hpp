#pragma once

#include <cstdint>
#include <string>

namespace gcdlab {

/// Which LegoGCD components are active on top of the SimGCD objective.
struct FeatureToggles {
  bool ler = true;
  bool map = true;
  bool dkl = true;

  bool operator==(const FeatureToggles&) const = default;
};

/// Every scalar of the training objective and schedule. Defaults follow the published
/// LegoGCD settings; the model widths, augmentation and the LR safety bound are desk-scale
/// additions.
struct TrainConfig {
  double lambda = 0.35;
  double epsilon = 1.0;
  double alpha = 1.0;
  double beta = 2.0;
  double delta = 0.85;
  double lambda_ler = 0.4;

  double tau_u = 0.07;
  double tau_c = 1.0;
  double tau_s = 0.1;
  double tau_t_start = 0.07;
  double tau_t_end = 0.04;
  int tau_t_warmup_epochs = 30;
  double tau_o = 0.05;

  double ema_momentum = 0.99;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  int epochs = 200;
  int batch_size = 128;
  std::uint64_t seed = 0;
  FeatureToggles toggles;
  /// Whether the softmax(l / tau_o) branch of the LER cross-entropy is a constant.
  bool ler_detach_target = true;

  int hidden_dim = 32;
  int feat_dim = 16;
  int proj_dim = 8;
  double augment_strength = 0.1;
  double augment_dropout = 0.1;
  /// If the gradient norm on the first batch exceeds this bound, lr0 is capped at
  /// kSafeLearningRate for the whole run. Zero disables the check.
  double lr_safety_grad_norm = 50.0;

  /// Throws RangeError naming the first violated constraint.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

inline constexpr double kSafeLearningRate = 0.05;

}  // namespace gcdlab
