#pragma once

#include <vector>

#include "gcdlab/numerics.hpp"

namespace gcdlab {

/// Per view-sample outcome of the known-sample selection.
struct SelectionState {
  std::vector<bool> high_conf;  // max p >= delta
  std::vector<int> pred_labels; // argmax, lowest index on ties
  std::vector<bool> known_mask; // unlabeled && high_conf && pred in Y_l

  std::size_t selected_count() const;
};

/// Running average p̃ of the batch-mean prediction.
struct EmaState {
  Vector p_tilde;
  double momentum = 0.99;

  static EmaState uniform(int num_classes, double momentum);
};

/// Every term of the objective plus the recomposed total.
struct LossBreakdown {
  double rep_unsup = 0.0;
  double rep_sup = 0.0;
  double cls_unsup = 0.0;
  double cls_sup = 0.0;
  double mean_entropy = 0.0;  // H(p̄), enters with a minus sign
  double dkl = 0.0;
  double ler = 0.0;
  double total = 0.0;
};

/// Scalars combining the terms: L = α (L_rep + L_cls) + β L_LER with
/// L_rep = (1-λ) rep_u + λ rep_s and L_cls = (1-λ)(cls_u - ε H(p̄) + D_KL) + λ cls_s.
struct LossWeights {
  double lambda = 0.35;
  double epsilon = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
};

struct ContrastiveResult {
  double loss = 0.0;
  Matrix grad_z1;
  Matrix grad_z2;
  std::size_t anchors = 0;
};

/// Cross-view InfoNCE: anchor z1_i, positive z2_i, denominator over every z2_n. Mean over i.
ContrastiveResult unsup_contrastive(const Matrix& z1, const Matrix& z2, double tau_u);

/// Supervised contrastive loss over labeled anchors. Positives of anchor i are the other labeled
/// samples with i's label (second view); the denominator runs over every labeled sample's second
/// view. Anchors without positives are skipped; with no valid anchor the loss is 0.
ContrastiveResult sup_contrastive(const Matrix& z1, const Matrix& z2, const std::vector<int>& labels,
                                  const std::vector<bool>& labeled, double tau_c);

double rep_loss(double unsup, double sup, double lambda);

/// Teacher targets for self-distillation: row i of view 1 is supervised by softmax of view 2's
/// logits at tau_t and vice versa. These are constants for differentiation.
struct TeacherTargets {
  Matrix view1;
  Matrix view2;
};
TeacherTargets teacher_targets(const Matrix& logits_v1, const Matrix& logits_v2, double tau_t);

struct ClassificationResult {
  double cls_unsup = 0.0;
  double cls_sup = 0.0;
  Matrix grad_unsup_v1;  // w.r.t. logits
  Matrix grad_unsup_v2;
  Matrix grad_sup_v1;
  Matrix grad_sup_v2;
  TeacherTargets teacher;
};

/// cls_unsup: mean over all 2b view-samples of CE(teacher, softmax(logits / tau_s)).
/// cls_sup: mean over labeled view-samples of CE(one-hot(y), softmax(logits / tau_s)).
ClassificationResult classification_losses(const Matrix& logits_v1, const Matrix& logits_v2,
                                           const std::vector<int>& labels,
                                           const std::vector<bool>& labeled, double tau_s,
                                           const TeacherTargets& teacher);
ClassificationResult classification_losses(const Matrix& logits_v1, const Matrix& logits_v2,
                                           const std::vector<int>& labels,
                                           const std::vector<bool>& labeled, double tau_s,
                                           double tau_t);

struct DistributionLoss {
  double value = 0.0;
  Matrix grad_v1;  // w.r.t. distributions
  Matrix grad_v2;
};

/// H(p̄) with p̄ the mean of all rows of both views. Gradients are w.r.t. the distributions.
DistributionLoss mean_entropy_reg(const Matrix& dists_v1, const Matrix& dists_v2);

/// Selection of high-confidence unlabeled samples predicted as known classes. Each row of
/// `dists` is treated independently; `labeled` has one entry per row.
SelectionState select_known(const Matrix& dists, const std::vector<bool>& labeled,
                            const std::vector<bool>& known_lookup, double delta);

struct MarginUpdate {
  EmaState state;
  Vector margins;  // Δ_j = λ_ler log(1 / p̃_j)
};

/// p̃ <- m p̃ + (1-m) mean(dists), renormalized; p̃_j is clamped at kLogFloor inside the log.
MarginUpdate update_ema_and_margins(const EmaState& state, const Matrix& dists, double lambda_ler);

struct LogitLoss {
  double loss = 0.0;
  Matrix grad_logits;
};

/// Local entropy regularization over the selected rows of `logits`.
/// use_map: mean over selected of CE(softmax(l/τ_o), softmax(l/τ_o + Δ)).
/// otherwise: -mean over selected of H(softmax(l/τ_o)).
/// With detach_target the first CE argument is the constant `targets` (softmax(l/τ_o) captured
/// before differentiation); otherwise it is recomputed from `logits` and differentiated too.
LogitLoss ler_loss(const Matrix& logits, const Matrix& targets, const SelectionState& selection,
                   const Vector& margins, double tau_o, bool use_map, bool detach_target = true);
LogitLoss ler_loss(const Matrix& logits, const SelectionState& selection, const Vector& margins,
                   double tau_o, bool use_map, bool detach_target = true);

/// Mean over pairs of KL(p_i || p'_i); view 2 is a constant.
DistributionLoss dkl_loss(const Matrix& dists_v1, const Matrix& dists_v2);

/// Fills `total` from the other fields of `parts`.
LossBreakdown total_loss(const LossBreakdown& parts, const LossWeights& weights);

}  // namespace gcdlab
