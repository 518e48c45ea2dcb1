#include "gcdlab/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gcdlab/error.hpp"

namespace gcdlab {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch");
  }
}

void require_positive(double tau, const char* what) {
  if (!(tau > 0.0)) throw InvalidParameter(std::string(what) + " must be positive");
}

Vector row(const Matrix& m, Eigen::Index i) { return m.row(i).transpose(); }

// Cross-view InfoNCE core shared by the unsupervised and supervised variants. For each anchor
// index in `anchors`, the candidates `pool` form the denominator and `positives[a]` the
// numerators; the loss of an anchor is the mean over its positives.
ContrastiveResult info_nce(const Matrix& z1, const Matrix& z2, double tau,
                           const std::vector<Eigen::Index>& anchors,
                           const std::vector<Eigen::Index>& pool,
                           const std::vector<std::vector<Eigen::Index>>& positives) {
  ContrastiveResult r;
  r.grad_z1 = Matrix::Zero(z1.rows(), z1.cols());
  r.grad_z2 = Matrix::Zero(z2.rows(), z2.cols());
  std::size_t active = 0;
  for (std::size_t a = 0; a < anchors.size(); ++a) active += positives[a].empty() ? 0 : 1;
  r.anchors = active;
  if (active == 0) return r;

  const double inv_anchors = 1.0 / static_cast<double>(active);
  Vector scores(static_cast<Eigen::Index>(pool.size()));
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (positives[a].empty()) continue;
    const Eigen::Index i = anchors[a];
    for (std::size_t n = 0; n < pool.size(); ++n) {
      scores[static_cast<Eigen::Index>(n)] = z1.row(i).dot(z2.row(pool[n])) / tau;
    }
    const double max_score = scores.maxCoeff();
    const Vector e = (scores.array() - max_score).exp().matrix();
    const double sum = e.sum();
    const double lse = max_score + std::log(sum);
    const Vector soft = e / sum;

    const double inv_pos = 1.0 / static_cast<double>(positives[a].size());
    // dloss/dscore_n = softmax_n - [n is a positive] / |positives|
    Vector dscore = soft;
    for (Eigen::Index q : positives[a]) {
      const double s_q = z1.row(i).dot(z2.row(q)) / tau;
      r.loss += inv_anchors * inv_pos * (lse - s_q);
      const auto pos = std::find(pool.begin(), pool.end(), q) - pool.begin();
      dscore[pos] -= inv_pos;
    }
    dscore *= inv_anchors / tau;
    for (std::size_t n = 0; n < pool.size(); ++n) {
      const double w = dscore[static_cast<Eigen::Index>(n)];
      r.grad_z1.row(i) += w * z2.row(pool[n]);
      r.grad_z2.row(pool[n]) += w * z1.row(i);
    }
  }
  return r;
}

}  // namespace

std::size_t SelectionState::selected_count() const {
  return static_cast<std::size_t>(std::count(known_mask.begin(), known_mask.end(), true));
}

EmaState EmaState::uniform(int num_classes, double momentum) {
  if (num_classes < 1) throw InvalidParameter("EmaState: need at least one class");
  if (!(momentum > 0.0 && momentum < 1.0)) throw InvalidParameter("EMA momentum must lie in (0, 1)");
  return EmaState{Vector::Constant(num_classes, 1.0 / num_classes), momentum};
}

ContrastiveResult unsup_contrastive(const Matrix& z1, const Matrix& z2, double tau_u) {
  require_same_shape(z1, z2, "unsup_contrastive");
  require_positive(tau_u, "tau_u");
  if (z1.rows() < 2) throw InvalidParameter("unsup_contrastive: batch needs at least 2 samples");
  std::vector<Eigen::Index> all(static_cast<std::size_t>(z1.rows()));
  std::vector<std::vector<Eigen::Index>> positives(all.size());
  for (Eigen::Index i = 0; i < z1.rows(); ++i) {
    all[static_cast<std::size_t>(i)] = i;
    positives[static_cast<std::size_t>(i)] = {i};
  }
  return info_nce(z1, z2, tau_u, all, all, positives);
}

ContrastiveResult sup_contrastive(const Matrix& z1, const Matrix& z2, const std::vector<int>& labels,
                                  const std::vector<bool>& labeled, double tau_c) {
  require_same_shape(z1, z2, "sup_contrastive");
  require_positive(tau_c, "tau_c");
  const auto b = static_cast<std::size_t>(z1.rows());
  if (labels.size() != b || labeled.size() != b) throw ShapeError("sup_contrastive: label size");

  std::vector<Eigen::Index> pool;
  for (std::size_t i = 0; i < b; ++i) {
    if (labeled[i]) pool.push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<std::vector<Eigen::Index>> positives(pool.size());
  for (std::size_t a = 0; a < pool.size(); ++a) {
    for (Eigen::Index q : pool) {
      if (q != pool[a] && labels[static_cast<std::size_t>(q)] == labels[static_cast<std::size_t>(pool[a])]) {
        positives[a].push_back(q);
      }
    }
  }
  return info_nce(z1, z2, tau_c, pool, pool, positives);
}

double rep_loss(double unsup, double sup, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw InvalidParameter("lambda must lie in [0, 1]");
  return (1.0 - lambda) * unsup + lambda * sup;
}

TeacherTargets teacher_targets(const Matrix& logits_v1, const Matrix& logits_v2, double tau_t) {
  require_same_shape(logits_v1, logits_v2, "teacher_targets");
  return TeacherTargets{softmax_rows(logits_v2, tau_t), softmax_rows(logits_v1, tau_t)};
}

ClassificationResult classification_losses(const Matrix& logits_v1, const Matrix& logits_v2,
                                           const std::vector<int>& labels,
                                           const std::vector<bool>& labeled, double tau_s,
                                           const TeacherTargets& teacher) {
  require_same_shape(logits_v1, logits_v2, "classification_losses");
  require_same_shape(logits_v1, teacher.view1, "classification_losses teacher");
  require_same_shape(logits_v2, teacher.view2, "classification_losses teacher");
  require_positive(tau_s, "tau_s");
  const Eigen::Index b = logits_v1.rows();
  const Eigen::Index k = logits_v1.cols();
  if (labels.size() != static_cast<std::size_t>(b) || labeled.size() != static_cast<std::size_t>(b)) {
    throw ShapeError("classification_losses: label size");
  }

  ClassificationResult r;
  r.teacher = teacher;
  r.grad_unsup_v1 = Matrix::Zero(b, k);
  r.grad_unsup_v2 = Matrix::Zero(b, k);
  r.grad_sup_v1 = Matrix::Zero(b, k);
  r.grad_sup_v2 = Matrix::Zero(b, k);

  const auto n_labeled = static_cast<double>(std::count(labeled.begin(), labeled.end(), true));
  const double inv_all = 1.0 / (2.0 * static_cast<double>(b));
  const double inv_sup = n_labeled > 0 ? 1.0 / (2.0 * n_labeled) : 0.0;

  auto process = [&](const Matrix& logits, const Matrix& targets, Matrix& grad_u, Matrix& grad_s) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const Vector p = softmax_temp(row(logits, i), tau_s);
      const Vector q = row(targets, i);
      r.cls_unsup += inv_all * cross_entropy(q, p);
      grad_u.row(i) =
          inv_all * softmax_backward(p, cross_entropy_grad_pred(q, p), tau_s).transpose();
      if (labeled[static_cast<std::size_t>(i)]) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= k) throw ShapeError("classification_losses: label out of range");
        Vector onehot = Vector::Zero(k);
        onehot[y] = 1.0;
        r.cls_sup += inv_sup * cross_entropy(onehot, p);
        grad_s.row(i) =
            inv_sup * softmax_backward(p, cross_entropy_grad_pred(onehot, p), tau_s).transpose();
      }
    }
  };
  process(logits_v1, teacher.view1, r.grad_unsup_v1, r.grad_sup_v1);
  process(logits_v2, teacher.view2, r.grad_unsup_v2, r.grad_sup_v2);
  return r;
}

ClassificationResult classification_losses(const Matrix& logits_v1, const Matrix& logits_v2,
                                           const std::vector<int>& labels,
                                           const std::vector<bool>& labeled, double tau_s,
                                           double tau_t) {
  return classification_losses(logits_v1, logits_v2, labels, labeled, tau_s,
                               teacher_targets(logits_v1, logits_v2, tau_t));
}

DistributionLoss mean_entropy_reg(const Matrix& dists_v1, const Matrix& dists_v2) {
  require_same_shape(dists_v1, dists_v2, "mean_entropy_reg");
  const Eigen::Index b = dists_v1.rows();
  if (b == 0) throw InvalidParameter("mean_entropy_reg: empty batch");
  const double inv = 1.0 / (2.0 * static_cast<double>(b));
  const Vector mean = (dists_v1.colwise().sum() + dists_v2.colwise().sum()).transpose() * inv;

  DistributionLoss r;
  r.value = entropy(mean);
  const Vector g = entropy_grad(mean) * inv;
  r.grad_v1 = g.transpose().replicate(b, 1);
  r.grad_v2 = r.grad_v1;
  return r;
}

SelectionState select_known(const Matrix& dists, const std::vector<bool>& labeled,
                            const std::vector<bool>& known_lookup, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidParameter("delta must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(dists.rows());
  if (labeled.size() != n) throw ShapeError("select_known: mask size");
  if (known_lookup.size() != static_cast<std::size_t>(dists.cols())) {
    throw ShapeError("select_known: known lookup must have one entry per class");
  }
  SelectionState s;
  s.high_conf.resize(n);
  s.pred_labels.resize(n);
  s.known_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index arg = argmax(dists.row(static_cast<Eigen::Index>(i)));
    const double best = dists(static_cast<Eigen::Index>(i), arg);
    s.high_conf[i] = best >= delta;
    s.pred_labels[i] = static_cast<int>(arg);
    s.known_mask[i] = !labeled[i] && s.high_conf[i] && known_lookup[static_cast<std::size_t>(arg)];
  }
  return s;
}

MarginUpdate update_ema_and_margins(const EmaState& state, const Matrix& dists, double lambda_ler) {
  if (state.p_tilde.size() != dists.cols()) throw ShapeError("update_ema_and_margins: class count");
  if (dists.rows() == 0) throw InvalidParameter("update_ema_and_margins: empty batch");
  if (lambda_ler < 0.0) throw InvalidParameter("lambda_ler must be >= 0");
  MarginUpdate u;
  u.state.momentum = state.momentum;
  const Vector batch_mean = dists.colwise().mean().transpose();
  u.state.p_tilde = state.momentum * state.p_tilde + (1.0 - state.momentum) * batch_mean;
  u.state.p_tilde /= u.state.p_tilde.sum();
  u.margins.resize(u.state.p_tilde.size());
  for (Eigen::Index j = 0; j < u.margins.size(); ++j) {
    u.margins[j] = lambda_ler * -std::log(std::max(u.state.p_tilde[j], kLogFloor));
  }
  return u;
}

LogitLoss ler_loss(const Matrix& logits, const Matrix& targets, const SelectionState& selection,
                   const Vector& margins, double tau_o, bool use_map, bool detach_target) {
  require_positive(tau_o, "tau_o");
  require_same_shape(logits, targets, "ler_loss");
  const auto n = static_cast<std::size_t>(logits.rows());
  if (selection.known_mask.size() != n) throw ShapeError("ler_loss: selection size");
  if (margins.size() != logits.cols()) throw ShapeError("ler_loss: margin size");

  LogitLoss r;
  r.grad_logits = Matrix::Zero(logits.rows(), logits.cols());
  const std::size_t selected = selection.selected_count();
  if (selected == 0) return r;
  const double inv = 1.0 / static_cast<double>(selected);

  for (std::size_t i = 0; i < n; ++i) {
    if (!selection.known_mask[i]) continue;
    const auto ri = static_cast<Eigen::Index>(i);
    const Vector scaled = row(logits, ri) / tau_o;
    if (use_map) {
      // prediction = softmax(l / τ_o + Δ); d/dl = (1/τ_o) d/d(scaled)
      const Vector pred = softmax_temp(scaled + margins, 1.0);
      const Vector q = detach_target ? row(targets, ri) : softmax_temp(scaled, 1.0);
      r.loss += inv * cross_entropy(q, pred);
      Vector grad = softmax_backward(pred, cross_entropy_grad_pred(q, pred), 1.0);
      if (!detach_target) {
        // dCE/dq = -log pred, pulled back through q = softmax(l / τ_o)
        const Vector log_pred = pred.array().max(kLogFloor).log().matrix();
        grad += softmax_backward(q, -log_pred, 1.0);
      }
      r.grad_logits.row(ri) = inv * grad.transpose() / tau_o;
    } else {
      const Vector p = softmax_temp(scaled, 1.0);
      r.loss -= inv * entropy(p);
      r.grad_logits.row(ri) = -inv * softmax_backward(p, entropy_grad(p), 1.0).transpose() / tau_o;
    }
  }
  return r;
}

LogitLoss ler_loss(const Matrix& logits, const SelectionState& selection, const Vector& margins,
                   double tau_o, bool use_map, bool detach_target) {
  require_positive(tau_o, "tau_o");
  return ler_loss(logits, softmax_rows(logits, tau_o), selection, margins, tau_o, use_map,
                  detach_target);
}

DistributionLoss dkl_loss(const Matrix& dists_v1, const Matrix& dists_v2) {
  require_same_shape(dists_v1, dists_v2, "dkl_loss");
  const Eigen::Index b = dists_v1.rows();
  DistributionLoss r;
  r.grad_v1 = Matrix::Zero(b, dists_v1.cols());
  r.grad_v2 = Matrix::Zero(b, dists_v1.cols());
  if (b == 0) return r;
  const double inv = 1.0 / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector p = row(dists_v1, i);
    const Vector q = row(dists_v2, i);
    r.value += inv * kl_div(p, q);
    r.grad_v1.row(i) = inv * kl_div_grad_p(p, q).transpose();
  }
  return r;
}

LossBreakdown total_loss(const LossBreakdown& parts, const LossWeights& w) {
  if (w.alpha < 0.0 || w.beta < 0.0) throw InvalidParameter("alpha and beta must be >= 0");
  LossBreakdown out = parts;
  const double rep = rep_loss(parts.rep_unsup, parts.rep_sup, w.lambda);
  const double cls = (1.0 - w.lambda) * (parts.cls_unsup - w.epsilon * parts.mean_entropy + parts.dkl) +
                     w.lambda * parts.cls_sup;
  out.total = w.alpha * (rep + cls) + w.beta * parts.ler;
  return out;
}

}  // namespace gcdlab
