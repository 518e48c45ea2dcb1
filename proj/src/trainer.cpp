#include "gcdlab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "gcdlab/error.hpp"
#include "gcdlab/format.hpp"

namespace gcdlab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kInitStream = 0x1000;
constexpr std::uint64_t kBatchStream = 0x2000;

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

void check_finite(const LossBreakdown& l) {
  const std::pair<const char*, double> terms[] = {
      {"rep_unsup", l.rep_unsup}, {"rep_sup", l.rep_sup},           {"cls_unsup", l.cls_unsup},
      {"cls_sup", l.cls_sup},     {"mean_entropy", l.mean_entropy}, {"dkl", l.dkl},
      {"ler", l.ler},             {"total", l.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw NonFiniteLoss(std::string("non-finite loss term: ") + name + " = " + format_double(value));
    }
  }
}

template <typename Fn>
void zip_tensors(ModelParams& a, ModelParams& b, const ModelParams& c, Fn&& fn) {
  fn(a.w1, b.w1, c.w1);
  fn(a.b1, b.b1, c.b1);
  fn(a.w2, b.w2, c.w2);
  fn(a.b2, b.b2, c.b2);
  fn(a.wp, b.wp, c.wp);
  fn(a.bp, b.bp, c.bp);
  fn(a.prototypes, b.prototypes, c.prototypes);
}

LossBreakdown accumulate(const LossBreakdown& a, const LossBreakdown& b, double w) {
  LossBreakdown out = a;
  out.rep_unsup += w * b.rep_unsup;
  out.rep_sup += w * b.rep_sup;
  out.cls_unsup += w * b.cls_unsup;
  out.cls_sup += w * b.cls_sup;
  out.mean_entropy += w * b.mean_entropy;
  out.dkl += w * b.dkl;
  out.ler += w * b.ler;
  out.total += w * b.total;
  return out;
}

}  // namespace

double cosine_lr(int epoch, int total, double lr0) {
  if (total <= 0) return lr0;
  if (epoch < 0 || epoch > total) throw InvalidParameter("cosine_lr: epoch outside [0, total]");
  const double lr = lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total));
  return std::max(lr, 0.0);
}

double teacher_temperature(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw InvalidParameter("teacher_temperature: negative epoch");
  if (epoch >= cfg.tau_t_warmup_epochs) return cfg.tau_t_end;
  const double ramp = 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / cfg.tau_t_warmup_epochs));
  return cfg.tau_t_end + (cfg.tau_t_start - cfg.tau_t_end) * ramp;
}

LossWeights loss_weights(const TrainConfig& cfg) {
  return LossWeights{cfg.lambda, cfg.epsilon, cfg.alpha, cfg.toggles.ler ? cfg.beta : 0.0};
}

Matrix stacked_student_dists(const ForwardCache& cache, double tau_s) {
  return stack_rows(softmax_rows(cache.view1.logits, tau_s), softmax_rows(cache.view2.logits, tau_s));
}

std::vector<bool> stacked_mask(const Batch& batch) {
  std::vector<bool> mask(batch.mask);
  mask.insert(mask.end(), batch.mask.begin(), batch.mask.end());
  return mask;
}

StepTargets detach_targets(const ForwardCache& cache, const Batch& batch, const TrainConfig& cfg,
                           double tau_t, const std::vector<bool>& known_lookup,
                           const Vector& margins) {
  StepTargets t;
  t.teacher = teacher_targets(cache.view1.logits, cache.view2.logits, tau_t);
  t.dkl_reference = softmax_rows(cache.view2.logits, cfg.tau_s);
  const Matrix logits = stack_rows(cache.view1.logits, cache.view2.logits);
  t.ler_targets = softmax_rows(logits, cfg.tau_o);
  t.selection = select_known(stacked_student_dists(cache, cfg.tau_s), stacked_mask(batch),
                             known_lookup, cfg.delta);
  t.margins = margins;
  return t;
}

ObjectiveResult evaluate_objective(const ModelParams& params, const ForwardCache& cache,
                                   const Batch& batch, const TrainConfig& cfg,
                                   const StepTargets& targets) {
  const LossWeights w = loss_weights(cfg);
  const double rep_u_w = w.alpha * (1.0 - w.lambda);
  const double rep_s_w = w.alpha * w.lambda;
  const double cls_u_w = w.alpha * (1.0 - w.lambda);
  const double cls_s_w = w.alpha * w.lambda;

  const ViewCache& v1 = cache.view1;
  const ViewCache& v2 = cache.view2;
  const Eigen::Index b = v1.logits.rows();
  const Eigen::Index k = v1.logits.cols();

  LossBreakdown parts;
  ViewGrads g1{Matrix::Zero(b, k), Matrix::Zero(b, v1.z.cols())};
  ViewGrads g2{Matrix::Zero(b, k), Matrix::Zero(b, v2.z.cols())};

  const ContrastiveResult rep_u = unsup_contrastive(v1.z, v2.z, cfg.tau_u);
  parts.rep_unsup = rep_u.loss;
  g1.z += rep_u_w * rep_u.grad_z1;
  g2.z += rep_u_w * rep_u.grad_z2;

  const ContrastiveResult rep_s = sup_contrastive(v1.z, v2.z, batch.labels, batch.mask, cfg.tau_c);
  parts.rep_sup = rep_s.loss;
  if (rep_s.anchors > 0) {
    g1.z += rep_s_w * rep_s.grad_z1;
    g2.z += rep_s_w * rep_s.grad_z2;
  }

  const ClassificationResult cls = classification_losses(v1.logits, v2.logits, batch.labels,
                                                         batch.mask, cfg.tau_s, targets.teacher);
  parts.cls_unsup = cls.cls_unsup;
  parts.cls_sup = cls.cls_sup;
  g1.logits += cls_u_w * cls.grad_unsup_v1 + cls_s_w * cls.grad_sup_v1;
  g2.logits += cls_u_w * cls.grad_unsup_v2 + cls_s_w * cls.grad_sup_v2;

  // Terms defined on the student distributions are pulled back through softmax(. / tau_s).
  const Matrix p1 = softmax_rows(v1.logits, cfg.tau_s);
  const Matrix p2 = softmax_rows(v2.logits, cfg.tau_s);
  const DistributionLoss me = mean_entropy_reg(p1, p2);
  parts.mean_entropy = me.value;
  Matrix grad_p1 = -cls_u_w * w.epsilon * me.grad_v1;
  Matrix grad_p2 = -cls_u_w * w.epsilon * me.grad_v2;

  if (cfg.toggles.dkl) {
    const DistributionLoss dkl = dkl_loss(p1, targets.dkl_reference);
    parts.dkl = dkl.value;
    grad_p1 += cls_u_w * dkl.grad_v1;
  }
  g1.logits += softmax_backward_rows(p1, grad_p1, cfg.tau_s);
  g2.logits += softmax_backward_rows(p2, grad_p2, cfg.tau_s);

  if (cfg.toggles.ler && targets.selection.selected_count() > 0) {
    const Matrix logits = stack_rows(v1.logits, v2.logits);
    const LogitLoss ler = ler_loss(logits, targets.ler_targets, targets.selection, targets.margins,
                                   cfg.tau_o, cfg.toggles.map, cfg.ler_detach_target);
    parts.ler = ler.loss;
    g1.logits += w.beta * ler.grad_logits.topRows(b);
    g2.logits += w.beta * ler.grad_logits.bottomRows(b);
  }

  ObjectiveResult r;
  r.breakdown = total_loss(parts, w);
  check_finite(r.breakdown);
  r.grads = backward(params, cache, g1, g2);
  return r;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return splitmix64(splitmix64(seed ^ kBatchStream) + static_cast<std::uint64_t>(epoch));
}

TrainState init_state(const GcdDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.params = init_params(dataset.dim(), cfg.hidden_dim, cfg.feat_dim, cfg.proj_dim,
                         dataset.num_classes(), splitmix64(cfg.seed ^ kInitStream));
  s.velocity = s.params.zeros_like();
  s.ema = EmaState::uniform(dataset.num_classes(), cfg.ema_momentum);
  s.seed = cfg.seed;
  s.lr0 = cfg.lr0;
  return s;
}

LossBreakdown training_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                            const std::vector<bool>& known_lookup, double lr, double tau_t) {
  const ForwardCache cache = forward(state.params, batch);

  const MarginUpdate update =
      update_ema_and_margins(state.ema, stacked_student_dists(cache, cfg.tau_s), cfg.lambda_ler);
  state.ema = update.state;
  ++state.ema_updates;

  const StepTargets targets = detach_targets(cache, batch, cfg, tau_t, known_lookup, update.margins);
  const ObjectiveResult obj = evaluate_objective(state.params, cache, batch, cfg, targets);

  zip_tensors(state.params, state.velocity, obj.grads, [&](auto& param, auto& vel, const auto& grad) {
    vel = cfg.momentum * vel + grad + cfg.weight_decay * param;
    param -= lr * vel;
  });
  if (!state.params.all_finite()) throw NonFiniteLoss("parameters became non-finite after update");
  return obj.breakdown;
}

TrainState train(const GcdDataset& dataset, const TrainConfig& cfg, const TrainHooks& hooks) {
  dataset.validate();
  TrainState state = init_state(dataset, cfg);
  const std::vector<bool> known = dataset.known_lookup();
  const AugmentOptions augment{cfg.augment_strength, cfg.augment_dropout};
  const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), dataset.size());
  auto log = [&](const std::string& msg) {
    if (hooks.log) hooks.log(msg);
  };

  if (cfg.lr_safety_grad_norm > 0.0 && cfg.epochs > 0 && state.lr0 > kSafeLearningRate) {
    const Batch probe = make_batches(dataset, batch_size, augment, epoch_seed(state.seed, 0)).front();
    const ForwardCache cache = forward(state.params, probe);
    const MarginUpdate m = update_ema_and_margins(state.ema, stacked_student_dists(cache, cfg.tau_s),
                                                  cfg.lambda_ler);
    const StepTargets targets =
        detach_targets(cache, probe, cfg, teacher_temperature(0, cfg), known, m.margins);
    const double norm = evaluate_objective(state.params, cache, probe, cfg, targets).grads.flatten().norm();
    if (norm > cfg.lr_safety_grad_norm) {
      state.lr0 = kSafeLearningRate;
      state.lr_capped = true;
      log("initial gradient norm " + format_double(norm) + " exceeds " +
          format_double(cfg.lr_safety_grad_norm) + "; lr0 lowered to " + format_double(state.lr0));
    }
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, state.lr0);
    const double tau_t = teacher_temperature(epoch, cfg);
    const std::vector<Batch> batches =
        make_batches(dataset, batch_size, augment, epoch_seed(state.seed, epoch));

    LossBreakdown mean;
    double seen = 0.0;
    for (const Batch& batch : batches) {
      // A trailing batch of one sample cannot form a contrastive pair.
      if (batch.size() < 2) continue;
      const LossBreakdown l = training_step(state, batch, cfg, known, lr, tau_t);
      mean = accumulate(mean, l, static_cast<double>(batch.size()));
      seen += static_cast<double>(batch.size());
    }
    if (seen > 0.0) mean = accumulate(LossBreakdown{}, mean, 1.0 / seen);

    EpochMetrics metrics = evaluate(state.params, dataset, cfg);
    metrics.epoch = epoch;
    metrics.loss = mean;
    metrics.lr = lr;
    metrics.tau_t = tau_t;
    state.history.push_back(metrics);
    state.epoch = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(metrics);

    if (hooks.checkpoint_every > 0 && (epoch + 1) % hooks.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.bin", epoch + 1);
      save_checkpoint(hooks.checkpoint_dir / name, state.params, hooks.config_hash);
    }
  }
  return state;
}

}  // namespace gcdlab
