#include "gcdlab/config.hpp"

#include <cmath>

#include "gcdlab/error.hpp"

namespace gcdlab {

namespace {

void require(bool ok, const std::string& constraint) {
  if (!ok) throw RangeError("constraint violated: " + constraint);
}

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

}  // namespace

void TrainConfig::validate() const {
  require(lambda >= 0.0 && lambda <= 1.0, "0 <= lambda <= 1");
  require(std::isfinite(epsilon), "epsilon finite");
  require(alpha >= 0.0 && std::isfinite(alpha), "alpha >= 0");
  require(beta >= 0.0 && std::isfinite(beta), "beta >= 0");
  require(delta > 0.0 && delta <= 1.0, "0 < delta <= 1");
  require(lambda_ler >= 0.0 && std::isfinite(lambda_ler), "lambda_ler >= 0");
  require(positive(tau_u), "tau_u > 0");
  require(positive(tau_c), "tau_c > 0");
  require(positive(tau_s), "tau_s > 0");
  require(positive(tau_t_start), "tau_t_start > 0");
  require(positive(tau_t_end), "tau_t_end > 0");
  require(tau_t_warmup_epochs >= 0, "tau_t_warmup_epochs >= 0");
  require(positive(tau_o), "tau_o > 0");
  require(ema_momentum > 0.0 && ema_momentum < 1.0, "0 < ema_momentum < 1");
  require(positive(lr0), "lr0 > 0");
  require(momentum >= 0.0 && momentum < 1.0, "0 <= momentum < 1");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay >= 0");
  require(epochs >= 0, "epochs >= 0");
  require(batch_size >= 2, "batch_size >= 2");
  require(!toggles.map || toggles.ler, "toggles.map requires toggles.ler");
  require(hidden_dim >= 1 && feat_dim >= 1 && proj_dim >= 1, "model dimensions >= 1");
  require(augment_strength >= 0.0 && std::isfinite(augment_strength), "augment_strength >= 0");
  require(augment_dropout >= 0.0 && augment_dropout < 1.0, "0 <= augment_dropout < 1");
  require(lr_safety_grad_norm >= 0.0, "lr_safety_grad_norm >= 0");
}

}  // namespace gcdlab
