#include "gcdlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcdlab/error.hpp"

namespace gcdlab {

namespace {

void require_positive_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidParameter("temperature must be positive and finite");
  }
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// log used for derivative terms; p == 0 entries only ever get multiplied by p downstream.
double safe_log(double x) { return std::log(std::max(x, std::numeric_limits<double>::min())); }

}  // namespace

Vector softmax_temp(const Vector& logits, double tau) {
  require_positive_tau(tau);
  if (!logits.allFinite()) throw InvalidParameter("softmax_temp: non-finite logits");
  if (logits.size() == 0) return logits;
  const double max_logit = logits.maxCoeff();
  Vector out = ((logits.array() - max_logit) / tau).exp().matrix();
  out /= out.sum();
  return out;
}

Matrix softmax_rows(const Matrix& logits, double tau) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax_temp(logits.row(i).transpose(), tau).transpose();
  }
  return out;
}

Vector softmax_backward(const Vector& probs, const Vector& grad_probs, double tau) {
  require_positive_tau(tau);
  const double inner = probs.dot(grad_probs);
  return (probs.array() * (grad_probs.array() - inner) / tau).matrix();
}

Matrix softmax_backward_rows(const Matrix& probs, const Matrix& grad_probs, double tau) {
  if (probs.rows() != grad_probs.rows() || probs.cols() != grad_probs.cols()) {
    throw ShapeError("softmax_backward_rows: shape mismatch");
  }
  Matrix out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    out.row(i) =
        softmax_backward(probs.row(i).transpose(), grad_probs.row(i).transpose(), tau).transpose();
  }
  return out;
}

double entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) h -= xlogx(p[k]);
  return h;
}

Vector entropy_grad(const Vector& p) {
  Vector g(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) g[k] = -(safe_log(p[k]) + 1.0);
  return g;
}

double cross_entropy(const Vector& target, const Vector& pred) {
  if (target.size() != pred.size()) throw ShapeError("cross_entropy: size mismatch");
  double ce = 0.0;
  for (Eigen::Index k = 0; k < pred.size(); ++k) {
    if (target[k] != 0.0) ce -= target[k] * std::log(std::max(pred[k], kLogFloor));
  }
  return ce;
}

Vector cross_entropy_grad_pred(const Vector& target, const Vector& pred) {
  Vector g = Vector::Zero(pred.size());
  for (Eigen::Index k = 0; k < pred.size(); ++k) {
    if (pred[k] > kLogFloor) g[k] = -target[k] / pred[k];
  }
  return g;
}

double kl_div(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw ShapeError("kl_div: size mismatch");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(std::max(q[k], kLogFloor)));
  }
  return kl;
}

Vector kl_div_grad_p(const Vector& p, const Vector& q) {
  Vector g(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    g[k] = safe_log(p[k]) + 1.0 - std::log(std::max(q[k], kLogFloor));
  }
  return g;
}

Eigen::Index argmax(const Eigen::Ref<const Eigen::RowVectorXd>& values) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

bool is_distribution(const Vector& p, double tol) {
  if (!p.allFinite() || (p.array() < 0.0).any()) return false;
  return std::abs(p.sum() - 1.0) <= tol;
}

double guarded_norm(const Vector& v) {
  const double r = v.norm();
  return r < kNormGuard ? r + kNormGuard : r;
}

Vector l2_normalize(const Vector& v) { return v / guarded_norm(v); }

Vector l2_normalize_backward(const Vector& v, const Vector& grad_unit) {
  const double r = v.norm();
  const double s = guarded_norm(v);
  Vector out = grad_unit / s;
  if (r > 0.0) out -= v * (v.dot(grad_unit) / (r * s * s));
  return out;
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                        double step) {
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(const Vector& analytic, const Vector& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace gcdlab
