#pragma once

#include <Eigen/Dense>

#include <functional>

namespace gcdlab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Lower clamp applied to probabilities before taking a log in cross-entropy and KL.
inline constexpr double kLogFloor = 1e-12;
/// Norms below this value are regularized as ||v|| + kNormGuard.
inline constexpr double kNormGuard = 1e-8;

/// Softmax of logits / tau, computed with max-subtraction. Throws InvalidParameter for tau <= 0
/// and for non-finite logits.
Vector softmax_temp(const Vector& logits, double tau);

/// Row-wise softmax_temp.
Matrix softmax_rows(const Matrix& logits, double tau);

/// Pulls a gradient w.r.t. p = softmax(x / tau) back to x:
/// dx = (1/tau) * p ⊙ (g - <p, g>).
Vector softmax_backward(const Vector& probs, const Vector& grad_probs, double tau);
Matrix softmax_backward_rows(const Matrix& probs, const Matrix& grad_probs, double tau);

/// Shannon entropy in nats with 0·log 0 = 0.
double entropy(const Vector& p);
/// dH/dp. Entries where p == 0 get a finite value; they are annihilated by softmax_backward.
Vector entropy_grad(const Vector& p);

/// -Σ target_k log max(pred_k, kLogFloor).
double cross_entropy(const Vector& target, const Vector& pred);
/// Gradient of cross_entropy w.r.t. pred (zero where pred is clamped).
Vector cross_entropy_grad_pred(const Vector& target, const Vector& pred);

/// Σ p_k (log p_k - log max(q_k, kLogFloor)), with 0·log 0 = 0.
double kl_div(const Vector& p, const Vector& q);
/// Gradient of kl_div w.r.t. p (q held fixed).
Vector kl_div_grad_p(const Vector& p, const Vector& q);

/// Index of the largest entry; the lowest index wins ties.
Eigen::Index argmax(const Eigen::Ref<const Eigen::RowVectorXd>& values);

/// True if all entries are >= 0 and they sum to 1 within tol.
bool is_distribution(const Vector& p, double tol = 1e-9);

/// Norm used as the normalization denominator: ||v|| or ||v|| + kNormGuard below the guard.
double guarded_norm(const Vector& v);
Vector l2_normalize(const Vector& v);
/// Vector-Jacobian product of v -> v / guarded_norm(v), evaluated at v.
Vector l2_normalize_backward(const Vector& v, const Vector& grad_unit);

/// Central-difference gradient of f at x.
Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                        double step = 1e-5);

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
double max_relative_error(const Vector& analytic, const Vector& numeric, double floor = 1e-6);

}  // namespace gcdlab
