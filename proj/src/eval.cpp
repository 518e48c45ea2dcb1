#include "gcdlab/eval.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "gcdlab/error.hpp"

namespace gcdlab {

std::vector<int> max_weight_assignment(const Matrix& weights) {
  const auto n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw ShapeError("max_weight_assignment: matrix must be square");
  if (n > kMaxAssignmentSize) {
    throw SizingError("assignment of size " + std::to_string(n) + " exceeds capacity " +
                      std::to_string(kMaxAssignmentSize));
  }
  if (n == 0) return {};

  // Shortest augmenting paths on cost = -weights. Index 0 is a virtual column/row.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match_col(static_cast<std::size_t>(n) + 1, 0);  // column -> row
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  auto cost = [&](int r, int c) { return -weights(r - 1, c - 1); };

  for (int row = 1; row <= n; ++row) {
    match_col[0] = row;
    int col0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(col0)] = true;
      const int r0 = match_col[static_cast<std::size_t>(col0)];
      double delta = inf;
      int col1 = 0;
      for (int c = 1; c <= n; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        if (used[cs]) continue;
        const double reduced = cost(r0, c) - u[static_cast<std::size_t>(r0)] - v[cs];
        if (reduced < minv[cs]) {
          minv[cs] = reduced;
          way[cs] = col0;
        }
        if (minv[cs] < delta) {
          delta = minv[cs];
          col1 = c;
        }
      }
      for (int c = 0; c <= n; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        if (used[cs]) {
          u[static_cast<std::size_t>(match_col[cs])] += delta;
          v[cs] -= delta;
        } else {
          minv[cs] -= delta;
        }
      }
      col0 = col1;
    } while (match_col[static_cast<std::size_t>(col0)] != 0);
    do {
      const int col1 = way[static_cast<std::size_t>(col0)];
      match_col[static_cast<std::size_t>(col0)] = match_col[static_cast<std::size_t>(col1)];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int c = 1; c <= n; ++c) {
    assignment[static_cast<std::size_t>(match_col[static_cast<std::size_t>(c)] - 1)] = c - 1;
  }
  return assignment;
}

AccuracyResult hungarian_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                  const std::vector<bool>& known_lookup) {
  if (pred.size() != truth.size()) throw ShapeError("hungarian_accuracy: length mismatch");
  AccuracyResult r;
  if (pred.empty()) return r;

  int size = static_cast<int>(known_lookup.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0) throw InvalidParameter("hungarian_accuracy: negative id");
    size = std::max({size, pred[i] + 1, truth[i] + 1});
  }
  if (size > kMaxAssignmentSize) {
    throw SizingError("hungarian_accuracy: " + std::to_string(size) + " ids exceed capacity");
  }
  Matrix counts = Matrix::Zero(size, size);
  for (std::size_t i = 0; i < pred.size(); ++i) counts(pred[i], truth[i]) += 1.0;
  r.assignment = max_weight_assignment(counts);

  auto is_old = [&](int c) {
    return static_cast<std::size_t>(c) < known_lookup.size() && known_lookup[static_cast<std::size_t>(c)];
  };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool hit = r.assignment[static_cast<std::size_t>(pred[i])] == truth[i];
    r.correct_all += hit ? 1 : 0;
    if (is_old(truth[i])) {
      ++r.count_old;
      r.correct_old += hit ? 1 : 0;
    } else {
      ++r.count_new;
      r.correct_new += hit ? 1 : 0;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  r.acc_all = ratio(r.correct_all, pred.size());
  r.acc_old = ratio(r.correct_old, r.count_old);
  r.acc_new = ratio(r.correct_new, r.count_new);
  return r;
}

namespace {

double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest center per point (lowest index on ties); returns the inertia.
double assign_points(const Matrix& x, const Matrix& centers, std::vector<int>& assignment) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = squared_distance(x, i, centers, 0);
    for (Eigen::Index c = 1; c < centers.rows(); ++c) {
      const double d = squared_distance(x, i, centers, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

namespace {

KMeansResult kmeans_single(const Matrix& features, int k, std::uint64_t seed, int max_iters) {
  const Eigen::Index n = features.rows();
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  Matrix centers(k, features.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = features.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = squared_distance(features, i, centers, 0);
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> weighted(d2.begin(), d2.end());
      pick = weighted(rng);
    } else {
      pick = first(rng);
    }
    centers.row(c) = features.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, squared_distance(features, i, centers, c));
    }
  }

  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> next(static_cast<std::size_t>(n), 0);
  assign_points(features, centers, next);
  for (int iter = 0; iter < max_iters; ++iter) {
    if (next == r.assignment) break;
    r.assignment = next;

    Matrix sums = Matrix::Zero(k, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = r.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += features.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index farthest = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = squared_distance(features, i, centers, r.assignment[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      centers.row(c) = features.row(farthest);
      --counts[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(farthest)])];
      r.assignment[static_cast<std::size_t>(farthest)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
    }
    r.inertia_history.push_back(assign_points(features, centers, next));
  }
  r.centers = centers;
  return r;
}

}  // namespace

KMeansResult kmeans(const Matrix& features, int k, std::uint64_t seed, int max_iters,
                    int restarts) {
  if (k < 1 || features.rows() < k) throw InvalidParameter("kmeans: need 1 <= K <= N");
  if (max_iters < 1) throw InvalidParameter("kmeans: max_iters must be >= 1");
  if (restarts < 1) throw InvalidParameter("kmeans: restarts must be >= 1");
  std::mt19937_64 seeds(seed);
  KMeansResult best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    KMeansResult run = kmeans_single(features, k, seeds(), max_iters);
    const double inertia = run.inertia_history.empty() ? 0.0 : run.inertia_history.back();
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(run);
    }
  }
  return best;
}

std::size_t count_known_high_conf(const Matrix& dists, const std::vector<bool>& known_lookup,
                                  double delta) {
  if (known_lookup.size() != static_cast<std::size_t>(dists.cols())) {
    throw ShapeError("count_known_high_conf: known lookup must have one entry per class");
  }
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < dists.rows(); ++i) {
    const Eigen::Index arg = argmax(dists.row(i));
    const double best = dists(i, arg);
    if (best >= delta && known_lookup[static_cast<std::size_t>(arg)]) ++count;
  }
  return count;
}

EpochMetrics evaluate(const ModelParams& params, const GcdDataset& dataset, const TrainConfig& cfg) {
  const std::vector<std::size_t> idx = dataset.unlabeled_indices();
  Matrix x(static_cast<Eigen::Index>(idx.size()), dataset.dim());
  std::vector<int> truth(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = dataset.features.row(static_cast<Eigen::Index>(idx[i]));
    truth[i] = dataset.labels[idx[i]];
  }
  const ViewCache cache = forward_view(params, x, normalized_prototypes(params));
  const Matrix dists = softmax_rows(cache.logits, cfg.tau_s);
  std::vector<int> pred(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    pred[i] = static_cast<int>(argmax(dists.row(static_cast<Eigen::Index>(i))));
  }
  const std::vector<bool> known = dataset.known_lookup();
  const AccuracyResult acc = hungarian_accuracy(pred, truth, known);

  EpochMetrics m;
  m.acc_all = acc.acc_all;
  m.acc_old = acc.acc_old;
  m.acc_new = acc.acc_new;
  m.known_count = count_known_high_conf(dists, known, cfg.delta);
  return m;
}

}  // namespace gcdlab
