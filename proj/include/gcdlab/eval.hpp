#pragma once

#include <cstdint>
#include <vector>

#include "gcdlab/config.hpp"
#include "gcdlab/losses.hpp"
#include "gcdlab/model.hpp"
#include "gcdlab/synthdata.hpp"

namespace gcdlab {

struct EpochMetrics {
  int epoch = 0;
  double acc_all = 0.0;
  double acc_old = 0.0;
  double acc_new = 0.0;
  LossBreakdown loss;  // epoch mean
  std::size_t known_count = 0;
  double lr = 0.0;
  double tau_t = 0.0;
};

/// Largest square problem accepted by the assignment solver.
inline constexpr int kMaxAssignmentSize = 4096;

/// Maximum-weight perfect matching on a square matrix (Kuhn-Munkres with potentials, O(n^3)).
/// Returns the column assigned to each row.
std::vector<int> max_weight_assignment(const Matrix& weights);

struct AccuracyResult {
  double acc_all = 0.0;
  double acc_old = 0.0;
  double acc_new = 0.0;
  std::vector<int> assignment;  // cluster id -> class id
  std::size_t correct_all = 0;
  std::size_t correct_old = 0;
  std::size_t correct_new = 0;
  std::size_t count_old = 0;
  std::size_t count_new = 0;
};

/// Clustering accuracy under one global optimal cluster-to-class matching. Old/New accuracies
/// restrict to samples whose true class is / is not in Y_l but reuse the same matching.
/// A subset with no samples reports accuracy 0.
AccuracyResult hungarian_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                  const std::vector<bool>& known_lookup);

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centers;
  std::vector<double> inertia_history;  // after each Lloyd iteration
};

/// k-means++ seeding then Lloyd iterations until the assignment stops changing or max_iters.
/// Empty clusters are re-seeded at the point farthest from its current center. The whole
/// procedure runs `restarts` times from derived seeds and the lowest final inertia wins.
KMeansResult kmeans(const Matrix& features, int k, std::uint64_t seed, int max_iters = 300,
                    int restarts = 10);

/// Rows with max probability >= delta whose argmax is a known class.
std::size_t count_known_high_conf(const Matrix& dists, const std::vector<bool>& known_lookup,
                                  double delta);

/// Clean (un-augmented) evaluation over D^u: argmax of softmax(logits / tau_s), Hungarian ACC
/// and the high-confidence known-sample count. Loss, lr and tau_t are left for the trainer.
EpochMetrics evaluate(const ModelParams& params, const GcdDataset& dataset, const TrainConfig& cfg);

}  // namespace gcdlab
