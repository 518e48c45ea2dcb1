#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gcdlab/error.hpp"
#include "gcdlab/eval.hpp"
#include "gcdlab/trainer.hpp"
#include "oracles.hpp"

using namespace gcdlab;

namespace {

oracle::Mat to_rows(const Matrix& m) {
  oracle::Mat out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out[i] = oracle::Vec(m.row(i).data(), m.row(i).data() + m.cols());
  return out;
}

/// Points at distance 10 from the origin along distinct axes, jittered by noise 1.
Matrix blobs(int k, int per, std::vector<int>& truth, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(k * per, k);
  truth.clear();
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      const int r = c * per + i;
      for (int j = 0; j < k; ++j) x(r, j) = n(rng) + (j == c ? 10.0 : 0.0);
      truth.push_back(c);
    }
  return x;
}

}  // namespace

TEST_CASE("accuracy examples") {
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2, 3};
  const std::vector<bool> known = {true, true, false, false};
  AccuracyResult r = hungarian_accuracy(truth, truth, known);
  CHECK(r.acc_all == 1.0);
  CHECK(r.acc_old == 1.0);
  CHECK(r.acc_new == 1.0);
  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<int> relabeled;
  for (int t : truth) relabeled.push_back(perm[t]);
  r = hungarian_accuracy(relabeled, truth, known);
  CHECK(r.acc_all == 1.0);
  CHECK(r.acc_old == 1.0);
  CHECK(r.acc_new == 1.0);
  for (int c = 0; c < 4; ++c) CHECK(r.assignment[perm[c]] == c);
}

TEST_CASE("one global assignment serves both subsets") {
  // Old class 0 and new class 1 are both predicted as cluster 0. Matching cluster 0 to class 0
  // (3 hits) beats class 1 (2 hits), so every new sample is wrong.
  const std::vector<int> truth = {0, 0, 0, 1, 1};
  const std::vector<int> pred = {0, 0, 0, 0, 0};
  const AccuracyResult r = hungarian_accuracy(pred, truth, {true, false});
  CHECK(r.acc_all == doctest::Approx(0.6));
  CHECK(r.acc_old == 1.0);
  CHECK(r.acc_new == 0.0);
  CHECK(r.count_old == 3);
  CHECK(r.count_new == 2);
}

TEST_CASE("assignment equals the brute-force optimum") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> counts(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 6;
    Matrix w(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) w(i, j) = counts(rng);
    const std::vector<int> a = max_weight_assignment(w);
    double value = 0.0;
    std::vector<int> cols = a;
    std::sort(cols.begin(), cols.end());
    for (int i = 0; i < k; ++i) {
      CHECK(cols[i] == i);
      value += w(i, a[i]);
    }
    CHECK(value == oracle::brute_force_assignment(to_rows(w)));
  }
}

TEST_CASE("accuracy is invariant to permuting cluster ids, and weighted across subsets") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cls(0, 5);
  const std::vector<bool> known = {true, true, true, false, false, false};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> truth(60), pred(60);
    for (int i = 0; i < 60; ++i) {
      truth[i] = cls(rng);
      pred[i] = (i % 3 == 0) ? cls(rng) : truth[i];
    }
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> relabeled;
    for (int p : pred) relabeled.push_back(perm[p]);
    const AccuracyResult a = hungarian_accuracy(pred, truth, known);
    const AccuracyResult b = hungarian_accuracy(relabeled, truth, known);
    CHECK(a.correct_all == b.correct_all);
    CHECK(a.acc_old == b.acc_old);
    CHECK(a.acc_new == b.acc_new);
    const double weighted =
        (a.acc_old * a.count_old + a.acc_new * a.count_new) / (a.count_old + a.count_new);
    CHECK(std::abs(weighted - a.acc_all) < 1e-12);
    CHECK(a.correct_old + a.correct_new == a.correct_all);
  }
}

TEST_CASE("assignment rejects oversized problems") {
  CHECK_THROWS_AS(max_weight_assignment(Matrix::Zero(kMaxAssignmentSize + 1, kMaxAssignmentSize + 1)),
                  SizingError);
  CHECK_THROWS_AS(hungarian_accuracy({kMaxAssignmentSize + 5}, {0}, {true}), SizingError);
  CHECK_THROWS_AS(hungarian_accuracy({0, 1}, {0}, {true}), ShapeError);
}

TEST_CASE("k-means recovers separated blobs") {
  for (int k : {2, 5, 10}) {
    std::vector<int> truth;
    const Matrix x = blobs(k, 30, truth, static_cast<std::uint64_t>(k));
    const KMeansResult r = kmeans(x, k, 1);
    CHECK(hungarian_accuracy(r.assignment, truth, std::vector<bool>(k, true)).acc_all == 1.0);
  }
}

TEST_CASE("k-means invariants") {
  std::vector<int> truth;
  const Matrix x = blobs(4, 25, truth, 3);
  const KMeansResult a = kmeans(x, 6, 9);
  const KMeansResult b = kmeans(x, 6, 9);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centers == b.centers);
  REQUIRE(!a.inertia_history.empty());
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
    CHECK(a.inertia_history[i] <= a.inertia_history[i - 1] + 1e-9);

  const Matrix few = x.topRows(7);
  const KMeansResult each = kmeans(few, 7, 2);
  CHECK(each.inertia_history.back() == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<int> sorted = each.assignment;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

  CHECK_THROWS_AS(kmeans(few, 8, 1), InvalidParameter);
  CHECK_THROWS_AS(kmeans(few, 2, 1, 300, 0), InvalidParameter);
}

TEST_CASE("k-means restarts never do worse than the first start") {
  std::vector<int> truth;
  const Matrix x = blobs(8, 15, truth, 11);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double one = kmeans(x, 8, seed, 300, 1).inertia_history.back();
    const double ten = kmeans(x, 8, seed, 300, 10).inertia_history.back();
    CHECK(ten <= one);
  }
}

TEST_CASE("high-confidence known count") {
  Matrix d(4, 3);
  d << 0.9, 0.05, 0.05,  //
      0.1, 0.85, 0.05,   //
      0.2, 0.2, 0.6,     //
      0.05, 0.05, 0.9;
  const std::vector<bool> known = {true, true, false};
  CHECK(count_known_high_conf(d, known, 1.0 + 1e-9) == 0);
  CHECK(count_known_high_conf(d, known, 0.85) == 2);
  CHECK(count_known_high_conf(d, known, 0.89) == 1);
  // A vacuous threshold counts every row whose argmax is known.
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 2.0);
  const Matrix random = softmax_rows(Matrix::NullaryExpr(50, 3, [&]() { return n(rng); }), 1.0);
  std::size_t expected = 0;
  for (Eigen::Index i = 0; i < 50; ++i) expected += known[argmax(random.row(i))] ? 1 : 0;
  CHECK(count_known_high_conf(random, known, 1e-12) == expected);
}

TEST_CASE("untrained models score near chance") {
  SyntheticSpec spec;
  spec.seed = 0;
  const GcdDataset ds = generate_dataset(spec);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    const EpochMetrics m = evaluate(init_state(ds, cfg).params, ds, cfg);
    CHECK(m.acc_all < 0.35);
  }
}
