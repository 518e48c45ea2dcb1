#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "gcdlab/error.hpp"
#include "gcdlab/synthdata.hpp"

using namespace gcdlab;

namespace {

std::size_t count_labeled(const GcdDataset& ds) {
  return static_cast<std::size_t>(std::count(ds.labeled.begin(), ds.labeled.end(), true));
}

void check_invariants(const GcdDataset& ds) {
  const int k = ds.num_classes();
  std::vector<int> unlabeled_per_class(k, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(ds.labels[i] >= 0);
    REQUIRE(ds.labels[i] < k);
    if (ds.labeled[i])
      CHECK(std::binary_search(ds.known_classes.begin(), ds.known_classes.end(), ds.labels[i]));
    else
      ++unlabeled_per_class[ds.labels[i]];
  }
  for (int c = 0; c < k; ++c) CHECK(unlabeled_per_class[c] >= 1);
  std::vector<int> both;
  std::set_intersection(ds.known_classes.begin(), ds.known_classes.end(),
                        ds.novel_classes.begin(), ds.novel_classes.end(),
                        std::back_inserter(both));
  CHECK(both.empty());
  CHECK(ds.features.allFinite());
}

}  // namespace

TEST_CASE("split arithmetic") {
  SyntheticSpec spec;
  spec.n_known = 5;
  spec.n_novel = 5;
  spec.per_class = 40;
  spec.labeled_ratio = 0.5;
  const GcdDataset ds = generate_dataset(spec);
  CHECK(ds.size() == 400);
  CHECK(count_labeled(ds) == 100);
  CHECK(ds.unlabeled_indices().size() == 300);
  CHECK(ds.known_classes.size() == 5);
  CHECK(ds.novel_classes.size() == 5);
  check_invariants(ds);
}

TEST_CASE("same seed gives bit-identical datasets") {
  SyntheticSpec spec;
  spec.seed = 42;
  const GcdDataset a = generate_dataset(spec);
  const GcdDataset b = generate_dataset(spec);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.labeled == b.labeled);
  spec.seed = 43;
  CHECK(generate_dataset(spec).features != a.features);
}

TEST_CASE("class means respect the minimum separation") {
  SyntheticSpec spec;
  spec.n_known = 4;
  spec.n_novel = 4;
  spec.per_class = 400;
  spec.dim = 6;
  spec.separation = 5.0;
  spec.noise = 0.5;
  const GcdDataset ds = generate_dataset(spec);
  std::vector<Vector> means(8, Vector::Zero(6));
  std::vector<int> counts(8, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    means[ds.labels[i]] += ds.features.row(static_cast<Eigen::Index>(i)).transpose();
    ++counts[ds.labels[i]];
  }
  for (int c = 0; c < 8; ++c) {
    means[c] /= counts[c];
    CHECK(std::abs(means[c].norm() - spec.separation) < 0.2);
  }
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b)
      CHECK((means[a] - means[b]).norm() > spec.separation * spec.noise - 0.2);
}

TEST_CASE("impossible separation is a generation error") {
  SyntheticSpec spec;
  spec.n_known = 10;
  spec.n_novel = 10;
  spec.dim = 2;
  spec.separation = 1.0;
  spec.noise = 1.9;  // 20 points on a circle of radius 1 cannot be 1.9 apart
  CHECK_THROWS_AS(generate_dataset(spec), GenerationError);
}

TEST_CASE("invalid generation parameters are rejected") {
  SyntheticSpec spec;
  spec.per_class = 3;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.labeled_ratio = 1.0;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.n_known = 0;
  CHECK_THROWS_AS(generate_dataset(spec), InvalidParameter);
}

TEST_CASE("invariants hold over 100 random configurations") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> known(1, 6), novel(0, 6), per(4, 30), dim(2, 12);
  std::uniform_real_distribution<double> ratio(0.05, 0.95), sep(1.0, 6.0), noise(0.1, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    SyntheticSpec spec;
    spec.n_known = known(rng);
    spec.n_novel = novel(rng);
    spec.per_class = per(rng);
    spec.dim = dim(rng);
    spec.labeled_ratio = ratio(rng);
    spec.separation = sep(rng);
    spec.noise = noise(rng);
    spec.seed = rng();
    const GcdDataset ds = generate_dataset(spec);
    CHECK_NOTHROW(ds.validate());
    check_invariants(ds);
    const auto per_known = static_cast<std::size_t>(std::floor(spec.labeled_ratio * spec.per_class));
    CHECK(count_labeled(ds) == per_known * static_cast<std::size_t>(spec.n_known));
    CHECK(ds.size() == static_cast<std::size_t>((spec.n_known + spec.n_novel) * spec.per_class));
  }
}

TEST_CASE("augmentation examples") {
  std::mt19937_64 rng(1);
  const Vector x = Vector::LinSpaced(20, -1.0, 1.0);
  CHECK(augment_view(x, {0.0, 0.0}, rng) == x);

  std::mt19937_64 a(99), b(99);
  CHECK(augment_view(x, {0.1, 0.1}, a) == augment_view(x, {0.1, 0.1}, b));

  // E||N(0, s^2 I_d)|| ≈ s sqrt(d); the chi mean for d = 20 is 0.98 sqrt(20).
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) total += (augment_view(x, {0.1, 0.0}, rng) - x).norm();
  const double mean = total / 1000.0;
  CHECK(std::abs(mean - 0.1 * std::sqrt(20.0)) < 0.1 * 0.1 * std::sqrt(20.0));
}

TEST_CASE("dropout zeroes roughly the requested fraction") {
  std::mt19937_64 rng(4);
  const Vector x = Vector::Ones(1000);
  const Vector y = augment_view(x, {0.0, 0.3}, rng);
  const auto zeros = (y.array() == 0.0).count();
  CHECK(zeros > 240);
  CHECK(zeros < 360);
}

TEST_CASE("batching sizes and partition") {
  SyntheticSpec spec;
  spec.n_known = 5;
  spec.n_novel = 5;
  spec.per_class = 40;
  const GcdDataset ds = generate_dataset(spec);
  const auto batches = make_batches(ds, 128, {}, 5);
  REQUIRE(batches.size() == 4);
  CHECK(batches[0].size() == 128);
  CHECK(batches[1].size() == 128);
  CHECK(batches[2].size() == 128);
  CHECK(batches[3].size() == 16);
  std::vector<int> seen(ds.size(), 0);
  for (const Batch& b : batches) {
    CHECK(b.view1.rows() == static_cast<Eigen::Index>(b.size()));
    CHECK(b.view2.rows() == static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) {
      const std::size_t id = b.sample_ids[i];
      ++seen[id];
      CHECK(b.mask[i] == ds.labeled[id]);
      if (b.mask[i]) CHECK(b.labels[i] == ds.labels[id]);
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("batching is deterministic per seed and views derive from the same samples") {
  SyntheticSpec spec;
  spec.n_known = 2;
  spec.n_novel = 2;
  spec.per_class = 10;
  const GcdDataset ds = generate_dataset(spec);
  const auto a = make_batches(ds, 16, {}, 3);
  const auto b = make_batches(ds, 16, {}, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample_ids == b[i].sample_ids);
    CHECK(a[i].view1 == b[i].view1);
    CHECK(a[i].view2 == b[i].view2);
  }
  const auto clean = make_batches(ds, 16, {0.0, 0.0}, 3);
  for (const Batch& batch : clean) {
    CHECK(batch.view1 == batch.view2);
    for (std::size_t i = 0; i < batch.size(); ++i)
      CHECK(batch.view1.row(static_cast<Eigen::Index>(i)) ==
            ds.features.row(static_cast<Eigen::Index>(batch.sample_ids[i])));
  }
}

TEST_CASE("CSV round trip") {
  SyntheticSpec spec;
  spec.n_known = 3;
  spec.n_novel = 2;
  spec.per_class = 8;
  spec.dim = 4;
  const GcdDataset ds = generate_dataset(spec);
  const auto path = std::filesystem::temp_directory_path() / "gcdlab_test_dataset.csv";
  write_dataset_csv(ds, path);
  const GcdDataset back = read_dataset_csv(path);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.labeled == ds.labeled);
  CHECK(back.known_classes == ds.known_classes);
  CHECK(back.novel_classes == ds.novel_classes);
  std::filesystem::remove(path);
}
