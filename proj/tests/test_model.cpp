#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gcdlab/error.hpp"
#include "gcdlab/model.hpp"

using namespace gcdlab;

namespace {

Batch random_batch(int b, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Batch batch;
  batch.view1 = Matrix::NullaryExpr(b, d, [&]() { return n(rng); });
  batch.view2 = Matrix::NullaryExpr(b, d, [&]() { return n(rng); });
  batch.labels.assign(b, 0);
  batch.mask.assign(b, false);
  for (int i = 0; i < b; ++i) batch.sample_ids.push_back(static_cast<std::size_t>(i));
  return batch;
}

ViewGrads random_view_grads(int b, int k, int dz, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {Matrix::NullaryExpr(b, k, [&]() { return n(rng); }),
          Matrix::NullaryExpr(b, dz, [&]() { return n(rng); })};
}

double weighted_outputs(const ForwardCache& c, const ViewGrads& g1, const ViewGrads& g2) {
  return (c.view1.logits.cwiseProduct(g1.logits)).sum() + (c.view1.z.cwiseProduct(g1.z)).sum() +
         (c.view2.logits.cwiseProduct(g2.logits)).sum() + (c.view2.z.cwiseProduct(g2.z)).sum();
}

}  // namespace

TEST_CASE("init is deterministic with unit prototypes") {
  const ModelParams a = init_params(20, 32, 16, 8, 10, 5);
  const ModelParams b = init_params(20, 32, 16, 8, 10, 5);
  CHECK(a == b);
  CHECK(!(a == init_params(20, 32, 16, 8, 10, 6)));
  CHECK(a.prototypes.rows() == 10);
  for (Eigen::Index k = 0; k < 10; ++k) CHECK(std::abs(a.prototypes.row(k).norm() - 1.0) < 1e-12);
  CHECK(a.all_finite());
  // Fan-in scaling bounds the first layer by 1 / sqrt(d).
  CHECK(a.w1.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(20.0));
  CHECK(a.parameter_count() == 32 * 20 + 32 + 16 * 32 + 16 + 8 * 16 + 8 + 10 * 16);
}

TEST_CASE("flatten and assign_flat are inverse") {
  ModelParams p = init_params(4, 5, 3, 2, 3, 1);
  const Vector flat = p.flatten();
  CHECK(flat.size() == p.parameter_count());
  ModelParams q = p.zeros_like();
  q.assign_flat(flat);
  CHECK(q == p);
}

TEST_CASE("forward invariants") {
  const ModelParams p = init_params(6, 10, 5, 4, 7, 2);
  const Batch batch = random_batch(9, 6, 3);
  const ForwardCache c = forward(p, batch);
  for (const ViewCache* v : {&c.view1, &c.view2}) {
    CHECK(v->logits.rows() == 9);
    CHECK(v->logits.cols() == 7);
    CHECK(v->logits.maxCoeff() <= 1.0 + 1e-12);
    CHECK(v->logits.minCoeff() >= -1.0 - 1e-12);
    for (Eigen::Index i = 0; i < 9; ++i) CHECK(std::abs(v->z.row(i).norm() - 1.0) < 1e-9);
    const Matrix expected = v->h_unit * c.proto_unit.transpose();
    CHECK((expected - v->logits).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("duplicated samples get duplicated cache rows") {
  const ModelParams p = init_params(6, 10, 5, 4, 7, 2);
  Batch batch = random_batch(4, 6, 3);
  batch.view1.row(3) = batch.view1.row(1);
  const ForwardCache c = forward(p, batch);
  CHECK(c.view1.logits.row(3) == c.view1.logits.row(1));
  CHECK(c.view1.z.row(3) == c.view1.z.row(1));
}

TEST_CASE("dimension mismatch is a shape error") {
  const ModelParams p = init_params(6, 10, 5, 4, 7, 2);
  CHECK_THROWS_AS(forward(p, random_batch(4, 5, 1)), ShapeError);
  const ForwardCache c = forward(p, random_batch(4, 6, 1));
  ViewGrads bad{Matrix::Zero(4, 3), Matrix::Zero(4, 4)};
  ViewGrads ok{Matrix::Zero(4, 7), Matrix::Zero(4, 4)};
  CHECK_THROWS_AS(backward(p, c, bad, ok), ShapeError);
}

TEST_CASE("zero encoder output takes the guard path") {
  ModelParams p = init_params(6, 10, 5, 4, 7, 2);
  p.w2.setZero();
  p.b2.setZero();
  const ForwardCache c = forward(p, random_batch(3, 6, 1));
  CHECK(c.view1.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.view1.logits.allFinite());
  CHECK(c.view1.z.allFinite());
  CHECK(c.view1.logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero output gradients give zero parameter gradients") {
  const ModelParams p = init_params(6, 10, 5, 4, 7, 2);
  const ForwardCache c = forward(p, random_batch(5, 6, 4));
  const ViewGrads zero{Matrix::Zero(5, 7), Matrix::Zero(5, 4)};
  const ParamGrads g = backward(p, c, zero, zero);
  CHECK(g.flatten().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward matches finite differences for all parameters") {
  std::mt19937_64 rng(8);
  const ModelParams p = init_params(5, 6, 4, 3, 3, 9);
  const Batch batch = random_batch(4, 5, 10);
  const ViewGrads g1 = random_view_grads(4, 3, 3, rng);
  const ViewGrads g2 = random_view_grads(4, 3, 3, rng);
  const ParamGrads analytic = backward(p, forward(p, batch), g1, g2);
  auto f = [&](const Vector& flat) {
    ModelParams q = p;
    q.assign_flat(flat);
    return weighted_outputs(forward(q, batch), g1, g2);
  };
  CHECK(max_relative_error(analytic.flatten(), numeric_gradient(f, p.flatten())) < 1e-6);
}

TEST_CASE("single-logit prototype gradient matches finite differences") {
  const ModelParams p = init_params(5, 6, 4, 3, 4, 2);
  const Batch batch = random_batch(1, 5, 6);
  ViewGrads g1{Matrix::Zero(1, 4), Matrix::Zero(1, 3)};
  ViewGrads g2 = g1;
  g1.logits(0, 2) = 1.0;
  const ParamGrads analytic = backward(p, forward(p, batch), g1, g2);
  const Vector c = p.prototypes.row(2).transpose();
  auto f = [&](const Vector& row) {
    ModelParams q = p;
    q.prototypes.row(2) = row.transpose();
    return forward(q, batch).view1.logits(0, 2);
  };
  const Vector numeric = numeric_gradient(f, c);
  CHECK(max_relative_error(analytic.prototypes.row(2).transpose(), numeric) < 1e-4);
  // Other prototypes do not affect this logit.
  CHECK(analytic.prototypes.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prototypes receive gradient only through logits") {
  std::mt19937_64 rng(2);
  const ModelParams p = init_params(5, 6, 4, 3, 4, 2);
  const Batch batch = random_batch(3, 5, 6);
  ViewGrads g1 = random_view_grads(3, 4, 3, rng);
  ViewGrads g2 = random_view_grads(3, 4, 3, rng);
  g1.logits.setZero();
  g2.logits.setZero();
  const ParamGrads g = backward(p, forward(p, batch), g1, g2);
  CHECK(g.prototypes.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.wp.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gradients are additive over samples") {
  // A batch holding every sample twice with half-weight gradients matches the single batch.
  std::mt19937_64 rng(12);
  const ModelParams p = init_params(5, 6, 4, 3, 4, 2);
  const Batch single = random_batch(3, 5, 6);
  Batch twice = single;
  twice.view1 = Matrix(6, 5);
  twice.view2 = Matrix(6, 5);
  twice.view1 << single.view1, single.view1;
  twice.view2 << single.view2, single.view2;
  const ViewGrads g1 = random_view_grads(3, 4, 3, rng);
  const ViewGrads g2 = random_view_grads(3, 4, 3, rng);
  auto doubled = [](const ViewGrads& g) {
    ViewGrads out{Matrix(6, g.logits.cols()), Matrix(6, g.z.cols())};
    out.logits << 0.5 * g.logits, 0.5 * g.logits;
    out.z << 0.5 * g.z, 0.5 * g.z;
    return out;
  };
  const Vector a = backward(p, forward(p, single), g1, g2).flatten();
  const Vector b = backward(p, forward(p, twice), doubled(g1), doubled(g2)).flatten();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("checkpoint round trip and corruption") {
  const ModelParams p = init_params(5, 6, 4, 3, 4, 2);
  const auto dir = std::filesystem::temp_directory_path() / "gcdlab_test_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "a.bin";
  save_checkpoint(path, p, 0xabcdefULL);
  const Checkpoint c = load_checkpoint(path);
  CHECK(c.params == p);
  CHECK(c.config_hash == 0xabcdefULL);
  CHECK(c.version == kCheckpointVersion);

  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('x');
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOTACHECKPOINT-------------------------";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove_all(dir);
}
