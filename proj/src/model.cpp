#include "gcdlab/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "gcdlab/error.hpp"

namespace gcdlab {

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'G', 'C', 'D', 'L', 'A', 'B', 'C', 'K'};

template <typename Fn>
void for_each_tensor(ModelParams& p, Fn&& fn) {
  fn(p.w1.data(), p.w1.size());
  fn(p.b1.data(), p.b1.size());
  fn(p.w2.data(), p.w2.size());
  fn(p.b2.data(), p.b2.size());
  fn(p.wp.data(), p.wp.size());
  fn(p.bp.data(), p.bp.size());
  fn(p.prototypes.data(), p.prototypes.size());
}

template <typename Fn>
void for_each_tensor(const ModelParams& p, Fn&& fn) {
  fn(p.w1.data(), p.w1.size());
  fn(p.b1.data(), p.b1.size());
  fn(p.w2.data(), p.w2.size());
  fn(p.b2.data(), p.b2.size());
  fn(p.wp.data(), p.wp.size());
  fn(p.bp.data(), p.bp.size());
  fn(p.prototypes.data(), p.prototypes.size());
}

void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void fill_uniform(Vector& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) = l2_normalize(m.row(i).transpose()).transpose();
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& m, const Matrix& grad_unit) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) =
        l2_normalize_backward(m.row(i).transpose(), grad_unit.row(i).transpose()).transpose();
  }
  return out;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes.data()), 8);
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!in) throw ParseError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

Eigen::Index ModelParams::parameter_count() const {
  Eigen::Index n = 0;
  for_each_tensor(*this, [&](const double*, Eigen::Index size) { n += size; });
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.w1 = Matrix::Zero(w1.rows(), w1.cols());
  z.b1 = Vector::Zero(b1.size());
  z.w2 = Matrix::Zero(w2.rows(), w2.cols());
  z.b2 = Vector::Zero(b2.size());
  z.wp = Matrix::Zero(wp.rows(), wp.cols());
  z.bp = Vector::Zero(bp.size());
  z.prototypes = Matrix::Zero(prototypes.rows(), prototypes.cols());
  return z;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&](const double* data, Eigen::Index size) {
    ok = ok && Eigen::Map<const Vector>(data, size).allFinite();
  });
  return ok;
}

Vector ModelParams::flatten() const {
  Vector flat(parameter_count());
  Eigen::Index offset = 0;
  for_each_tensor(*this, [&](const double* data, Eigen::Index size) {
    flat.segment(offset, size) = Eigen::Map<const Vector>(data, size);
    offset += size;
  });
  return flat;
}

void ModelParams::assign_flat(const Vector& flat) {
  if (flat.size() != parameter_count()) throw ShapeError("assign_flat: wrong parameter count");
  Eigen::Index offset = 0;
  for_each_tensor(*this, [&](double* data, Eigen::Index size) {
    Eigen::Map<Vector>(data, size) = flat.segment(offset, size);
    offset += size;
  });
}

ModelParams init_params(int dim, int hidden, int feat, int proj, int num_classes,
                        std::uint64_t seed) {
  if (dim < 1 || hidden < 1 || feat < 1 || proj < 1 || num_classes < 1) {
    throw InvalidParameter("init_params: all dimensions must be >= 1");
  }
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.w1.resize(hidden, dim);
  p.b1.resize(hidden);
  p.w2.resize(feat, hidden);
  p.b2.resize(feat);
  p.wp.resize(proj, feat);
  p.bp.resize(proj);
  p.prototypes.resize(num_classes, feat);

  const double bound1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double bound_p = 1.0 / std::sqrt(static_cast<double>(feat));
  fill_uniform(p.w1, bound1, rng);
  fill_uniform(p.b1, bound1, rng);
  fill_uniform(p.w2, bound2, rng);
  fill_uniform(p.b2, bound2, rng);
  fill_uniform(p.wp, bound_p, rng);
  fill_uniform(p.bp, bound_p, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < p.prototypes.size(); ++i) p.prototypes.data()[i] = normal(rng);
  p.prototypes = normalize_rows(p.prototypes);
  return p;
}

Matrix normalized_prototypes(const ModelParams& params) { return normalize_rows(params.prototypes); }

ViewCache forward_view(const ModelParams& params, const Matrix& inputs, const Matrix& proto_unit) {
  if (inputs.cols() != params.input_dim()) {
    throw ShapeError("forward: input dimension " + std::to_string(inputs.cols()) +
                     " does not match model dimension " + std::to_string(params.input_dim()));
  }
  ViewCache c;
  c.input = inputs;
  Matrix pre = inputs * params.w1.transpose();
  pre.rowwise() += params.b1.transpose();
  c.hidden = pre.array().tanh().matrix();
  c.h = c.hidden * params.w2.transpose();
  c.h.rowwise() += params.b2.transpose();
  c.h_unit = normalize_rows(c.h);
  c.z_raw = c.h * params.wp.transpose();
  c.z_raw.rowwise() += params.bp.transpose();
  c.z = normalize_rows(c.z_raw);
  c.logits = c.h_unit * proto_unit.transpose();
  return c;
}

ForwardCache forward(const ModelParams& params, const Batch& batch) {
  if (batch.view1.rows() != batch.view2.rows() || batch.view1.cols() != batch.view2.cols()) {
    throw ShapeError("forward: views disagree in shape");
  }
  ForwardCache cache;
  cache.proto_unit = normalized_prototypes(params);
  cache.view1 = forward_view(params, batch.view1, cache.proto_unit);
  cache.view2 = forward_view(params, batch.view2, cache.proto_unit);
  return cache;
}

ParamGrads backward(const ModelParams& params, const ForwardCache& cache, const ViewGrads& view1,
                    const ViewGrads& view2) {
  ParamGrads g = params.zeros_like();
  Matrix grad_proto_unit = Matrix::Zero(cache.proto_unit.rows(), cache.proto_unit.cols());

  auto accumulate = [&](const ViewCache& v, const ViewGrads& vg) {
    if (vg.logits.rows() != v.logits.rows() || vg.logits.cols() != v.logits.cols() ||
        vg.z.rows() != v.z.rows() || vg.z.cols() != v.z.cols()) {
      throw ShapeError("backward: loss gradient shape does not match cache");
    }
    // logits = h_unit * proto_unit^T
    grad_proto_unit += vg.logits.transpose() * v.h_unit;
    Matrix grad_h = normalize_rows_backward(v.h, vg.logits * cache.proto_unit);

    const Matrix grad_zraw = normalize_rows_backward(v.z_raw, vg.z);
    g.wp += grad_zraw.transpose() * v.h;
    g.bp += grad_zraw.colwise().sum().transpose();
    grad_h += grad_zraw * params.wp;

    g.w2 += grad_h.transpose() * v.hidden;
    g.b2 += grad_h.colwise().sum().transpose();
    const Matrix grad_hidden = grad_h * params.w2;
    const Matrix grad_pre =
        (grad_hidden.array() * (1.0 - v.hidden.array().square())).matrix();
    g.w1 += grad_pre.transpose() * v.input;
    g.b1 += grad_pre.colwise().sum().transpose();
  };
  accumulate(cache.view1, view1);
  accumulate(cache.view2, view2);

  g.prototypes = normalize_rows_backward(params.prototypes, grad_proto_unit);
  return g;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     std::uint64_t config_hash) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  write_u64(out, kCheckpointVersion);
  write_u64(out, config_hash);
  for (int d : {params.input_dim(), params.hidden_dim(), params.feat_dim(), params.proj_dim(),
                params.num_classes()}) {
    write_u64(out, static_cast<std::uint64_t>(d));
  }
  const Vector flat = params.flatten();
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * static_cast<Eigen::Index>(sizeof(double))));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw ParseError("not a gcdlab checkpoint: " + path.string());
  Checkpoint ck;
  ck.version = static_cast<std::uint32_t>(read_u64(in));
  if (ck.version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.config_hash = read_u64(in);
  std::array<int, 5> dims{};
  for (int& d : dims) {
    const std::uint64_t v = read_u64(in);
    if (v == 0 || v > (1u << 20)) throw ParseError("checkpoint has implausible dimension");
    d = static_cast<int>(v);
  }
  ck.params = init_params(dims[0], dims[1], dims[2], dims[3], dims[4], 0);
  Vector flat(ck.params.parameter_count());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * static_cast<Eigen::Index>(sizeof(double))));
  if (!in) throw ParseError("checkpoint truncated");
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in checkpoint");
  ck.params.assign_flat(flat);
  return ck;
}

}  // namespace gcdlab
