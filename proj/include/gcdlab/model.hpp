#pragma once

#include <cstdint>
#include <filesystem>

#include "gcdlab/numerics.hpp"
#include "gcdlab/synthdata.hpp"

namespace gcdlab {

/// Encoder f (d -> hidden -> feat, tanh hidden layer), projection head φ (feat -> proj) and
/// the prototype bank C (K x feat).
struct ModelParams {
  Matrix w1;  // hidden x d
  Vector b1;
  Matrix w2;  // feat x hidden
  Vector b2;
  Matrix wp;  // proj x feat
  Vector bp;
  Matrix prototypes;  // K x feat

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int feat_dim() const { return static_cast<int>(w2.rows()); }
  int proj_dim() const { return static_cast<int>(wp.rows()); }
  int num_classes() const { return static_cast<int>(prototypes.rows()); }

  Eigen::Index parameter_count() const;
  /// Zero-filled parameters of identical shape.
  ModelParams zeros_like() const;
  bool all_finite() const;

  /// Fixed-order flattening: w1, b1, w2, b2, wp, bp, prototypes (row-major).
  Vector flatten() const;
  void assign_flat(const Vector& flat);

  bool operator==(const ModelParams&) const = default;
};

/// Gradients share the parameter layout.
using ParamGrads = ModelParams;

ModelParams init_params(int dim, int hidden, int feat, int proj, int num_classes,
                        std::uint64_t seed);

/// Intermediates for one view, kept for backprop.
struct ViewCache {
  Matrix input;        // b x d
  Matrix hidden;       // tanh activations, b x hidden
  Matrix h;            // encoder output, b x feat
  Matrix h_unit;       // h / ||h||
  Matrix z_raw;        // projector output before normalization
  Matrix z;            // unit rows
  Matrix logits;       // cosine similarities to prototypes, b x K
};

struct ForwardCache {
  ViewCache view1;
  ViewCache view2;
  Matrix proto_unit;  // prototypes / ||prototypes||
};

/// Gradients of a scalar loss w.r.t. the outputs of one view.
struct ViewGrads {
  Matrix logits;
  Matrix z;
};

/// Forward pass of a single view; softmax is left to consumers.
ViewCache forward_view(const ModelParams& params, const Matrix& inputs, const Matrix& proto_unit);
Matrix normalized_prototypes(const ModelParams& params);

ForwardCache forward(const ModelParams& params, const Batch& batch);

/// Exact parameter gradients given loss gradients w.r.t. logits and z of both views.
ParamGrads backward(const ModelParams& params, const ForwardCache& cache, const ViewGrads& view1,
                    const ViewGrads& view2);

struct Checkpoint {
  ModelParams params;
  std::uint64_t config_hash = 0;
  std::uint32_t version = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary dump: magic, version, config hash, dimensions, then every matrix as little-endian
/// IEEE-754 doubles in flatten() order.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     std::uint64_t config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gcdlab
