#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "gcdlab/numerics.hpp"

namespace gcdlab {

/// Feature vectors with ground-truth labels and the labeled/unlabeled split.
///
/// Classes are identified by 0..K-1. `labeled` is the mask M: a labeled sample always belongs to
/// a known class, and every class keeps at least one unlabeled sample.
struct GcdDataset {
  Matrix features;                 // N x d
  std::vector<int> labels;         // N
  std::vector<int> known_classes;  // Y_l, sorted
  std::vector<int> novel_classes;  // Y_u \ Y_l, sorted
  std::vector<bool> labeled;       // N, true = labeled

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
  int num_classes() const {
    return static_cast<int>(known_classes.size() + novel_classes.size());
  }
  /// Lookup table of size K: true for classes in Y_l.
  std::vector<bool> known_lookup() const;
  std::vector<std::size_t> unlabeled_indices() const;

  /// Throws GenerationError describing the first violated invariant.
  void validate() const;
};

/// Two augmented views of the same samples, row-aligned.
struct Batch {
  Matrix view1;
  Matrix view2;
  std::vector<int> labels;  // supervision only where mask[i]
  std::vector<bool> mask;
  std::vector<std::size_t> sample_ids;

  std::size_t size() const { return sample_ids.size(); }
};

struct SyntheticSpec {
  int n_known = 10;
  int n_novel = 10;
  int per_class = 60;
  int dim = 20;
  double separation = 4.0;
  double noise = 1.0;
  double labeled_ratio = 0.5;
  std::uint64_t seed = 0;
  bool operator==(const SyntheticSpec&) const = default;
};

/// Gaussian class clusters around means on a sphere of radius `separation`, with pairwise mean
/// distance >= separation * noise enforced by rejection. Classes 0..n_known-1 are known.
GcdDataset generate_dataset(const SyntheticSpec& spec);

struct AugmentOptions {
  double strength = 0.1;
  double dropout = 0.1;
};

/// x + N(0, strength^2) noise followed by coordinate dropout (zeroing) with the given probability.
Vector augment_view(const Vector& x, const AugmentOptions& opts, std::mt19937_64& rng);

/// One epoch: a seeded shuffle split into batches (the last short batch is kept), each sample
/// augmented twice independently.
std::vector<Batch> make_batches(const GcdDataset& dataset, std::size_t batch_size,
                                const AugmentOptions& augment, std::uint64_t seed);

/// Embedding CSV with header `label,labeled,f0,...,f{d-1}`.
void write_dataset_csv(const GcdDataset& dataset, const std::filesystem::path& path);
/// Reads an embedding CSV. Known classes are those with at least one labeled sample.
GcdDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace gcdlab
