#include "gcdlab/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "gcdlab/error.hpp"
#include "gcdlab/format.hpp"

namespace gcdlab {

namespace {

constexpr int kMaxRejectionAttempts = 10000;

Vector random_on_sphere(int dim, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  do {
    for (int j = 0; j < dim; ++j) v[j] = normal(rng);
  } while (v.norm() == 0.0);
  return v * (radius / v.norm());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, int line, const std::string& field) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("invalid value '" + text + "' in column " + field, line);
  }
  return value;
}

}  // namespace

std::vector<bool> GcdDataset::known_lookup() const {
  std::vector<bool> lookup(static_cast<std::size_t>(num_classes()), false);
  for (int c : known_classes) lookup[static_cast<std::size_t>(c)] = true;
  return lookup;
}

std::vector<std::size_t> GcdDataset::unlabeled_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!labeled[i]) out.push_back(i);
  }
  return out;
}

void GcdDataset::validate() const {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(features.rows()) != n || labeled.size() != n) {
    throw GenerationError("dataset: features, labels and labeled flags disagree in length");
  }
  std::set<int> known(known_classes.begin(), known_classes.end());
  std::set<int> novel(novel_classes.begin(), novel_classes.end());
  for (int c : known) {
    if (novel.count(c) != 0) throw GenerationError("dataset: class in both known and novel sets");
  }
  const int k = num_classes();
  std::set<int> all(known);
  all.insert(novel.begin(), novel.end());
  if (static_cast<int>(all.size()) != k || (!all.empty() && (*all.begin() != 0 || *all.rbegin() != k - 1))) {
    throw GenerationError("dataset: class ids must be exactly 0..K-1");
  }
  std::vector<int> unlabeled_per_class(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw GenerationError("dataset: label out of range");
    if (labeled[i] && known.count(labels[i]) == 0) {
      throw GenerationError("dataset: labeled sample from a novel class");
    }
    if (!labeled[i]) ++unlabeled_per_class[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < k; ++c) {
    if (unlabeled_per_class[static_cast<std::size_t>(c)] == 0) {
      throw GenerationError("dataset: class " + std::to_string(c) + " has no unlabeled sample");
    }
  }
}

GcdDataset generate_dataset(const SyntheticSpec& spec) {
  if (spec.n_known < 1 || spec.n_novel < 0 || spec.per_class < 4 || spec.dim < 1) {
    throw InvalidParameter("generate_dataset: need n_known >= 1, n_novel >= 0, per_class >= 4");
  }
  if (!(spec.labeled_ratio > 0.0 && spec.labeled_ratio < 1.0)) {
    throw InvalidParameter("generate_dataset: labeled_ratio must lie in (0, 1)");
  }
  if (!(spec.separation > 0.0) || !(spec.noise > 0.0)) {
    throw InvalidParameter("generate_dataset: separation and noise must be positive");
  }

  std::mt19937_64 rng(spec.seed);
  const int k = spec.n_known + spec.n_novel;
  const double min_distance = spec.separation * spec.noise;

  std::vector<Vector> means;
  means.reserve(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRejectionAttempts && !placed; ++attempt) {
      Vector candidate = random_on_sphere(spec.dim, spec.separation, rng);
      placed = std::all_of(means.begin(), means.end(), [&](const Vector& m) {
        return (m - candidate).norm() >= min_distance;
      });
      if (placed) means.push_back(std::move(candidate));
    }
    if (!placed) {
      throw GenerationError("generate_dataset: could not place class " + std::to_string(c) +
                            " at distance >= " + format_double(min_distance) + " from the others");
    }
  }

  GcdDataset ds;
  const auto n = static_cast<std::size_t>(k) * static_cast<std::size_t>(spec.per_class);
  ds.features.resize(static_cast<Eigen::Index>(n), spec.dim);
  ds.labels.resize(n);
  ds.labeled.assign(n, false);
  for (int c = 0; c < spec.n_known; ++c) ds.known_classes.push_back(c);
  for (int c = spec.n_known; c < k; ++c) ds.novel_classes.push_back(c);

  const int labeled_per_class =
      static_cast<int>(std::floor(spec.labeled_ratio * static_cast<double>(spec.per_class)));
  std::normal_distribution<double> normal(0.0, spec.noise);
  std::size_t row = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<int> order(static_cast<std::size_t>(spec.per_class));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int s = 0; s < spec.per_class; ++s, ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      for (int j = 0; j < spec.dim; ++j) ds.features(r, j) = means[static_cast<std::size_t>(c)][j] + normal(rng);
      ds.labels[row] = c;
      ds.labeled[row] = c < spec.n_known && order[static_cast<std::size_t>(s)] < labeled_per_class;
    }
  }
  ds.validate();
  return ds;
}

Vector augment_view(const Vector& x, const AugmentOptions& opts, std::mt19937_64& rng) {
  if (opts.strength < 0.0) throw InvalidParameter("augment_view: strength must be >= 0");
  if (opts.dropout < 0.0 || opts.dropout >= 1.0) {
    throw InvalidParameter("augment_view: dropout must lie in [0, 1)");
  }
  Vector out = x;
  if (opts.strength > 0.0) {
    std::normal_distribution<double> normal(0.0, opts.strength);
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += normal(rng);
  }
  if (opts.dropout > 0.0) {
    std::bernoulli_distribution drop(opts.dropout);
    for (Eigen::Index j = 0; j < out.size(); ++j) {
      if (drop(rng)) out[j] = 0.0;
    }
  }
  return out;
}

std::vector<Batch> make_batches(const GcdDataset& dataset, std::size_t batch_size,
                                const AugmentOptions& augment, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (batch_size == 0 || batch_size > n) {
    throw InvalidParameter("make_batches: batch_size must lie in [1, N]");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  batches.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    Batch batch;
    batch.view1.resize(static_cast<Eigen::Index>(b), dataset.dim());
    batch.view2.resize(static_cast<Eigen::Index>(b), dataset.dim());
    batch.labels.resize(b);
    batch.mask.resize(b);
    batch.sample_ids.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t id = order[start + i];
      const Vector x = dataset.features.row(static_cast<Eigen::Index>(id)).transpose();
      const auto r = static_cast<Eigen::Index>(i);
      batch.view1.row(r) = augment_view(x, augment, rng).transpose();
      batch.view2.row(r) = augment_view(x, augment, rng).transpose();
      batch.labels[i] = dataset.labels[id];
      batch.mask[i] = dataset.labeled[id];
      batch.sample_ids[i] = id;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void write_dataset_csv(const GcdDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "label,labeled";
  for (int j = 0; j < dataset.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.labels[i] << ',' << (dataset.labeled[i] ? 1 : 0);
    for (int j = 0; j < dataset.dim(); ++j) {
      out << ',' << format_double(dataset.features(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

GcdDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty embedding CSV", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "label" || header[1] != "labeled") {
    throw ParseError("header must be label,labeled,f0,...", 1);
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[j + 2] != "f" + std::to_string(j)) {
      throw ParseError("expected column f" + std::to_string(j) + ", got " + header[j + 2], 1);
    }
  }

  std::vector<std::vector<double>> rows;
  GcdDataset ds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    const int label = parse_number<int>(cells[0], line_no, "label");
    const int flag = parse_number<int>(cells[1], line_no, "labeled");
    if (label < 0) throw ParseError("label must be non-negative", line_no);
    if (flag != 0 && flag != 1) throw ParseError("labeled must be 0 or 1", line_no);
    std::vector<double> feats(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      feats[j] = parse_number<double>(cells[j + 2], line_no, header[j + 2]);
    }
    ds.labels.push_back(label);
    ds.labeled.push_back(flag == 1);
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw ParseError("embedding CSV has no samples", line_no);

  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  const int k = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  std::vector<bool> known(static_cast<std::size_t>(k), false);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labeled[i]) known[static_cast<std::size_t>(ds.labels[i])] = true;
  }
  for (int c = 0; c < k; ++c) {
    (known[static_cast<std::size_t>(c)] ? ds.known_classes : ds.novel_classes).push_back(c);
  }
  try {
    ds.validate();
  } catch (const GenerationError& e) {
    throw ParseError(std::string("invalid embedding CSV: ") + e.what());
  }
  return ds;
}

}  // namespace gcdlab
