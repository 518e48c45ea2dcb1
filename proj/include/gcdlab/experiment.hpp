#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcdlab/config.hpp"
#include "gcdlab/eval.hpp"
#include "gcdlab/synthdata.hpp"

namespace gcdlab {

struct DatasetSpec {
  enum class Source { synthetic, csv };
  Source source = Source::synthetic;
  SyntheticSpec synthetic;  // seed is taken from the run seed
  std::filesystem::path csv_path;

  bool operator==(const DatasetSpec&) const = default;
};

/// Value lists swept as a cartesian grid. An empty list means "use the base value".
struct SweepSpec {
  std::vector<double> beta;
  std::vector<double> delta;
  std::vector<std::uint64_t> seed;

  bool operator==(const SweepSpec&) const = default;
};

/// Named component combinations: simgcd, dkl, ler, ler+map, ler+map+dkl.
FeatureToggles ablation_toggles(const std::string& name);
const std::vector<std::string>& ablation_names();

struct ExperimentConfig {
  DatasetSpec dataset;
  TrainConfig train;
  SweepSpec sweep;
  std::vector<std::string> ablation;
  std::filesystem::path output_dir = "runs";
  int checkpoint_every = 0;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses the YAML experiment file. Omitted keys keep their defaults; unknown keys are rejected.
/// Throws ParseError (with line) for malformed input and RangeError for invalid values.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical YAML: every field, fixed order, shortest round-trip numbers.
std::string serialize_config(const ExperimentConfig& cfg);
std::string serialize_train_config(const TrainConfig& cfg);

/// FNV-1a 64 of the canonical TrainConfig text; stored in checkpoints.
std::uint64_t config_hash(const TrainConfig& cfg);

/// One point of the sweep grid with its fully resolved settings.
struct RunPlan {
  std::string tag;
  TrainConfig train;
};

std::vector<RunPlan> expand_grid(const ExperimentConfig& cfg);

/// Materializes the dataset of one run (synthetic datasets use the run seed).
GcdDataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

inline constexpr const char* kMetricsSchemaTag = "# gcdlab-metrics v1";
inline constexpr const char* kMetricsHeader =
    "epoch,acc_all,acc_old,acc_new,loss_total,loss_rep_u,loss_rep_s,loss_cls_u,loss_cls_s,"
    "mean_entropy,dkl,ler,known_count,lr,tau_t";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& history);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

using Logger = std::function<void(const std::string&)>;

/// Trains every grid point, writing `<output_dir>/<tag>/metrics_<tag>.csv`,
/// `<output_dir>/<tag>/checkpoint_final.bin` and `<output_dir>/summary.csv`.
/// Worker parallelism is capped by `threads` (default: GCDLAB_THREADS, else 1).
/// Returns 0 when every run succeeded.
int run_experiment(const ExperimentConfig& cfg, const Logger& log = {},
                   std::optional<int> threads = std::nullopt);

/// Renders accuracy.svg, known_count.svg and comparison.txt into `out`. Inputs are metrics CSV
/// files or directories searched recursively for metrics_*.csv. Unusable inputs are skipped;
/// returns nonzero only if none were usable.
int emit_report(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out,
                const Logger& log = {});

/// Worker cap from GCDLAB_THREADS (>= 1; 1 when unset or invalid).
int threads_from_env();

}  // namespace gcdlab
