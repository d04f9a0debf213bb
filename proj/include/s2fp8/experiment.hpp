#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "s2fp8/datasets.hpp"
#include "s2fp8/float_format.hpp"
#include "s2fp8/gradcheck.hpp"
#include "s2fp8/training.hpp"

namespace s2fp8 {

// ---------------------------------------------------------------------------
// Configuration
//
// {
//   "seed": 0,
//   "dataset": {"kind": "blobs" | "log_uniform" | "idx", ...},
//   "model": {"hidden": [64, 64], "bias": true, "conv": {"filters": 8, "kernel": 3, "stride": 1, "pad": 1}},
//   "optimizer": {"kind": "sgd_momentum" | "adam", "learning_rate": 0.05, ...},
//   "runs": [{"id": "fp32", "mode": "fp32"}, {"id": "s2", "mode": "s2fp8", "target_max": 15}],
//   "epochs": 5, "batch_size": 64,
//   "tracked": ["dense0.W", "dense0.dW"],
//   "checkgrad": {"samples": 8, "threshold": 1e-4}
// }
//
// Dataset fields: blobs {classes, features, train_samples, val_samples,
// separation, sigma}; log_uniform {classes, features, train_samples,
// val_samples, log2_min, log2_max, sign_noise}; idx {train_images,
// train_labels, val_images, val_labels}. Synthetic datasets accept
// "image_shape": [H, W, C] to feed a conv model.

enum class DatasetKind { blobs, log_uniform, idx };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::blobs;
  BlobsSpec blobs;
  LogUniformSpec log_uniform;
  std::filesystem::path train_images, train_labels, val_images, val_labels;
  std::optional<Shape> image_shape;
};

struct RunConfig {
  std::string id;
  QuantConfig quant;
};

struct CheckgradConfig {
  std::size_t samples = 8;
  double threshold = 1e-4;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::vector<std::size_t> hidden{64, 64};
  std::optional<ConvSpec> conv;
  bool bias = true;
  OptimizerConfig optimizer;
  std::vector<RunConfig> runs;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  std::vector<std::string> tracked;
  CheckgradConfig checkgrad;
};

/// Throws ConfigError for schema violations, missing seed or missing files.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Reads JSON from disk; throws IoError if unreadable or malformed, ConfigError
/// if the document violates the schema.
ExperimentConfig load_config(const std::filesystem::path& path);

SplitDataset load_dataset(const DatasetConfig& config, std::uint64_t seed);
ModelSpec model_spec(const ExperimentConfig& config, const Dataset& data);

// ---------------------------------------------------------------------------
// Running

struct RunOutcome {
  RunConfig run;
  TrainResult result;
};

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  nlohmann::json summary;
};

/// Trains every configured run from the same seed, initial weights and batch
/// order. Writes metrics.csv and summary.json into `out_dir` when non-empty.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Header: run_id,step,epoch,loss,accuracy,val_accuracy,batch_hash, then
/// <name>.mu,<name>.m,<name>.alpha,<name>.beta per tracked tensor.
void write_metrics_csv(std::ostream& out, const std::vector<RunOutcome>& runs);

struct MetricsRow {
  std::string run_id;
  RunMetrics metrics;
};

struct MetricsTable {
  std::vector<std::string> tracked_names;
  std::vector<MetricsRow> rows;
};

/// Parses a metrics.csv back into records. Throws IoError on schema errors.
MetricsTable read_metrics_csv(std::istream& in);

nlohmann::json make_summary(const ExperimentConfig& config, const std::vector<RunOutcome>& runs);

// ---------------------------------------------------------------------------
// Other subcommands

/// One row per format: name, bits, s/e/m, min subnormal, min normal,
/// max normal (exact and as the next power of two), machine epsilon, range.
std::string format_table(const std::vector<FloatFormat>& formats = {kFP32, kFP16, kBF16, kFP8});

struct QuantizeReport {
  S2Stats stats;
  std::size_t elements = 0;
  std::size_t flushed = 0;  ///< nonzero inputs that became zero
  double max_relative_error = 0.0;
  double flushed_fraction() const;
};

/// Quantizes `input` in FP8 or S2FP8 mode and measures the damage.
QuantizeReport quantize_report(const Tensor& input, const Tensor& output, const S2Stats& stats);

struct GradcheckRun {
  GradCheckReport report;
  std::size_t parameters = 0;
};

GradcheckRun run_checkgrad(const ExperimentConfig& config);

}  // namespace s2fp8
