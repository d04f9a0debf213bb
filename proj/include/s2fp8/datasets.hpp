#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "s2fp8/training.hpp"

namespace s2fp8 {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX file. Image files (rank 3) give [N x rows x cols] with pixels
/// scaled to [0, 1]; label files (rank 1) give the raw label values.
/// Throws IoError on bad magic, truncated payload or oversized dimensions.
Tensor load_idx(const std::filesystem::path& path);

std::vector<std::int32_t> load_idx_labels(const std::filesystem::path& path);

/// Images as [N x rows x cols x 1] with their labels.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

struct SplitDataset {
  Dataset train;
  Dataset val;
};

/// Gaussian class clusters. Class means sit on scaled coordinate axes so every
/// pair of means is `separation * sigma` apart.
struct BlobsSpec {
  std::size_t classes = 4;
  std::size_t features = 16;
  std::size_t train_samples = 2048;
  std::size_t val_samples = 512;
  double separation = 10.0;
  double sigma = 1.0;
};

SplitDataset make_blobs(const BlobsSpec& spec, std::uint64_t seed);

/// Features whose log2 magnitudes are uniform on [log2_min, log2_max]. Each
/// class has a random sign pattern; a sample takes its class pattern with
/// each sign flipped with probability `sign_noise`.
struct LogUniformSpec {
  std::size_t classes = 4;
  std::size_t features = 32;
  std::size_t train_samples = 2048;
  std::size_t val_samples = 512;
  double log2_min = -40.0;
  double log2_max = -20.0;
  double sign_noise = 0.0;
};

SplitDataset make_log_uniform(const LogUniformSpec& spec, std::uint64_t seed);

/// Tensor of random signs with log2 magnitudes uniform on [log2_min, log2_max].
Tensor log_uniform_tensor(Shape shape, double log2_min, double log2_max, std::uint64_t seed);

}  // namespace s2fp8
