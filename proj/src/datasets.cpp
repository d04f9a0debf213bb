#include "s2fp8/datasets.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "s2fp8/error.hpp"

namespace s2fp8 {

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path, std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError(path.string() + ": truncated IDX header at offset " + std::to_string(offset));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

struct IdxRaw {
  std::uint32_t magic;
  Shape dims;
  std::vector<unsigned char> payload;
};

IdxRaw read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  IdxRaw raw;
  raw.magic = read_be32(in, path, 0);
  std::size_t rank;
  if (raw.magic == kIdxImagesMagic) {
    rank = 3;
  } else if (raw.magic == kIdxLabelsMagic) {
    rank = 1;
  } else {
    std::ostringstream msg;
    msg << path.string() << ": bad IDX magic 0x" << std::hex << raw.magic << " at offset 0";
    throw IoError(msg.str());
  }
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint32_t d = read_be32(in, path, 4 + 4 * i);
    if (d == 0) throw IoError(path.string() + ": zero IDX dimension at offset " + std::to_string(4 + 4 * i));
    count *= d;
    if (count > (std::uint64_t{1} << 32)) {
      throw IoError(path.string() + ": IDX dimensions overflow at offset " + std::to_string(4 + 4 * i));
    }
    raw.dims.push_back(d);
  }
  raw.payload.resize(count);
  const std::size_t header = 4 + 4 * rank;
  in.read(reinterpret_cast<char*>(raw.payload.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::uint64_t>(in.gcount()) != count) {
    throw IoError(path.string() + ": truncated IDX payload at offset " +
                  std::to_string(header + static_cast<std::size_t>(in.gcount())) + ", expected " +
                  std::to_string(count) + " bytes");
  }
  return raw;
}

}  // namespace

Tensor load_idx(const std::filesystem::path& path) {
  IdxRaw raw = read_idx(path);
  Tensor t(raw.dims);
  const float factor = raw.magic == kIdxImagesMagic ? 1.0f / 255.0f : 1.0f;
  for (std::size_t i = 0; i < raw.payload.size(); ++i) t[i] = static_cast<float>(raw.payload[i]) * factor;
  return t;
}

std::vector<std::int32_t> load_idx_labels(const std::filesystem::path& path) {
  IdxRaw raw = read_idx(path);
  if (raw.magic != kIdxLabelsMagic) throw IoError(path.string() + ": not an IDX label file");
  return std::vector<std::int32_t>(raw.payload.begin(), raw.payload.end());
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const Tensor img = load_idx(images);
  if (img.rank() != 3) throw IoError(images.string() + ": not an IDX image file");
  Dataset d;
  d.labels = load_idx_labels(labels);
  if (d.labels.size() != img.dim(0)) {
    throw IoError("IDX image/label count mismatch: " + std::to_string(img.dim(0)) + " vs " +
                  std::to_string(d.labels.size()));
  }
  d.inputs = img.reshaped({img.dim(0), img.dim(1), img.dim(2), 1});
  std::int32_t top = 0;
  for (auto l : d.labels) top = std::max(top, l);
  d.classes = static_cast<std::size_t>(top) + 1;
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

Dataset empty_split(std::size_t n, std::size_t features, std::size_t classes) {
  Dataset d;
  d.inputs = Tensor({n, features});
  d.labels.resize(n);
  d.classes = classes;
  return d;
}

}  // namespace

SplitDataset make_blobs(const BlobsSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2 || spec.features < spec.classes) {
    throw ConfigError("blobs need at least 2 classes and features >= classes");
  }
  if (!(spec.sigma > 0.0) || !(spec.separation >= 0.0)) throw ConfigError("blobs need sigma > 0 and separation >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  std::uniform_int_distribution<std::size_t> pick(0, spec.classes - 1);
  const double offset = spec.separation * spec.sigma / std::sqrt(2.0);

  SplitDataset out{empty_split(spec.train_samples, spec.features, spec.classes),
                   empty_split(spec.val_samples, spec.features, spec.classes)};
  for (Dataset* d : {&out.train, &out.val}) {
    for (std::size_t n = 0; n < d->size(); ++n) {
      const std::size_t c = pick(rng);
      d->labels[n] = static_cast<std::int32_t>(c);
      for (std::size_t j = 0; j < spec.features; ++j) {
        d->inputs[n * spec.features + j] = static_cast<float>(noise(rng) + (j == c ? offset : 0.0));
      }
    }
  }
  return out;
}

SplitDataset make_log_uniform(const LogUniformSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2 || spec.features == 0) throw ConfigError("log-uniform data needs >= 2 classes and features");
  if (!(spec.log2_min <= spec.log2_max) || spec.log2_min < -126.0 || spec.log2_max > 127.0) {
    throw ConfigError("log-uniform interval must be ordered and inside the binary32 normal range");
  }
  if (!(spec.sign_noise >= 0.0 && spec.sign_noise <= 1.0)) throw ConfigError("sign_noise must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<bool>> prototypes(spec.classes, std::vector<bool>(spec.features));
  for (auto& p : prototypes)
    for (std::size_t j = 0; j < spec.features; ++j) p[j] = coin(rng);

  std::uniform_real_distribution<double> exponent(spec.log2_min, spec.log2_max);
  std::bernoulli_distribution flip(spec.sign_noise);
  std::uniform_int_distribution<std::size_t> pick(0, spec.classes - 1);
  SplitDataset out{empty_split(spec.train_samples, spec.features, spec.classes),
                   empty_split(spec.val_samples, spec.features, spec.classes)};
  for (Dataset* d : {&out.train, &out.val}) {
    for (std::size_t n = 0; n < d->size(); ++n) {
      const std::size_t c = pick(rng);
      d->labels[n] = static_cast<std::int32_t>(c);
      for (std::size_t j = 0; j < spec.features; ++j) {
        const bool negative = prototypes[c][j] != flip(rng);
        const auto mag = static_cast<float>(std::exp2(exponent(rng)));
        d->inputs[n * spec.features + j] = negative ? -mag : mag;
      }
    }
  }
  return out;
}

Tensor log_uniform_tensor(Shape shape, double log2_min, double log2_max, std::uint64_t seed) {
  if (!(log2_min <= log2_max)) throw ConfigError("log-uniform interval must be ordered");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> exponent(log2_min, log2_max);
  std::bernoulli_distribution coin(0.5);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    const auto mag = static_cast<float>(std::exp2(exponent(rng)));
    v = coin(rng) ? -mag : mag;
  }
  return t;
}

}  // namespace s2fp8
