#include "s2fp8/codec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "s2fp8/error.hpp"
#include "s2fp8/float_format.hpp"
#include "s2fp8/tensor_io.hpp"

namespace s2fp8 {

namespace {

// The log-domain center mu is kept on a 2^-40 grid. Any value on the grid
// with |mu| < 2^11 is exact in binary64, so shifting a tensor by 2^k moves mu
// by exactly k and every transform below sees identical fractional parts.
constexpr double kCenterGrid = 0x1p-40;

double snap_to_grid(double v) { return std::nearbyint(v / kCenterGrid) * kCenterGrid; }

// |x| = 2^(exponent + frac), frac in [0, 1).
struct Log2Split {
  int exponent;
  double frac;
};

Log2Split split_log2(float x) {
  int e;
  const double f = std::frexp(std::fabs(static_cast<double>(x)), &e);
  return {e - 1, std::log2(2.0 * f)};
}

// mu = integral + frac, with integral = floor(mu).
struct Center {
  int integral;
  double frac;
};

Center center_of(const S2Stats& stats) {
  if (!(stats.alpha > 0.0) || !std::isfinite(stats.alpha) || !std::isfinite(stats.beta)) {
    throw ConfigError("S2FP8 statistics need a finite alpha > 0 and a finite beta");
  }
  const double mu = snap_to_grid(-stats.beta / stats.alpha);
  const double integral = std::floor(mu);
  if (std::fabs(integral) > 4096.0) throw ConfigError("S2FP8 shift factor out of range");
  return {static_cast<int>(integral), mu - integral};
}

void check_target_max(double target_max) {
  if (!(target_max > 0.0) || !(target_max <= max_target_max())) {
    throw ConfigError("target_max must lie in (0, " + std::to_string(max_target_max()) + "], got " +
                      std::to_string(target_max));
  }
}

}  // namespace

bool S2Stats::regular() const noexcept { return n_nonzero >= 2 && m > mu; }

double max_target_max() {
  static const double value = std::log2(static_cast<double>(max_normal_value(kFP8)));
  return value;
}

S2Stats compute_statistics(const Tensor& x, double target_max) {
  check_target_max(target_max);
  S2Stats s;
  s.target_max = target_max;

  float max_abs = 0.0f;
  float min_abs = std::numeric_limits<float>::infinity();
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::isfinite(in[i])) throw NumericError("compute_statistics: non-finite input", i);
    const float a = std::fabs(in[i]);
    if (a == 0.0f) continue;
    ++s.n_nonzero;
    max_abs = std::max(max_abs, a);
    min_abs = std::min(min_abs, a);
  }
  if (s.n_nonzero == 0) return s;

  const Log2Split top = split_log2(max_abs);
  if (min_abs == max_abs) {
    s.mu = s.m = top.exponent + top.frac;
    s.alpha = 1.0;
    s.beta = target_max - s.m;
    return s;
  }

  // Logs relative to the exponent of the largest element, so the reduction is
  // independent of power-of-two scaling of the input.
  double sum = 0.0;
  for (float v : in) {
    if (v == 0.0f) continue;
    const Log2Split sp = split_log2(v);
    sum += static_cast<double>(sp.exponent - top.exponent) + sp.frac;
  }
  const double mu_local = snap_to_grid(sum / static_cast<double>(s.n_nonzero));
  const double m_local = top.frac;
  const double spread = m_local - mu_local;

  s.m = top.exponent + m_local;
  if (spread > 0.0) {
    s.mu = top.exponent + mu_local;
    s.alpha = target_max / spread;
    s.beta = -s.alpha * s.mu;
  } else {
    // Distinct magnitudes too close for the mean to separate from the max.
    s.mu = s.m;
    s.alpha = 1.0;
    s.beta = target_max - s.m;
  }
  return s;
}

Tensor shift_squeeze(const Tensor& x, const S2Stats& stats) {
  const Center c = center_of(stats);
  Tensor y(x.shape());
  const auto in = x.data();
  auto out = y.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const float v = in[i];
    if (!std::isfinite(v)) throw NumericError("shift_squeeze: non-finite input", i);
    if (v == 0.0f) {
      out[i] = v;
      continue;
    }
    const Log2Split sp = split_log2(v);
    // alpha * log2|x| + beta == alpha * (log2|x| - mu)
    const double log_y = stats.alpha * (static_cast<double>(sp.exponent - c.integral) + (sp.frac - c.frac));
    if (log_y >= 128.0) throw NumericError("shift_squeeze: transformed magnitude overflows binary32", i);
    const auto mag = static_cast<float>(std::exp2(log_y));
    out[i] = std::signbit(v) ? -mag : mag;
  }
  return y;
}

Tensor inverse_shift_squeeze(const Tensor& y, const S2Stats& stats) {
  const Center c = center_of(stats);
  Tensor x(y.shape());
  const auto in = y.data();
  auto out = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const float v = in[i];
    if (!std::isfinite(v)) throw NumericError("inverse_shift_squeeze: non-finite input", i);
    if (v == 0.0f) {
      out[i] = v;
      continue;
    }
    const Log2Split sp = split_log2(v);
    // (log2|y| - beta) / alpha == log2|y| / alpha + mu
    const double w = (sp.exponent + sp.frac) / stats.alpha + c.frac;
    const double mag = std::ldexp(std::exp2(w), c.integral);
    if (!(mag <= std::numeric_limits<float>::max())) {
      throw NumericError("inverse_shift_squeeze: reconstructed magnitude overflows binary32", i);
    }
    const auto f = static_cast<float>(mag);
    out[i] = std::signbit(v) ? -f : f;
  }
  return x;
}

Tensor s2fp8_truncate(const Tensor& x, const S2Stats& stats) {
  return inverse_shift_squeeze(truncate_tensor(shift_squeeze(x, stats), kFP8), stats);
}

Tensor s2fp8_truncate(const Tensor& x, double target_max) {
  return s2fp8_truncate(x, compute_statistics(x, target_max));
}

S2Encoded encode(const Tensor& x, const S2Stats& stats) {
  const Tensor truncated = truncate_tensor(shift_squeeze(x, stats), kFP8);
  S2Encoded e;
  e.stats = stats;
  e.shape = x.shape();
  e.codes.reserve(truncated.size());
  for (float v : truncated.data()) e.codes.push_back(static_cast<std::uint8_t>(encode_bits(v, kFP8)));
  return e;
}

S2Encoded encode(const Tensor& x, double target_max) {
  return encode(x, compute_statistics(x, target_max));
}

Tensor decode(const S2Encoded& encoded) {
  if (encoded.codes.size() != shape_size(encoded.shape)) {
    throw ConfigError("S2FP8 container holds " + std::to_string(encoded.codes.size()) +
                      " codes for shape " + shape_to_string(encoded.shape));
  }
  Tensor y(encoded.shape);
  for (std::size_t i = 0; i < encoded.codes.size(); ++i) {
    try {
      y[i] = decode_bits(encoded.codes[i], kFP8);
    } catch (const ConfigError& err) {
      throw ConfigError(std::string(err.what()) + " at code " + std::to_string(i));
    }
  }
  return inverse_shift_squeeze(y, encoded.stats);
}

// ---------------------------------------------------------------------------
// S2F8 container

namespace {
constexpr char kMagic[4] = {'S', '2', 'F', '8'};
}

void write_encoded(std::ostream& out, const S2Encoded& encoded) {
  if (encoded.codes.size() != shape_size(encoded.shape) || encoded.shape.empty()) {
    throw IoError("S2FP8 container shape does not match its codes");
  }
  out.write(kMagic, 4);
  out.put(static_cast<char>(kS2F8Version));
  detail::put_f64_le(out, encoded.stats.target_max);
  detail::put_f64_le(out, encoded.stats.alpha);
  detail::put_f64_le(out, encoded.stats.beta);
  detail::put_u64_le(out, encoded.stats.n_nonzero);
  detail::put_u32_le(out, static_cast<std::uint32_t>(encoded.shape.size()));
  for (std::size_t d : encoded.shape) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw IoError("dimension exceeds 32 bits");
    detail::put_u32_le(out, static_cast<std::uint32_t>(d));
  }
  out.write(reinterpret_cast<const char*>(encoded.codes.data()),
            static_cast<std::streamsize>(encoded.codes.size()));
  if (!out) throw IoError("failed writing S2F8 container");
}

S2Encoded read_encoded(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad S2F8 magic at offset 0");
  const int version = in.get();
  if (version != kS2F8Version) throw IoError("unsupported S2F8 version " + std::to_string(version));

  S2Encoded e;
  S2Stats& s = e.stats;
  s.target_max = detail::get_f64_le(in, "target_max");
  s.alpha = detail::get_f64_le(in, "alpha");
  s.beta = detail::get_f64_le(in, "beta");
  s.n_nonzero = detail::get_u64_le(in, "n_nonzero");
  if (!(s.alpha > 0.0) || !std::isfinite(s.alpha) || !std::isfinite(s.beta) || !std::isfinite(s.target_max)) {
    throw IoError("S2F8 statistics are not finite with alpha > 0");
  }
  if (s.n_nonzero > 0) {
    s.mu = -s.beta / s.alpha;
    s.m = (s.target_max - s.beta) / s.alpha;
  }

  const std::uint32_t rank = detail::get_u32_le(in, "rank");
  if (rank == 0 || rank > 8) throw IoError("unsupported S2F8 rank " + std::to_string(rank));
  e.shape.resize(rank);
  std::uint64_t count = 1;
  for (auto& d : e.shape) {
    d = detail::get_u32_le(in, "dimension");
    if (d == 0) throw IoError("S2F8 dimension of zero");
    count *= d;
    if (count > (std::uint64_t{1} << 32)) throw IoError("S2F8 element count overflows");
  }
  e.codes.resize(count);
  if (!in.read(reinterpret_cast<char*>(e.codes.data()), static_cast<std::streamsize>(count))) {
    throw IoError("S2F8 payload truncated: expected " + std::to_string(count) + " codes");
  }
  return e;
}

void save_encoded(const std::filesystem::path& path, const S2Encoded& encoded) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_encoded(out, encoded);
}

S2Encoded load_encoded(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_encoded(in);
}

}  // namespace s2fp8
