#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "s2fp8/tensor.hpp"

namespace s2fp8 {

inline constexpr double kDefaultTargetMax = 15.0;

/// Per-tensor statistics of the shifted-and-squeezed representation.
///
/// `mu` and `m` are the mean and maximum of log2|x| over the nonzero
/// elements. The stored values satisfy log2|y| = alpha * log2|x| + beta.
///
/// Conventions where alpha = target_max / (m - mu) is undefined:
///  - no nonzero element: alpha = 1, beta = 0;
///  - a single nonzero magnitude: alpha = 1, beta = target_max - m.
struct S2Stats {
  double mu = 0.0;
  double m = 0.0;
  double alpha = 1.0;
  double beta = 0.0;
  std::uint64_t n_nonzero = 0;
  double target_max = kDefaultTargetMax;

  /// True when alpha and beta came from the regular formula rather than one
  /// of the degenerate conventions.
  bool regular() const noexcept;
};

/// Largest accepted target_max: log2 of the FP8 max normal.
double max_target_max();

/// Statistics of `x`. The reduction runs sequentially in element order.
/// Throws NumericError for a non-finite element and ConfigError for a
/// target_max outside (0, max_target_max()].
S2Stats compute_statistics(const Tensor& x, double target_max = kDefaultTargetMax);

/// y_i = sign(x_i) * 2^(alpha * log2|x_i| + beta), zeros kept, evaluated in the
/// log domain at binary64 precision.
Tensor shift_squeeze(const Tensor& x, const S2Stats& stats);

/// x_i = sign(y_i) * 2^((log2|y_i| - beta) / alpha), zeros kept.
Tensor inverse_shift_squeeze(const Tensor& y, const S2Stats& stats);

/// Statistics, shift-and-squeeze, FP8 round-to-nearest-even, then the inverse
/// transform. Equal to decode(encode(x, target_max)) bit for bit.
Tensor s2fp8_truncate(const Tensor& x, double target_max = kDefaultTargetMax);

/// Same as s2fp8_truncate with caller-supplied statistics.
Tensor s2fp8_truncate(const Tensor& x, const S2Stats& stats);

struct S2Encoded {
  S2Stats stats;
  std::vector<std::uint8_t> codes;  ///< FP8 patterns, sign bit most significant
  Shape shape;
};

S2Encoded encode(const Tensor& x, double target_max = kDefaultTargetMax);
S2Encoded encode(const Tensor& x, const S2Stats& stats);

/// Throws ConfigError if a code uses the reserved exponent field or the code
/// count disagrees with the shape.
Tensor decode(const S2Encoded& encoded);

// S2F8 container: "S2F8", version byte, target_max, alpha, beta (f64 LE),
// n_nonzero (u64 LE), rank (u32 LE), dims (u32 LE each), one code byte per
// element. mu and m are not stored; reading reconstructs them from alpha and
// beta.

inline constexpr std::uint8_t kS2F8Version = 1;

void write_encoded(std::ostream& out, const S2Encoded& encoded);
S2Encoded read_encoded(std::istream& in);
void save_encoded(const std::filesystem::path& path, const S2Encoded& encoded);
S2Encoded load_encoded(const std::filesystem::path& path);

}  // namespace s2fp8
