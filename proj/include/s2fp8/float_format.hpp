#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace s2fp8 {

class Tensor;

/// An IEEE-like binary floating-point format: one sign bit, `exp_bits`
/// exponent bits and `man_bits` fraction bits. The all-ones exponent field is
/// reserved for infinity/NaN and subnormals are supported.
class FloatFormat {
public:
  /// Throws ConfigError unless exp_bits >= 2, man_bits >= 0 and the total
  /// width fits in 32 bits.
  FloatFormat(int exp_bits, int man_bits);

  int exp_bits() const noexcept { return exp_bits_; }
  int man_bits() const noexcept { return man_bits_; }
  int total_bits() const noexcept { return 1 + exp_bits_ + man_bits_; }
  int bias() const noexcept { return (1 << (exp_bits_ - 1)) - 1; }
  /// Smallest and largest unbiased exponent of a normal number.
  int min_exponent() const noexcept { return 1 - bias(); }
  int max_exponent() const noexcept { return bias(); }

  /// True when every value of the format is exactly a binary32 value, the
  /// precondition of truncate_rne.
  bool embeds_in_binary32() const noexcept { return exp_bits_ <= 8 && man_bits_ <= 23; }

  /// Conventional name ("FP8", "BF16", ...) or "E<e>M<m>".
  std::string name() const;

  friend bool operator==(const FloatFormat&, const FloatFormat&) = default;

private:
  int exp_bits_;
  int man_bits_;
};

FloatFormat make_format(int exp_bits, int man_bits);

inline const FloatFormat kFP8{5, 2};
inline const FloatFormat kFP16{5, 10};
inline const FloatFormat kBF16{8, 7};
inline const FloatFormat kFP32{8, 23};

/// An exact dyadic rational `significand * 2^exponent`.
struct Dyadic {
  std::uint64_t significand = 0;
  int exponent = 0;

  double to_double() const;
  bool is_power_of_two() const noexcept;
  /// Integer log2 of a power of two; only meaningful when is_power_of_two().
  int log2() const noexcept;
  /// "2^-16", or "(1-2^-3)*2^16" for significands of the form 2^k - 1.
  std::string to_string() const;

  friend bool operator==(const Dyadic& a, const Dyadic& b) noexcept;
};

struct FormatProperties {
  Dyadic min_subnormal;
  Dyadic min_normal;
  Dyadic max_normal;
  Dyadic machine_epsilon;  ///< unit round-off, 2^-(man_bits+1)
  int range_log2 = 0;      ///< ceil(log2(max_normal / min_subnormal))
};

FormatProperties format_properties(const FloatFormat& fmt);

/// Largest finite magnitude of `fmt` as a binary32 value.
float max_normal_value(const FloatFormat& fmt);

/// Rounds a finite binary32 value to the nearest value of `fmt`, ties to even.
/// Overflow saturates to +-max_normal, underflow flushes to a signed zero.
/// Throws NumericError for non-finite input and ConfigError when the format
/// does not embed in binary32.
float truncate_rne(float x, const FloatFormat& fmt);

/// Elementwise truncate_rne; errors carry the element index.
Tensor truncate_tensor(const Tensor& x, const FloatFormat& fmt);

/// Bit pattern (sign bit most significant) of a value exactly representable
/// in `fmt`. Throws ConfigError if `value` is not representable.
std::uint32_t encode_bits(float value, const FloatFormat& fmt);

/// Value of a bit pattern. Throws ConfigError for the reserved all-ones
/// exponent field or bits beyond the format width.
float decode_bits(std::uint32_t bits, const FloatFormat& fmt);

/// All finite nonnegative values of `fmt` in ascending order, starting at 0.
/// Limited to formats of at most 16 bits.
std::vector<float> enumerate_representable(const FloatFormat& fmt);

}  // namespace s2fp8
