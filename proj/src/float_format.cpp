#include "s2fp8/float_format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "s2fp8/error.hpp"
#include "s2fp8/tensor.hpp"

namespace s2fp8 {

FloatFormat::FloatFormat(int exp_bits, int man_bits) : exp_bits_(exp_bits), man_bits_(man_bits) {
  if (exp_bits < 2) {
    throw ConfigError("float format needs at least 2 exponent bits, got " +
                      std::to_string(exp_bits));
  }
  if (man_bits < 0) {
    throw ConfigError("float format needs a nonnegative mantissa width, got " +
                      std::to_string(man_bits));
  }
  if (1 + exp_bits + man_bits > 32) {
    throw ConfigError("float format wider than 32 bits: 1/" + std::to_string(exp_bits) + "/" +
                      std::to_string(man_bits));
  }
}

std::string FloatFormat::name() const {
  if (*this == kFP8) return "FP8";
  if (*this == kFP16) return "FP16";
  if (*this == kBF16) return "BF16";
  if (*this == kFP32) return "FP32";
  return "E" + std::to_string(exp_bits_) + "M" + std::to_string(man_bits_);
}

FloatFormat make_format(int exp_bits, int man_bits) { return FloatFormat(exp_bits, man_bits); }

// ---------------------------------------------------------------------------
// Dyadic

double Dyadic::to_double() const {
  return std::ldexp(static_cast<double>(significand), exponent);
}

bool Dyadic::is_power_of_two() const noexcept { return std::has_single_bit(significand); }

int Dyadic::log2() const noexcept {
  return exponent + static_cast<int>(std::bit_width(significand)) - 1;
}

namespace {

Dyadic normalized(Dyadic d) {
  if (d.significand == 0) return {0, 0};
  const int tz = std::countr_zero(d.significand);
  return {d.significand >> tz, d.exponent + tz};
}

std::string pow2(int k) { return "2^" + std::to_string(k); }

}  // namespace

bool operator==(const Dyadic& a, const Dyadic& b) noexcept {
  const Dyadic na = normalized(a);
  const Dyadic nb = normalized(b);
  return na.significand == nb.significand && na.exponent == nb.exponent;
}

std::string Dyadic::to_string() const {
  const Dyadic n = normalized(*this);
  if (n.significand == 0) return "0";
  if (n.significand == 1) return pow2(n.exponent);
  // 2^j - 1 = (1 - 2^-j) * 2^j
  if (std::has_single_bit(n.significand + 1)) {
    const int j = std::bit_width(n.significand);
    return "(1-" + pow2(-j) + ")*" + pow2(n.exponent + j);
  }
  return std::to_string(n.significand) + "*" + pow2(n.exponent);
}

// ---------------------------------------------------------------------------
// Properties

FormatProperties format_properties(const FloatFormat& fmt) {
  const int man = fmt.man_bits();
  const int bias = fmt.bias();
  FormatProperties p;
  p.min_subnormal = {1, 1 - bias - man};
  p.min_normal = {1, 1 - bias};
  p.max_normal = {(std::uint64_t{1} << (man + 1)) - 1, bias - man};
  p.machine_epsilon = {1, -man - 1};
  // ceil(log2(max_normal / min_subnormal)) = ceil(log2(sig)) + 2*bias - 1
  const std::uint64_t sig = p.max_normal.significand;
  p.range_log2 = static_cast<int>(std::bit_width(sig - 1)) + 2 * bias - 1;
  return p;
}

float max_normal_value(const FloatFormat& fmt) {
  const int man = fmt.man_bits();
  return std::ldexp(static_cast<float>((std::uint32_t{1} << (man + 1)) - 1), fmt.bias() - man);
}

// ---------------------------------------------------------------------------
// Truncation

namespace {

void require_binary32_embedding(const FloatFormat& fmt) {
  if (!fmt.embeds_in_binary32()) {
    throw ConfigError("format " + fmt.name() + " does not embed in binary32");
  }
}

// Builds the binary32 value r * 2^quantum. The caller guarantees the result is
// a normal or subnormal binary32 number.
float compose(std::uint32_t r, int quantum) {
  const int msb = std::bit_width(r) - 1;
  const int e = quantum + msb;
  std::uint32_t bits;
  if (e >= -126) {
    bits = (static_cast<std::uint32_t>(e + 127) << 23) | ((r << (23 - msb)) & 0x7fffffu);
  } else {
    bits = r << (quantum + 149);
  }
  return std::bit_cast<float>(bits);
}

float truncate_unchecked(float x, const FloatFormat& fmt, float max_normal) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t sign = bits & 0x80000000u;
  const std::uint32_t mag = bits & 0x7fffffffu;
  if (mag == 0) return x;

  const std::uint32_t exp_field = mag >> 23;
  const std::uint32_t frac = mag & 0x7fffffu;
  // |x| = sig * 2^lsb_exp, with its leading bit at 2^top_exp.
  std::uint32_t sig;
  int lsb_exp;
  int top_exp;
  if (exp_field == 0) {
    sig = frac;
    lsb_exp = -149;
    top_exp = static_cast<int>(std::bit_width(frac)) - 1 - 149;
  } else {
    sig = frac | 0x800000u;
    lsb_exp = static_cast<int>(exp_field) - 150;
    top_exp = static_cast<int>(exp_field) - 127;
  }

  const auto saturated = [&] { return std::bit_cast<float>(sign | std::bit_cast<std::uint32_t>(max_normal)); };
  if (top_exp > fmt.max_exponent()) return saturated();

  // Spacing of the target grid around |x|.
  const int quantum = std::max(top_exp, fmt.min_exponent()) - fmt.man_bits();
  const int shift = quantum - lsb_exp;
  float magnitude;
  if (shift <= 0) {
    magnitude = std::bit_cast<float>(mag);
  } else {
    std::uint32_t r = 0;
    if (shift <= 25) {
      r = sig >> shift;
      const std::uint32_t rem = sig & ((std::uint32_t{1} << shift) - 1);
      const std::uint32_t half = std::uint32_t{1} << (shift - 1);
      if (rem > half || (rem == half && (r & 1u))) ++r;
    }
    if (r == 0) return std::bit_cast<float>(sign);
    const int msb = std::bit_width(r) - 1;
    if (quantum + msb > fmt.max_exponent()) return saturated();
    magnitude = compose(r, quantum);
  }
  if (magnitude > max_normal) return saturated();
  return std::bit_cast<float>(sign | std::bit_cast<std::uint32_t>(magnitude));
}

}  // namespace

float truncate_rne(float x, const FloatFormat& fmt) {
  if (!std::isfinite(x)) throw NumericError("truncate_rne: non-finite input", 0);
  require_binary32_embedding(fmt);
  return truncate_unchecked(x, fmt, max_normal_value(fmt));
}

Tensor truncate_tensor(const Tensor& x, const FloatFormat& fmt) {
  require_binary32_embedding(fmt);
  const float max_normal = max_normal_value(fmt);
  Tensor out(x.shape());
  const auto in = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::isfinite(in[i])) throw NumericError("truncate_tensor: non-finite input", i);
    dst[i] = truncate_unchecked(in[i], fmt, max_normal);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bit patterns

float decode_bits(std::uint32_t bits, const FloatFormat& fmt) {
  require_binary32_embedding(fmt);
  const int e = fmt.exp_bits();
  const int m = fmt.man_bits();
  if (fmt.total_bits() < 32 && (bits >> fmt.total_bits()) != 0) {
    throw ConfigError("bit pattern wider than " + fmt.name());
  }
  const bool negative = ((bits >> (e + m)) & 1u) != 0;
  const std::uint32_t field = (bits >> m) & ((std::uint32_t{1} << e) - 1);
  const std::uint32_t mant = bits & ((std::uint32_t{1} << m) - 1);
  if (field == (std::uint32_t{1} << e) - 1) {
    throw ConfigError("reserved exponent field in " + fmt.name() + " pattern");
  }
  double v;
  if (field == 0) {
    v = std::ldexp(static_cast<double>(mant), fmt.min_exponent() - m);
  } else {
    v = std::ldexp(static_cast<double>((std::uint64_t{1} << m) + mant),
                   static_cast<int>(field) - fmt.bias() - m);
  }
  const float f = static_cast<float>(v);
  return negative ? -f : f;
}

std::uint32_t encode_bits(float value, const FloatFormat& fmt) {
  require_binary32_embedding(fmt);
  if (!std::isfinite(value)) throw NumericError("encode_bits: non-finite input", 0);
  const int e = fmt.exp_bits();
  const int m = fmt.man_bits();
  const std::uint32_t sign = std::signbit(value) ? std::uint32_t{1} << (e + m) : 0u;
  const double mag = std::fabs(static_cast<double>(value));
  if (mag == 0.0) return sign;

  int exponent;
  std::frexp(mag, &exponent);
  const int top = exponent - 1;
  std::uint32_t field;
  double mant;
  if (top < fmt.min_exponent()) {
    field = 0;
    mant = std::ldexp(mag, m - fmt.min_exponent());
  } else {
    field = static_cast<std::uint32_t>(top + fmt.bias());
    mant = std::ldexp(mag, m - top) - std::ldexp(1.0, m);
  }
  if (mant != std::floor(mant) || field >= (std::uint32_t{1} << e) - 1) {
    throw ConfigError("value is not representable in " + fmt.name());
  }
  return sign | (field << m) | static_cast<std::uint32_t>(mant);
}

std::vector<float> enumerate_representable(const FloatFormat& fmt) {
  if (fmt.total_bits() > 16) {
    throw ConfigError("enumerate_representable: " + fmt.name() + " is wider than 16 bits");
  }
  require_binary32_embedding(fmt);
  const std::uint32_t end = ((std::uint32_t{1} << fmt.exp_bits()) - 1) << fmt.man_bits();
  std::vector<float> values;
  values.reserve(end);
  for (std::uint32_t code = 0; code < end; ++code) values.push_back(decode_bits(code, fmt));
  return values;
}

}  // namespace s2fp8
