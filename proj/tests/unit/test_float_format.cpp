#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "../oracle/fp8_oracle.hpp"
#include "s2fp8/error.hpp"
#include "s2fp8/float_format.hpp"
#include "s2fp8/tensor.hpp"

using namespace s2fp8;

namespace {

std::uint32_t bits_of(float f) { return std::bit_cast<std::uint32_t>(f); }

// IEEE binary16 pattern widened to binary32, computed from the definition.
float half_to_float(std::uint16_t h) {
  const int sign = h >> 15, e = (h >> 10) & 0x1f, m = h & 0x3ff;
  double v;
  if (e == 0x1f) return m ? std::numeric_limits<float>::quiet_NaN() : (sign ? -INFINITY : INFINITY);
  v = e == 0 ? std::ldexp(m, -24) : std::ldexp(1024 + m, e - 25);
  return static_cast<float>(sign ? -v : v);
}

}  // namespace

TEST(FloatFormat, PresetGeometry) {
  EXPECT_EQ(kFP8.bias(), 15);
  EXPECT_EQ(kFP8.min_exponent(), -14);
  EXPECT_EQ(kFP8.max_exponent(), 15);
  EXPECT_EQ(kFP8.total_bits(), 8);
  EXPECT_EQ(kFP32.bias(), 127);
  EXPECT_EQ(kFP8.name(), "FP8");
  EXPECT_EQ(make_format(4, 3).name(), "E4M3");
}

TEST(FloatFormat, RejectsInvalidGeometry) {
  EXPECT_THROW(FloatFormat(1, 2), ConfigError);
  EXPECT_THROW(FloatFormat(5, -1), ConfigError);
  EXPECT_THROW(FloatFormat(11, 52), ConfigError);
}

TEST(FormatProperties, Fp8) {
  const auto p = format_properties(kFP8);
  EXPECT_EQ(p.min_subnormal.to_double(), std::ldexp(1.0, -16));
  EXPECT_EQ(p.min_normal.to_double(), std::ldexp(1.0, -14));
  EXPECT_EQ(p.max_normal.to_double(), 57344.0);
  EXPECT_EQ(p.max_normal.to_double(), (1.0 - std::ldexp(1.0, -3)) * std::ldexp(1.0, 16));
  EXPECT_EQ(p.machine_epsilon.to_double(), 0.125);
  EXPECT_EQ(p.range_log2, 32);
  EXPECT_EQ(p.min_subnormal.to_string(), "2^-16");
  EXPECT_EQ(p.max_normal.to_string(), "(1-2^-3)*2^16");
}

TEST(FormatProperties, OtherPresets) {
  const auto h = format_properties(kFP16);
  EXPECT_EQ(h.min_subnormal.to_string(), "2^-24");
  EXPECT_EQ(h.min_normal.to_string(), "2^-14");
  EXPECT_EQ(h.machine_epsilon.to_string(), "2^-11");
  EXPECT_EQ(h.range_log2, 40);
  const auto b = format_properties(kBF16);
  EXPECT_EQ(b.min_subnormal.to_string(), "2^-133");
  EXPECT_EQ(b.min_normal.to_string(), "2^-126");
  EXPECT_EQ(b.machine_epsilon.to_string(), "2^-8");
  EXPECT_EQ(b.range_log2, 261);
  const auto f = format_properties(kFP32);
  EXPECT_EQ(f.min_subnormal.to_string(), "2^-149");
  EXPECT_EQ(f.min_normal.to_string(), "2^-126");
  EXPECT_EQ(f.machine_epsilon.to_string(), "2^-24");
  EXPECT_EQ(f.range_log2, 277);
  EXPECT_EQ(f.max_normal.to_double(), static_cast<double>(std::numeric_limits<float>::max()));
  EXPECT_EQ(max_normal_value(kFP16), 65504.0f);
}

TEST(TruncateRne, SpecExamples) {
  EXPECT_EQ(truncate_rne(1.0f, kFP8), 1.0f);
  EXPECT_EQ(truncate_rne(1.0625f, kFP8), 1.0f);
  EXPECT_EQ(truncate_rne(1.125f, kFP8), 1.0f);
  EXPECT_EQ(truncate_rne(1.375f, kFP8), 1.5f);  // tie, 1.5 has mantissa 10
  EXPECT_EQ(truncate_rne(std::ldexp(1.0f, -17), kFP8), 0.0f);
  EXPECT_EQ(truncate_rne(std::ldexp(1.0f, 20), kFP8), 57344.0f);
  EXPECT_EQ(truncate_rne(-std::ldexp(1.0f, 20), kFP8), -57344.0f);
  EXPECT_EQ(truncate_rne(61440.0f, kFP8), 57344.0f);
}

TEST(TruncateRne, SignedZero) {
  EXPECT_EQ(bits_of(truncate_rne(-0.0f, kFP8)), bits_of(-0.0f));
  EXPECT_EQ(bits_of(truncate_rne(-std::ldexp(1.0f, -30), kFP8)), bits_of(-0.0f));
  EXPECT_EQ(bits_of(truncate_rne(std::ldexp(1.0f, -30), kFP8)), 0u);
}

TEST(TruncateRne, NonFiniteIsError) {
  EXPECT_THROW(truncate_rne(std::numeric_limits<float>::infinity(), kFP8), NumericError);
  EXPECT_THROW(truncate_rne(std::numeric_limits<float>::quiet_NaN(), kFP8), NumericError);
}

TEST(TruncateRne, IdentityOnFp32) {
  std::mt19937 rng(3);
  for (int i = 0; i < 10000; ++i) {
    float f;
    std::uint32_t u = rng();
    std::memcpy(&f, &u, 4);
    if (!std::isfinite(f)) continue;
    EXPECT_EQ(bits_of(truncate_rne(f, kFP32)), u);
  }
}

TEST(TruncateRne, Fp16MatchesHardwareConversionGrid) {
  // every binary16 value is a fixed point of FP16 truncation
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const float f = half_to_float(static_cast<std::uint16_t>(h));
    if (!std::isfinite(f)) continue;
    ASSERT_EQ(bits_of(truncate_rne(f, kFP16)), bits_of(f)) << h;
  }
}

TEST(TruncateRne, ExhaustiveFp8Patterns) {
  for (unsigned b = 0; b < 256; ++b) {
    if (((b >> 2) & 0x1f) == 0x1f) continue;
    const float v = static_cast<float>(oracle::fp8_decode(static_cast<std::uint8_t>(b)));
    ASSERT_EQ(bits_of(truncate_rne(v, kFP8)), bits_of(v)) << b;
    ASSERT_EQ(encode_bits(v, kFP8), b);
    ASSERT_EQ(bits_of(decode_bits(b, kFP8)), bits_of(v));
  }
}

TEST(TruncateRne, Binary16InputsAgainstOracle) {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const float f = half_to_float(static_cast<std::uint16_t>(h));
    if (!std::isfinite(f)) continue;
    ASSERT_EQ(bits_of(truncate_rne(f, kFP8)), bits_of(oracle::fp8_round(f))) << f;
  }
}

TEST(TruncateRne, RandomInputsAgainstOracle) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> expo(-20.0, 18.0);
  for (int i = 0; i < 200000; ++i) {
    float f;
    if (i % 2) {
      const auto u = static_cast<std::uint32_t>(rng());
      std::memcpy(&f, &u, 4);
      if (!std::isfinite(f)) continue;
    } else {
      f = static_cast<float>(std::exp2(expo(rng))) * (rng() & 1 ? -1.0f : 1.0f);
    }
    ASSERT_EQ(bits_of(truncate_rne(f, kFP8)), bits_of(oracle::fp8_round(f))) << f;
  }
}

TEST(TruncateRne, MonotoneAndSymmetric) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> expo(-18.0, 17.0);
  for (int i = 0; i < 20000; ++i) {
    const auto x = static_cast<float>(std::exp2(expo(rng)));
    const auto y = static_cast<float>(std::exp2(expo(rng)));
    const float lo = std::min(x, y), hi = std::max(x, y);
    EXPECT_LE(truncate_rne(lo, kFP8), truncate_rne(hi, kFP8));
    EXPECT_LE(truncate_rne(-hi, kFP8), truncate_rne(-lo, kFP8));
    EXPECT_EQ(bits_of(truncate_rne(-x, kFP8)), bits_of(-truncate_rne(x, kFP8)));
  }
}

TEST(TruncateRne, RelativeErrorBoundInNormalRange) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> expo(-14.0, std::log2(57344.0));
  for (const FloatFormat& fmt : {kFP8, kFP16, kBF16, make_format(4, 3)}) {
    const double eps = std::ldexp(1.0, -fmt.man_bits() - 1);
    const double lo = std::ldexp(1.0, fmt.min_exponent());
    for (int i = 0; i < 20000; ++i) {
      const auto x = static_cast<float>(std::exp2(expo(rng)));
      if (x < lo || x > max_normal_value(fmt)) continue;
      EXPECT_LE(std::fabs(static_cast<double>(truncate_rne(x, fmt)) - x), eps * x);
    }
  }
}

TEST(TruncateTensor, ElementwiseWithIndexInErrors) {
  const Tensor t = Tensor::from({1.0625f, 1.125f, std::ldexp(1.0f, -17)});
  EXPECT_EQ(truncate_tensor(t, kFP8).values(), (std::vector<float>{1.0f, 1.0f, 0.0f}));
  EXPECT_EQ(truncate_tensor(Tensor({3, 2}), kFP8), Tensor({3, 2}));
  Tensor bad({4}, 1.0f);
  bad[2] = std::numeric_limits<float>::infinity();
  try {
    truncate_tensor(bad, kFP8);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(Enumerate, Fp8Values) {
  const auto v = enumerate_representable(kFP8);
  // 31 usable exponent fields x 4 mantissas, zero included
  EXPECT_EQ(v.size(), 124u);
  EXPECT_EQ(v.front(), 0.0f);
  EXPECT_EQ(v[1], std::ldexp(1.0f, -16));
  EXPECT_EQ(v[2], 2 * std::ldexp(1.0f, -16));
  EXPECT_EQ(v[3], 3 * std::ldexp(1.0f, -16));
  EXPECT_EQ(v[4], std::ldexp(1.0f, -14));
  EXPECT_EQ(v.back(), 57344.0f);
  EXPECT_TRUE(std::is_sorted(v.begin(), v.end()));
  EXPECT_EQ(std::adjacent_find(v.begin(), v.end()), v.end());
  for (float x : v) {
    EXPECT_EQ(truncate_rne(x, kFP8), x);
    EXPECT_EQ(bits_of(truncate_rne(-x, kFP8)), bits_of(-x));
  }
}

TEST(Enumerate, GuardsWideFormats) {
  EXPECT_EQ(enumerate_representable(kFP16).size(), 31u * 1024u);
  EXPECT_THROW(enumerate_representable(kFP32), ConfigError);
}

TEST(Bits, RejectsReservedAndUnrepresentable) {
  EXPECT_THROW(decode_bits(0x7c, kFP8), ConfigError);
  EXPECT_THROW(decode_bits(0x100, kFP8), ConfigError);
  EXPECT_THROW(encode_bits(1.0625f, kFP8), ConfigError);
  EXPECT_EQ(encode_bits(std::ldexp(1.0f, 15), kFP8), 0x78u);
  EXPECT_EQ(encode_bits(std::ldexp(1.0f, -15), kFP8), 0x02u);
}
