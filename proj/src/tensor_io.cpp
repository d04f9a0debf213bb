#include "s2fp8/tensor_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "s2fp8/error.hpp"

namespace s2fp8 {

namespace detail {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* field) {
  std::array<unsigned char, sizeof(U)> bytes;
  const auto offset = static_cast<long long>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw IoError(std::string("unexpected end of file reading ") + field + " at offset " +
                  std::to_string(offset));
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u32_le(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64_le(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f64_le(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32_le(std::istream& in, const char* field) { return get_le<std::uint32_t>(in, field); }
std::uint64_t get_u64_le(std::istream& in, const char* field) { return get_le<std::uint64_t>(in, field); }
double get_f64_le(std::istream& in, const char* field) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in, field));
}

}  // namespace detail

namespace {
constexpr char kMagic[4] = {'S', '2', 'T', '1'};
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  detail::put_u32_le(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw IoError("tensor dimension exceeds 32 bits");
    detail::put_u32_le(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) detail::put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("failed writing S2T1 tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("bad S2T1 magic at offset 0");
  }
  const std::uint32_t rank = detail::get_u32_le(in, "rank");
  if (rank == 0 || rank > kMaxRank) throw IoError("unsupported S2T1 rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = detail::get_u32_le(in, "dimension");
    if (d == 0) throw IoError("S2T1 dimension of zero");
    count *= d;
    if (count > (std::uint64_t{1} << 32)) throw IoError("S2T1 element count overflows");
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(detail::get_u32_le(in, "payload"));
    if (!std::isfinite(data[i])) throw IoError("non-finite S2T1 payload value at element " + std::to_string(i));
  }
  Tensor t(std::move(shape), std::move(data));
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace s2fp8
