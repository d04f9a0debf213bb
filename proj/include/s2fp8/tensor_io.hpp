#pragma once

#include <filesystem>
#include <iosfwd>

#include "s2fp8/tensor.hpp"

namespace s2fp8 {

// S2T1 layout: "S2T1", rank (u32 LE), dims (u32 LE each), then the payload as
// little-endian binary32 in row-major order.

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

namespace detail {

void put_u32_le(std::ostream& out, std::uint32_t v);
void put_u64_le(std::ostream& out, std::uint64_t v);
void put_f64_le(std::ostream& out, double v);
std::uint32_t get_u32_le(std::istream& in, const char* field);
std::uint64_t get_u64_le(std::istream& in, const char* field);
double get_f64_le(std::istream& in, const char* field);

}  // namespace detail

}  // namespace s2fp8
