#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace s2fp8 {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major binary32 tensor. Images use NHWC layout.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  /// Rank-1 tensor holding `values`.
  static Tensor from(std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& values() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Element (row, col) of a rank-2 tensor.
  float& at(std::size_t row, std::size_t col) {
    assert(rank() == 2);
    return data_[row * shape_[1] + col];
  }
  float at(std::size_t row, std::size_t col) const {
    assert(rank() == 2);
    return data_[row * shape_[1] + col];
  }

  /// Same data under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  /// Index of the first non-finite element, or size() if there is none.
  std::size_t first_non_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
  Shape shape_;
  std::vector<float> data_;
};

/// Throws NumericError naming the first non-finite element of `t`.
void require_finite(const Tensor& t, const char* what);

}  // namespace s2fp8
