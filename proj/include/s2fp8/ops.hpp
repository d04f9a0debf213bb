#pragma once

#include <cstdint>
#include <span>

#include "s2fp8/tensor.hpp"

namespace s2fp8 {

/// C = A * B for A [M x K], B [K x N]. Each output element accumulates in
/// binary32 over k in ascending order, so results are bit-reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

struct Conv2dGeometry {
  std::size_t batch = 0, in_h = 0, in_w = 0, in_c = 0;
  std::size_t kernel_h = 0, kernel_w = 0, out_c = 0;
  std::size_t stride = 1, pad = 0;
  std::size_t out_h = 0, out_w = 0;
};

/// Validates shapes and computes the output size
/// (H + 2*pad - R) / stride + 1 for NHWC input and RSCF weights.
Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& weights, std::size_t stride,
                               std::size_t pad);

/// Lowers an NHWC input to a [N*OH*OW x R*S*C] patch matrix.
Tensor im2col(const Tensor& input, const Conv2dGeometry& g);

/// Adjoint of im2col: scatters patch gradients back into an NHWC tensor.
Tensor col2im(const Tensor& cols, const Conv2dGeometry& g);

/// Cross-correlation of X [N x H x W x C] with W [R x S x C x F], computed
/// as im2col followed by matmul. Output is [N x OH x OW x F].
Tensor conv2d(const Tensor& input, const Tensor& weights, std::size_t stride, std::size_t pad);

Tensor relu(const Tensor& x);
/// 0/1 mask with relu_grad(0) == 0.
Tensor relu_grad(const Tensor& x);
/// Equal shapes, or one operand with a single element broadcast over the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);

/// Adds `bias` (length = last dimension) to every row of `x`.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
/// Sums over all but the last dimension.
Tensor column_sums(const Tensor& x);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Mean negative log-softmax of the true class over the batch, with the
/// gradient (softmax - onehot) / B. Throws ConfigError for labels outside
/// [0, C).
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels);

/// Row-wise argmax of a [B x C] tensor compared against labels.
std::size_t count_correct(const Tensor& logits, std::span<const std::int32_t> labels);

}  // namespace s2fp8
