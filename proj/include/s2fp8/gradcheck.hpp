#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "s2fp8/training.hpp"

namespace s2fp8 {

struct GradCheckOptions {
  double threshold = 1e-4;  ///< pass when max relative error is below this
  double step = 1e-5;       ///< central-difference step
  /// Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;  ///< e.g. "dense0.W[12]"
  double threshold = 0.0;
  bool passed = false;
};

/// Mean cross-entropy of `model` evaluated in binary64 by a reference
/// implementation that shares no code with forward().
double reference_loss(const Model& model, const Tensor& inputs, std::span<const std::int32_t> labels);

/// FP32-mode backprop gradients of the mean cross-entropy.
Gradients fp32_gradients(const Model& model, const Tensor& inputs, std::span<const std::int32_t> labels);

/// Compares `analytic` against central differences of reference_loss over
/// every weight and bias.
GradCheckReport compare_with_finite_differences(const Model& model, const Tensor& inputs,
                                                std::span<const std::int32_t> labels,
                                                const Gradients& analytic,
                                                const GradCheckOptions& options = {});

GradCheckReport check_gradients(const Model& model, const Tensor& inputs, std::span<const std::int32_t> labels,
                                const GradCheckOptions& options = {});

}  // namespace s2fp8
