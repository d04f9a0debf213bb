#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2fp8/codec.hpp"
#include "s2fp8/ops.hpp"
#include "s2fp8/tensor.hpp"

namespace s2fp8 {

// ---------------------------------------------------------------------------
// Precision modes

enum class QuantMode { fp32, fp8_rne, fp8_loss_scaled, s2fp8 };

std::string_view to_string(QuantMode mode);
/// Accepts "fp32", "fp8", "fp8_rne", "fp8_loss_scaled", "fp8_ls", "s2fp8".
QuantMode parse_quant_mode(std::string_view text);

/// Precision applied at every GEMM boundary.
///
/// `loss_scale` multiplies the loss gradient before backprop and divides the
/// weight gradients before the update. It is what makes FP8_LOSS_SCALED
/// differ from FP8_RNE; in the other modes it defaults to 1 and the pair of
/// scalings is an identity up to binary32 rounding.
struct QuantConfig {
  QuantMode mode = QuantMode::fp32;
  float loss_scale = 1.0f;
  double target_max = kDefaultTargetMax;

  /// Throws ConfigError for loss_scale <= 0 or an invalid target_max.
  void validate() const;
};

/// FP32: identity. FP8_RNE / FP8_LOSS_SCALED: truncate_tensor to FP8.
/// S2FP8: s2fp8_truncate with fresh statistics.
Tensor quantize_boundary(const Tensor& x, const QuantConfig& q);

// ---------------------------------------------------------------------------
// Model

enum class LayerKind { dense, conv2d, relu };

struct Layer {
  LayerKind kind = LayerKind::relu;
  std::string name;
  Tensor weights;  ///< dense: [in x out]; conv2d: [R x S x C x F]. FP32 master copy.
  Tensor bias;     ///< [out] or [F]; may be empty
  std::size_t stride = 1;
  std::size_t pad = 0;

  bool has_weights() const noexcept { return kind != LayerKind::relu; }
};

struct Model {
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
};

struct ConvSpec {
  std::size_t filters = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
};

struct ModelSpec {
  Shape input_shape;                ///< per sample: {D} or {H, W, C}
  std::vector<std::size_t> hidden;  ///< widths of the hidden dense layers
  std::size_t classes = 2;
  std::optional<ConvSpec> conv;     ///< leading conv2d + relu block
  bool bias = true;
};

/// He-normal weights, zero biases. Layers are named conv0, dense0, dense1, ...
Model build_model(const ModelSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward / backward

struct LayerCache {
  Shape input_shape;
  Tensor operand;         ///< quantized GEMM input (dense: [B x in], conv2d: patch matrix)
  Tensor weights_q;       ///< quantized weights as a matrix
  Tensor pre_activation;  ///< relu input
  Conv2dGeometry geometry;
};

struct ForwardResult {
  Tensor logits;
  std::vector<LayerCache> caches;
};

ForwardResult forward(const Model& model, const Tensor& batch, const QuantConfig& q);

/// Per-layer gradients; entries of relu layers are empty.
struct Gradients {
  std::vector<Tensor> weights;
  std::vector<Tensor> bias;
};

/// Backprop of `loss_grad` (dL/dlogits). The loss gradient is multiplied by
/// q.loss_scale first; each backward GEMM quantizes its incoming gradient and
/// its produced gradients.
Gradients backward(const Model& model, const ForwardResult& fwd, const Tensor& loss_grad,
                   const QuantConfig& q);

// ---------------------------------------------------------------------------
// Optimizer

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::size_t> milestones;  ///< epochs at which the rate is multiplied by gamma
  double gamma = 0.1;
};

struct OptimizerState {
  OptimizerConfig config;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::vector<Tensor> first;   ///< momentum / Adam first moment, per layer weights then bias
  std::vector<Tensor> second;  ///< Adam second moment

  float learning_rate() const;
};

OptimizerState make_optimizer(const OptimizerConfig& config, const Model& model);

/// Divides the gradients by q.loss_scale and takes one optimizer step on the
/// binary32 master weights.
void apply_update(Model& model, const Gradients& grads, OptimizerState& opt, const QuantConfig& q);

// ---------------------------------------------------------------------------
// Training loop

struct Dataset {
  Tensor inputs;  ///< [N x sample shape]
  std::vector<std::int32_t> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const;
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<std::int32_t> gather_labels(std::span<const std::size_t> indices) const;
};

struct RunMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;      ///< batch accuracy in percent
  double val_accuracy = 0.0;  ///< percent; NaN except on the last step of an epoch
  std::uint64_t batch_hash = 0;
  std::vector<S2Stats> tracked;
};

enum class RunStatus { ok, diverged };
std::string_view to_string(RunStatus status);

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::vector<std::string> tracked;  ///< "<layer>.W" or "<layer>.dW"; empty selects the default
};

struct TrainResult {
  RunStatus status = RunStatus::ok;
  std::vector<std::string> tracked_names;
  std::vector<RunMetrics> steps;
  double final_loss = 0.0;
  double train_accuracy = 0.0;  ///< percent, over the training set after the last epoch
  double val_accuracy = 0.0;    ///< percent
};

/// Up to 8 series: every weight tensor and its gradient, in layer order.
std::vector<std::string> default_tracked(const Model& model);

/// FNV-1a over the batch contents, used to check that runs see identical batches.
std::uint64_t batch_hash(const Tensor& inputs, std::span<const std::int32_t> labels);

/// Accuracy in percent of `model` on `data` with the given precision.
double evaluate(const Model& model, const Dataset& data, const QuantConfig& q, std::size_t batch_size = 256);

TrainResult train(Model& model, const Dataset& train_set, const Dataset* val_set, OptimizerState& opt,
                  const QuantConfig& q, const TrainOptions& options);

}  // namespace s2fp8
