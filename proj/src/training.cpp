#include "s2fp8/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "s2fp8/error.hpp"
#include "s2fp8/float_format.hpp"

namespace s2fp8 {

std::string_view to_string(QuantMode mode) {
  switch (mode) {
    case QuantMode::fp32: return "fp32";
    case QuantMode::fp8_rne: return "fp8";
    case QuantMode::fp8_loss_scaled: return "fp8_loss_scaled";
    case QuantMode::s2fp8: return "s2fp8";
  }
  return "unknown";
}

QuantMode parse_quant_mode(std::string_view text) {
  if (text == "fp32") return QuantMode::fp32;
  if (text == "fp8" || text == "fp8_rne") return QuantMode::fp8_rne;
  if (text == "fp8_loss_scaled" || text == "fp8_ls") return QuantMode::fp8_loss_scaled;
  if (text == "s2fp8") return QuantMode::s2fp8;
  throw ConfigError("unknown precision mode '" + std::string(text) + "'");
}

void QuantConfig::validate() const {
  if (!(loss_scale > 0.0f) || !std::isfinite(loss_scale)) {
    throw ConfigError("loss_scale must be a finite positive number");
  }
  if (!(target_max > 0.0) || !(target_max <= max_target_max())) {
    throw ConfigError("target_max must lie in (0, " + std::to_string(max_target_max()) + "]");
  }
}

Tensor quantize_boundary(const Tensor& x, const QuantConfig& q) {
  switch (q.mode) {
    case QuantMode::fp32:
      require_finite(x, "quantize_boundary");
      return x;
    case QuantMode::fp8_rne:
    case QuantMode::fp8_loss_scaled:
      return truncate_tensor(x, kFP8);
    case QuantMode::s2fp8:
      return s2fp8_truncate(x, q.target_max);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Model

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor flatten_batch(const Tensor& x) {
  const std::size_t batch = x.dim(0);
  return x.reshaped({batch, x.size() / batch});
}

Layer relu_layer(std::string name) {
  Layer l;
  l.kind = LayerKind::relu;
  l.name = std::move(name);
  return l;
}

}  // namespace

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_shape.empty()) throw ConfigError("model input shape is empty");
  if (spec.classes < 2) throw ConfigError("model needs at least 2 classes");
  std::mt19937_64 rng(seed);
  Model model;
  Shape current = spec.input_shape;

  if (spec.conv) {
    if (current.size() != 3) throw ConfigError("conv2d layer needs an {H, W, C} input shape");
    const ConvSpec& c = *spec.conv;
    Shape w{c.kernel, c.kernel, current[2], c.filters};
    const Conv2dGeometry g = conv2d_geometry({1, current[0], current[1], current[2]}, w, c.stride, c.pad);
    Layer conv;
    conv.kind = LayerKind::conv2d;
    conv.name = "conv0";
    conv.weights = he_normal(w, c.kernel * c.kernel * current[2], rng);
    if (spec.bias) conv.bias = Tensor({c.filters});
    conv.stride = c.stride;
    conv.pad = c.pad;
    model.layers.push_back(std::move(conv));
    model.layers.push_back(relu_layer("relu_conv0"));
    current = {g.out_h, g.out_w, c.filters};
  }

  std::size_t width = shape_size(current);
  std::vector<std::size_t> outs = spec.hidden;
  outs.push_back(spec.classes);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    Layer dense;
    dense.kind = LayerKind::dense;
    dense.name = "dense" + std::to_string(i);
    dense.weights = he_normal({width, outs[i]}, width, rng);
    if (spec.bias) dense.bias = Tensor({outs[i]});
    model.layers.push_back(std::move(dense));
    if (i + 1 < outs.size()) model.layers.push_back(relu_layer("relu" + std::to_string(i)));
    width = outs[i];
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward

ForwardResult forward(const Model& model, const Tensor& batch, const QuantConfig& q) {
  if (batch.rank() < 2) throw ShapeError("forward: batch needs a leading batch dimension");
  ForwardResult result;
  result.caches.resize(model.layers.size());
  Tensor x = batch;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    LayerCache& cache = result.caches[li];
    cache.input_shape = x.shape();
    switch (layer.kind) {
      case LayerKind::dense: {
        const Tensor flat = flatten_batch(x);
        if (flat.dim(1) != layer.weights.dim(0)) {
          throw ShapeError("forward: " + layer.name + " expects " + std::to_string(layer.weights.dim(0)) +
                           " inputs, got " + std::to_string(flat.dim(1)));
        }
        cache.operand = quantize_boundary(flat, q);
        cache.weights_q = quantize_boundary(layer.weights, q);
        Tensor out = quantize_boundary(matmul(cache.operand, cache.weights_q), q);
        x = layer.bias.empty() ? std::move(out) : add_row_bias(out, layer.bias);
        break;
      }
      case LayerKind::conv2d: {
        cache.geometry = conv2d_geometry(x.shape(), layer.weights.shape(), layer.stride, layer.pad);
        const Conv2dGeometry& g = cache.geometry;
        cache.operand = im2col(quantize_boundary(x, q), g);
        cache.weights_q = quantize_boundary(layer.weights, q).reshaped({g.kernel_h * g.kernel_w * g.in_c, g.out_c});
        Tensor out = quantize_boundary(matmul(cache.operand, cache.weights_q), q);
        if (!layer.bias.empty()) out = add_row_bias(out, layer.bias);
        x = out.reshaped({g.batch, g.out_h, g.out_w, g.out_c});
        break;
      }
      case LayerKind::relu:
        cache.pre_activation = x;
        x = relu(x);
        break;
    }
  }
  result.logits = flatten_batch(x);
  return result;
}

Gradients backward(const Model& model, const ForwardResult& fwd, const Tensor& loss_grad, const QuantConfig& q) {
  if (fwd.caches.size() != model.layers.size()) throw ShapeError("backward: cache does not match the model");
  if (loss_grad.shape() != fwd.logits.shape()) {
    throw ShapeError("backward: loss gradient " + shape_to_string(loss_grad.shape()) + " for logits " +
                     shape_to_string(fwd.logits.shape()));
  }
  Gradients grads;
  grads.weights.resize(model.layers.size());
  grads.bias.resize(model.layers.size());

  Tensor grad = q.loss_scale == 1.0f ? loss_grad : scale(loss_grad, q.loss_scale);
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    const LayerCache& cache = fwd.caches[li];
    const bool need_input_grad = li > 0;
    switch (layer.kind) {
      case LayerKind::dense: {
        const Tensor g = quantize_boundary(flatten_batch(grad), q);
        if (!layer.bias.empty()) grads.bias[li] = column_sums(grad);
        grads.weights[li] = quantize_boundary(matmul(transpose(cache.operand), g), q);
        if (need_input_grad) {
          grad = quantize_boundary(matmul(g, transpose(cache.weights_q)), q).reshaped(cache.input_shape);
        }
        break;
      }
      case LayerKind::conv2d: {
        const Conv2dGeometry& geo = cache.geometry;
        const Tensor g = quantize_boundary(grad.reshaped({geo.batch * geo.out_h * geo.out_w, geo.out_c}), q);
        if (!layer.bias.empty()) grads.bias[li] = column_sums(grad);
        grads.weights[li] =
            quantize_boundary(matmul(transpose(cache.operand), g), q).reshaped(layer.weights.shape());
        if (need_input_grad) {
          grad = quantize_boundary(col2im(matmul(g, transpose(cache.weights_q)), geo), q);
        }
        break;
      }
      case LayerKind::relu:
        grad = mul(grad, relu_grad(cache.pre_activation));
        break;
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Optimizer

float OptimizerState::learning_rate() const {
  double lr = config.learning_rate;
  for (std::size_t milestone : config.milestones) {
    if (epoch >= milestone) lr *= config.gamma;
  }
  return static_cast<float>(lr);
}

OptimizerState make_optimizer(const OptimizerConfig& config, const Model& model) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  OptimizerState opt;
  opt.config = config;
  for (const auto& l : model.layers) {
    opt.first.emplace_back(l.weights.shape());
    opt.first.emplace_back(l.bias.shape());
    if (config.kind == OptimizerKind::adam) {
      opt.second.emplace_back(l.weights.shape());
      opt.second.emplace_back(l.bias.shape());
    }
  }
  return opt;
}

namespace {

void step_tensor(Tensor& w, const Tensor& grad, Tensor& m1, Tensor* m2, const OptimizerState& opt, float lr,
                 float inv_scale_divisor) {
  const OptimizerConfig& c = opt.config;
  if (grad.shape() != w.shape() || m1.shape() != w.shape()) {
    throw ShapeError("apply_update: gradient " + shape_to_string(grad.shape()) + " for weights " +
                     shape_to_string(w.shape()));
  }
  if (c.kind == OptimizerKind::sgd_momentum) {
    const auto mom = static_cast<float>(c.momentum);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float g = grad[i] / inv_scale_divisor;
      m1[i] = mom * m1[i] + g;
      w[i] -= lr * m1[i];
    }
    return;
  }
  const auto b1 = static_cast<float>(c.beta1);
  const auto b2 = static_cast<float>(c.beta2);
  const auto eps = static_cast<float>(c.epsilon);
  const auto t = static_cast<double>(opt.step);
  const auto c1 = static_cast<float>(1.0 - std::pow(c.beta1, t));
  const auto c2 = static_cast<float>(1.0 - std::pow(c.beta2, t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const float g = grad[i] / inv_scale_divisor;
    m1[i] = b1 * m1[i] + (1.0f - b1) * g;
    (*m2)[i] = b2 * (*m2)[i] + (1.0f - b2) * g * g;
    const float mhat = m1[i] / c1;
    const float vhat = (*m2)[i] / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

void apply_update(Model& model, const Gradients& grads, OptimizerState& opt, const QuantConfig& q) {
  if (grads.weights.size() != model.layers.size() || grads.bias.size() != model.layers.size()) {
    throw ShapeError("apply_update: gradients do not match the model");
  }
  if (opt.first.size() != 2 * model.layers.size()) throw ShapeError("apply_update: optimizer does not match the model");
  ++opt.step;
  const float lr = opt.learning_rate();
  const bool adam = opt.config.kind == OptimizerKind::adam;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    Layer& layer = model.layers[li];
    if (!layer.has_weights()) continue;
    step_tensor(layer.weights, grads.weights[li], opt.first[2 * li], adam ? &opt.second[2 * li] : nullptr, opt, lr,
                q.loss_scale);
    if (!layer.bias.empty()) {
      step_tensor(layer.bias, grads.bias[li], opt.first[2 * li + 1], adam ? &opt.second[2 * li + 1] : nullptr, opt,
                  lr, q.loss_scale);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

Shape Dataset::sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  Shape shape = inputs.shape();
  const std::size_t stride = inputs.size() / shape[0];
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.data().subspan(indices[i] * stride, stride);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::vector<std::int32_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::int32_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels[i]);
  return out;
}

std::string_view to_string(RunStatus status) { return status == RunStatus::ok ? "ok" : "diverged"; }

std::vector<std::string> default_tracked(const Model& model) {
  std::vector<std::string> names;
  for (const auto& l : model.layers) {
    if (!l.has_weights()) continue;
    names.push_back(l.name + ".W");
    names.push_back(l.name + ".dW");
  }
  if (names.size() > 8) names.resize(8);
  return names;
}

std::uint64_t batch_hash(const Tensor& inputs, std::span<const std::int32_t> labels) {
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](std::uint32_t word) {
    for (int i = 0; i < 4; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (float v : inputs.data()) mix(std::bit_cast<std::uint32_t>(v));
  for (std::int32_t l : labels) mix(static_cast<std::uint32_t>(l));
  return h;
}

double evaluate(const Model& model, const Dataset& data, const QuantConfig& q, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::vector<std::size_t> idx;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardResult fwd = forward(model, data.gather(idx), q);
    correct += count_correct(fwd.logits, data.gather_labels(idx));
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

struct TrackedRef {
  std::size_t layer;
  bool gradient;
};

std::vector<TrackedRef> resolve_tracked(const Model& model, const std::vector<std::string>& names) {
  std::vector<TrackedRef> refs;
  for (const auto& name : names) {
    const auto dot = name.rfind('.');
    const std::string layer_name = name.substr(0, dot);
    const std::string what = dot == std::string::npos ? "" : name.substr(dot + 1);
    if (what != "W" && what != "dW") throw ConfigError("tracked tensor '" + name + "' must end in .W or .dW");
    const auto it = std::find_if(model.layers.begin(), model.layers.end(),
                                 [&](const Layer& l) { return l.name == layer_name && l.has_weights(); });
    if (it == model.layers.end()) throw ConfigError("tracked tensor '" + name + "' names no weight layer");
    refs.push_back({static_cast<std::size_t>(it - model.layers.begin()), what == "dW"});
  }
  return refs;
}

}  // namespace

TrainResult train(Model& model, const Dataset& train_set, const Dataset* val_set, OptimizerState& opt,
                  const QuantConfig& q, const TrainOptions& options) {
  q.validate();
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (train_set.size() == 0) throw ConfigError("training set is empty");

  TrainResult result;
  result.tracked_names = options.tracked.empty() ? default_tracked(model) : options.tracked;
  const std::vector<TrackedRef> refs = resolve_tracked(model, result.tracked_names);

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::size_t step = 0;
  try {
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
      opt.epoch = epoch;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
        const std::size_t end = std::min(order.size(), start + options.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        const Tensor inputs = train_set.gather(idx);
        const std::vector<std::int32_t> labels = train_set.gather_labels(idx);

        const ForwardResult fwd = forward(model, inputs, q);
        const LossAndGrad lg = softmax_cross_entropy(fwd.logits, labels);

        RunMetrics rec;
        rec.step = ++step;
        rec.epoch = epoch;
        rec.loss = lg.loss;
        rec.accuracy = 100.0 * static_cast<double>(count_correct(fwd.logits, labels)) / static_cast<double>(labels.size());
        rec.val_accuracy = nan;
        rec.batch_hash = batch_hash(inputs, labels);
        result.final_loss = lg.loss;
        if (!std::isfinite(lg.loss)) {
          result.steps.push_back(std::move(rec));
          result.status = RunStatus::diverged;
          break;
        }

        const Gradients grads = backward(model, fwd, lg.grad, q);
        for (const TrackedRef& ref : refs) {
          const Tensor& t = ref.gradient ? grads.weights[ref.layer] : model.layers[ref.layer].weights;
          rec.tracked.push_back(compute_statistics(t, q.target_max));
        }
        apply_update(model, grads, opt, q);

        if (end == order.size() && val_set != nullptr) rec.val_accuracy = evaluate(model, *val_set, q);
        result.steps.push_back(std::move(rec));
      }
      if (result.status == RunStatus::diverged) break;
    }
  } catch (const NumericError&) {
    result.status = RunStatus::diverged;
  }

  if (result.status == RunStatus::ok) {
    try {
      result.train_accuracy = evaluate(model, train_set, q);
      result.val_accuracy = val_set != nullptr ? evaluate(model, *val_set, q) : nan;
    } catch (const NumericError&) {
      result.status = RunStatus::diverged;
    }
  }
  if (result.status == RunStatus::diverged) {
    result.train_accuracy = nan;
    result.val_accuracy = nan;
  }
  return result;
}

}  // namespace s2fp8
