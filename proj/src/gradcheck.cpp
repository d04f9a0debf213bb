#include "s2fp8/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "s2fp8/error.hpp"

namespace s2fp8 {

namespace {

struct RefLayer {
  LayerKind kind;
  std::string name;
  Shape weight_shape;
  std::vector<double> weights;
  std::vector<double> bias;
  std::size_t stride;
  std::size_t pad;
};

struct Activation {
  Shape shape;  // includes the batch dimension
  std::vector<double> data;
};

std::vector<RefLayer> to_reference(const Model& model) {
  std::vector<RefLayer> out;
  for (const Layer& l : model.layers) {
    out.push_back({l.kind, l.name, l.weights.shape(), std::vector<double>(l.weights.data().begin(), l.weights.data().end()),
                   std::vector<double>(l.bias.data().begin(), l.bias.data().end()), l.stride, l.pad});
  }
  return out;
}

Activation dense_ref(const Activation& x, const RefLayer& l) {
  const std::size_t batch = x.shape[0];
  const std::size_t in = x.data.size() / batch;
  const std::size_t out = l.weight_shape[1];
  if (in != l.weight_shape[0]) throw ShapeError("reference dense: input width mismatch");
  Activation y{{batch, out}, std::vector<double>(batch * out)};
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = l.bias.empty() ? 0.0 : l.bias[j];
      for (std::size_t k = 0; k < in; ++k) acc += x.data[n * in + k] * l.weights[k * out + j];
      y.data[n * out + j] = acc;
    }
  }
  return y;
}

Activation conv_ref(const Activation& x, const RefLayer& l) {
  const std::size_t batch = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3];
  const std::size_t kr = l.weight_shape[0], ks = l.weight_shape[1], f = l.weight_shape[3];
  const std::size_t oh = (h + 2 * l.pad - kr) / l.stride + 1;
  const std::size_t ow = (w + 2 * l.pad - ks) / l.stride + 1;
  Activation y{{batch, oh, ow, f}, std::vector<double>(batch * oh * ow * f)};
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t of = 0; of < f; ++of) {
          double acc = l.bias.empty() ? 0.0 : l.bias[of];
          for (std::size_t r = 0; r < kr; ++r)
            for (std::size_t s = 0; s < ks; ++s) {
              const long iy = static_cast<long>(oy * l.stride + r) - static_cast<long>(l.pad);
              const long ix = static_cast<long>(ox * l.stride + s) - static_cast<long>(l.pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              for (std::size_t ch = 0; ch < c; ++ch) {
                acc += x.data[((n * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c + ch] *
                       l.weights[((r * ks + s) * c + ch) * f + of];
              }
            }
          y.data[((n * oh + oy) * ow + ox) * f + of] = acc;
        }
  return y;
}

double loss_ref(const std::vector<RefLayer>& layers, const Tensor& inputs, std::span<const std::int32_t> labels) {
  Activation x{inputs.shape(), std::vector<double>(inputs.data().begin(), inputs.data().end())};
  for (const RefLayer& l : layers) {
    switch (l.kind) {
      case LayerKind::dense: x = dense_ref(x, l); break;
      case LayerKind::conv2d: x = conv_ref(x, l); break;
      case LayerKind::relu:
        for (double& v : x.data) v = std::max(v, 0.0);
        break;
    }
  }
  const std::size_t batch = x.shape[0];
  const std::size_t classes = x.data.size() / batch;
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = x.data.data() + n * classes;
    const double peak = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - peak);
    total += std::log(z) - (row[labels[n]] - peak);
  }
  return total / static_cast<double>(batch);
}

}  // namespace

double reference_loss(const Model& model, const Tensor& inputs, std::span<const std::int32_t> labels) {
  return loss_ref(to_reference(model), inputs, labels);
}

Gradients fp32_gradients(const Model& model, const Tensor& inputs, std::span<const std::int32_t> labels) {
  const QuantConfig fp32{};
  const ForwardResult fwd = forward(model, inputs, fp32);
  const LossAndGrad lg = softmax_cross_entropy(fwd.logits, labels);
  return backward(model, fwd, lg.grad, fp32);
}

GradCheckReport compare_with_finite_differences(const Model& model, const Tensor& inputs,
                                                std::span<const std::int32_t> labels, const Gradients& analytic,
                                                const GradCheckOptions& options) {
  if (analytic.weights.size() != model.layers.size() || analytic.bias.size() != model.layers.size()) {
    throw ShapeError("gradient check: gradients do not match the model");
  }
  std::vector<RefLayer> ref = to_reference(model);
  GradCheckReport report;
  report.threshold = options.threshold;

  const auto check = [&](std::vector<double>& params, const Tensor& grad, const std::string& label) {
    if (grad.size() != params.size()) throw ShapeError("gradient check: " + label + " has the wrong size");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + options.step;
      const double up = loss_ref(ref, inputs, labels);
      params[i] = saved - options.step;
      const double down = loss_ref(ref, inputs, labels);
      params[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = grad[i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), options.floor});
      const double err = std::fabs(a - numeric) / denom;
      ++report.checked;
      if (report.worst_parameter.empty() || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = label + "[" + std::to_string(i) + "]";
      }
    }
  };

  for (std::size_t li = 0; li < ref.size(); ++li) {
    if (ref[li].kind == LayerKind::relu) continue;
    check(ref[li].weights, analytic.weights[li], ref[li].name + ".W");
    if (!ref[li].bias.empty()) check(ref[li].bias, analytic.bias[li], ref[li].name + ".b");
  }
  report.passed = report.max_relative_error < options.threshold;
  return report;
}

GradCheckReport check_gradients(const Model& model, const Tensor& inputs, std::span<const std::int32_t> labels,
                                const GradCheckOptions& options) {
  return compare_with_finite_differences(model, inputs, labels, fp32_gradients(model, inputs, labels), options);
}

}  // namespace s2fp8
