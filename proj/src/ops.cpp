#include "s2fp8/ops.hpp"

#include <algorithm>
#include <cmath>

#include "s2fp8/error.hpp"

namespace s2fp8 {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
  Tensor c({rows, cols});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  // i-k-j order: every c[i][j] still sums over k in ascending order.
  for (std::size_t i = 0; i < rows; ++i) {
    float* crow = pc + i * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const float aik = pa[i * inner + k];
      const float* brow = pb + k * cols;
      for (std::size_t j = 0; j < cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_to_string(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor t({cols, rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

// ---------------------------------------------------------------------------
// Convolution

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& weights, std::size_t stride,
                               std::size_t pad) {
  if (input.size() != 4 || weights.size() != 4) {
    throw ShapeError("conv2d: expected NHWC input and RSCF weights, got " + shape_to_string(input) +
                     " and " + shape_to_string(weights));
  }
  if (input[3] != weights[2]) {
    throw ShapeError("conv2d: input has " + std::to_string(input[3]) + " channels, weights expect " +
                     std::to_string(weights[2]));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  Conv2dGeometry g;
  g.batch = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.in_c = input[3];
  g.kernel_h = weights[0];
  g.kernel_w = weights[1];
  g.out_c = weights[3];
  g.stride = stride;
  g.pad = pad;
  const std::size_t ph = g.in_h + 2 * pad, pw = g.in_w + 2 * pad;
  if (g.kernel_h > ph || g.kernel_w > pw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  g.out_h = (ph - g.kernel_h) / stride + 1;
  g.out_w = (pw - g.kernel_w) / stride + 1;
  return g;
}

Tensor im2col(const Tensor& input, const Conv2dGeometry& g) {
  const std::size_t patch = g.kernel_h * g.kernel_w * g.in_c;
  Tensor cols({g.batch * g.out_h * g.out_w, patch});
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox, ++row) {
        float* dst = cols.data().data() + row * patch;
        for (std::size_t r = 0; r < g.kernel_h; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + r) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t s = 0; s < g.kernel_w; ++s) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + s) - static_cast<std::ptrdiff_t>(g.pad);
            float* cell = dst + (r * g.kernel_w + s) * g.in_c;
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
              continue;  // zero padding
            }
            const float* src = input.data().data() +
                               ((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
            std::copy(src, src + g.in_c, cell);
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Tensor& cols, const Conv2dGeometry& g) {
  const std::size_t patch = g.kernel_h * g.kernel_w * g.in_c;
  if (cols.rank() != 2 || cols.dim(0) != g.batch * g.out_h * g.out_w || cols.dim(1) != patch) {
    throw ShapeError("col2im: patch matrix " + shape_to_string(cols.shape()) + " does not match geometry");
  }
  Tensor out({g.batch, g.in_h, g.in_w, g.in_c});
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox, ++row) {
        const float* src = cols.data().data() + row * patch;
        for (std::size_t r = 0; r < g.kernel_h; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + r) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t s = 0; s < g.kernel_w; ++s) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + s) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
              continue;
            }
            const float* cell = src + (r * g.kernel_w + s) * g.in_c;
            float* dst = out.data().data() +
                         ((n * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += cell[c];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, std::size_t stride, std::size_t pad) {
  const Conv2dGeometry g = conv2d_geometry(input.shape(), weights.shape(), stride, pad);
  const Tensor cols = im2col(input, g);
  const Tensor w2 = weights.reshaped({g.kernel_h * g.kernel_w * g.in_c, g.out_c});
  return matmul(cols, w2).reshaped({g.batch, g.out_h, g.out_w, g.out_c});
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f, const char* name) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (b.size() == 1) return map(a, [&](float v) { return f(v, b[0]); });
  if (a.size() == 1) return map(b, [&](float v) { return f(a[0], v); });
  throw ShapeError(std::string(name) + ": cannot broadcast " + shape_to_string(a.shape()) + " with " +
                   shape_to_string(b.shape()));
}

}  // namespace

Tensor relu(const Tensor& x) {
  return map(x, [](float v) { return v > 0.0f ? v : 0.0f; });
}

Tensor relu_grad(const Tensor& x) {
  return map(x, [](float v) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, [](float x, float y) { return x + y; }, "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, [](float x, float y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& x, float factor) {
  return map(x, [factor](float v) { return v * factor; });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || x.shape().back() != bias.size()) {
    throw ShapeError("add_row_bias: bias of " + std::to_string(bias.size()) + " elements for " +
                     shape_to_string(x.shape()));
  }
  Tensor out = x;
  const std::size_t width = bias.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % width];
  return out;
}

Tensor column_sums(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("column_sums: scalar input");
  const std::size_t width = x.shape().back();
  Tensor out({width});
  for (std::size_t i = 0; i < x.size(); ++i) out[i % width] += x[i];
  return out;
}

// ---------------------------------------------------------------------------
// Loss

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_to_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  LossAndGrad out{0.0, Tensor({batch, classes})};
  std::vector<double> p(classes);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::int32_t label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ConfigError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
    const float* row = logits.data().data() + i * classes;
    double peak = row[0];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, static_cast<double>(row[c]));
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(static_cast<double>(row[c]) - peak);
      total += p[c];
    }
    out.loss += std::log(total) - (static_cast<double>(row[label]) - peak);
    for (std::size_t c = 0; c < classes; ++c) {
      const double target = static_cast<std::size_t>(label) == c ? 1.0 : 0.0;
      out.grad[i * classes + c] = static_cast<float>((p[c] / total - target) / static_cast<double>(batch));
    }
  }
  out.loss /= static_cast<double>(batch);
  return out;
}

std::size_t count_correct(const Tensor& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("count_correct: logits " + shape_to_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = logits.data().data() + i * classes;
    const auto best = static_cast<std::int32_t>(std::max_element(row, row + classes) - row);
    if (best == labels[i]) ++correct;
  }
  return correct;
}

}  // namespace s2fp8
