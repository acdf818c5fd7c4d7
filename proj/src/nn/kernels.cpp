#include "dsam/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "dsam/common/error.hpp"

namespace dsam::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Aligned, Eigen-owned copy of a row-major block. All products use these.
RowMatrix owned(const double* data, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void store(const RowMatrix& m, double* dst) { std::copy_n(m.data(), m.size(), dst); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                      shape_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, k, stride, pad, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = weights.dim(0);
  g.k = weights.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weights.dim(1) != g.c) {
    throw ConfigError("conv2d: weights expect " + std::to_string(weights.dim(1)) + " input channels, input has " +
                      std::to_string(g.c) + " (weights " + shape_string(weights.shape()) + ", input " +
                      shape_string(input.shape()) + ")");
  }
  if (weights.dim(3) != g.k) throw ConfigError("conv2d: kernel must be square, got " + shape_string(weights.shape()));
  g.oh = conv_output_size(g.h, g.k, stride, padding);
  g.ow = conv_output_size(g.w, g.k, stride, padding);
  return g;
}

// cols is [C*k*k, OH*OW] for one sample.
void im2col(const double* src, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    const double* channel = src + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          double* out = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.ow, 0.0);
            continue;
          }
          const double* line = channel + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : line[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* dst) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    double* channel = dst + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* line = channel + static_cast<std::size_t>(iy) * g.w;
          const double* in = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) line[ix] += in[ox];
          }
        }
      }
    }
  }
}

// (outer, channels, inner) decomposition around `axis`.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  if (kernel == 0 || kernel > in + 2 * padding) {
    throw ConfigError("conv2d: kernel " + std::to_string(kernel) + " does not fit input " + std::to_string(in) +
                      " with padding " + std::to_string(padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                      std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  if (bias.size() != g.f) throw ConfigError("conv2d: bias length " + std::to_string(bias.size()) + " != filters " + std::to_string(g.f));
  const std::size_t patch = g.c * g.k * g.k;
  const std::size_t plane = g.oh * g.ow;
  Tensor out({g.n, g.f, g.oh, g.ow});
  RowMatrix col(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
  RowMatrix y(static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(plane));
  const RowMatrix w = owned(weights.data().data(), g.f, patch);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * g.c * g.h * g.w, g, col.data());
    y.noalias() = w * col;
    double* dst = out.data().data() + n * g.f * plane;
    store(y, dst);
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t p = 0; p < plane; ++p) dst[f * plane + p] += bias[f];
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out, std::size_t stride,
                            std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weights, stride, padding);
  const Shape expected{g.n, g.f, g.oh, g.ow};
  if (grad_out.shape() != expected) {
    throw ConfigError("conv2d backward: gradient shape " + shape_string(grad_out.shape()) + ", expected " +
                      shape_string(expected));
  }
  const std::size_t patch = g.c * g.k * g.k;
  const std::size_t plane = g.oh * g.ow;
  Conv2dGrads grads{Tensor(input.shape()), Tensor(weights.shape()), Tensor({g.f})};
  RowMatrix col(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
  RowMatrix dcol(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
  RowMatrix dw = RowMatrix::Zero(static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(patch));
  const RowMatrix wt = owned(weights.data().data(), g.f, patch).transpose();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.data().data() + n * g.c * g.h * g.w, g, col.data());
    const double* dyp = grad_out.data().data() + n * g.f * plane;
    const RowMatrix dy = owned(dyp, g.f, plane);
    dw.noalias() += dy * col.transpose();
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t p = 0; p < plane; ++p) grads.bias[f] += dyp[f * plane + p];
    dcol.noalias() = wt * dy;
    col2im(dcol.data(), g, grads.input.data().data() + n * g.c * g.h * g.w);
  }
  store(dw, grads.weights.data().data());
  return grads;
}

MaxPoolResult maxpool_forward(const Tensor& input, std::size_t size) {
  require_rank(input, 4, "maxpool input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (size == 0 || h % size != 0 || w % size != 0) {
    throw ConfigError("maxpool: spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by pool size " + std::to_string(size));
  }
  const std::size_t oh = h / size, ow = w / size;
  MaxPoolResult r{Tensor({n, c, oh, ow}), std::vector<std::uint32_t>(n * c * oh * ow)};
  const auto src = input.data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    const std::size_t base = nc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * size * w + ox * size;
        for (std::size_t dy = 0; dy < size; ++dy) {
          for (std::size_t dx = 0; dx < size; ++dx) {
            const std::size_t idx = base + (oy * size + dy) * w + ox * size + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        r.output[o] = src[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) throw ConfigError("maxpool backward: gradient does not match index map");
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += grad_out[i];
  return dx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = v < 0.0 ? 0.0 : v;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  return dx;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
  require_same_shape(y, grad_out, "sigmoid backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = grad_out[i] * y[i] * (1.0 - y[i]);
  return dx;
}

Tensor softmax_forward(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.length * s.inner + i;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < s.length; ++a) m = std::max(m, x[base + a * s.inner]);
      double total = 0.0;
      for (std::size_t a = 0; a < s.length; ++a) {
        const double e = std::exp(x[base + a * s.inner] - m);
        y[base + a * s.inner] = e;
        total += e;
      }
      for (std::size_t a = 0; a < s.length; ++a) y[base + a * s.inner] /= total;
    }
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& grad_out, std::size_t axis) {
  require_same_shape(y, grad_out, "softmax backward");
  const AxisSplit s = split_axis(y.shape(), axis);
  Tensor dx(y.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.length * s.inner + i;
      double dot = 0.0;
      for (std::size_t a = 0; a < s.length; ++a) dot += y[base + a * s.inner] * grad_out[base + a * s.inner];
      for (std::size_t a = 0; a < s.length; ++a) {
        const std::size_t idx = base + a * s.inner;
        dx[idx] = y[idx] * (grad_out[idx] - dot);
      }
    }
  }
  return dx;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  if (weights.dim(0) != d) {
    throw ConfigError("dense: input width " + std::to_string(d) + " does not match weights " +
                      shape_string(weights.shape()));
  }
  if (bias.size() != m) throw ConfigError("dense: bias length " + std::to_string(bias.size()) + " != " + std::to_string(m));
  Tensor out({n, m});
  const RowMatrix x = owned(input.data().data(), n, d);
  const RowMatrix w = owned(weights.data().data(), d, m);
  const RowMatrix y = x * w;
  store(y, out.data().data());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] += bias[j];
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
  const std::size_t n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  if (grad_out.shape() != Shape{n, m}) {
    throw ConfigError("dense backward: gradient shape " + shape_string(grad_out.shape()));
  }
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
  const RowMatrix xt = owned(input.data().data(), n, d).transpose();
  const RowMatrix wt = owned(weights.data().data(), d, m).transpose();
  const RowMatrix dy = owned(grad_out.data().data(), n, m);
  const RowMatrix dx = dy * wt;
  const RowMatrix dw = xt * dy;
  store(dx, g.input.data().data());
  store(dw, g.weights.data().data());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) g.bias[j] += grad_out[r * m + j];
  }
  return g;
}

namespace {

struct ChannelLayout {
  std::size_t n, c, spatial;
};

ChannelLayout channel_layout(const Tensor& input, const Tensor& gamma, const Tensor& beta) {
  if (input.rank() < 2) throw ConfigError("batchnorm: input needs a channel axis, got " + shape_string(input.shape()));
  ChannelLayout l{input.dim(0), input.dim(1), 1};
  for (std::size_t i = 2; i < input.rank(); ++i) l.spatial *= input.dim(i);
  if (gamma.size() != l.c || beta.size() != l.c) {
    throw ConfigError("batchnorm: gamma/beta length does not match " + std::to_string(l.c) + " channels");
  }
  return l;
}

}  // namespace

BatchNormTrainResult batchnorm_forward_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  const ChannelLayout l = channel_layout(input, gamma, beta);
  if (l.n < 2) throw ContractError("batchnorm: training mode needs a batch of at least 2 samples (variance undefined)");
  if (!(eps > 0.0)) throw ConfigError("batchnorm: eps must be positive");
  BatchNormTrainResult r{Tensor(input.shape()), {Tensor(input.shape()), std::vector<double>(l.c)},
                         std::vector<double>(l.c), std::vector<double>(l.c)};
  const double count = static_cast<double>(l.n * l.spatial);
  for (std::size_t c = 0; c < l.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) sum += input[base + s];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const double d = input[base + s] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    r.batch_mean[c] = mean;
    r.batch_var[c] = var;
    r.cache.inv_std[c] = inv_std;
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const double xhat = (input[base + s] - mean) * inv_std;
        r.cache.normalized[base + s] = xhat;
        r.output[base + s] = gamma[c] * xhat + beta[c];
      }
    }
  }
  return r;
}

Tensor batchnorm_forward_inference(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                   const std::vector<double>& running_mean, const std::vector<double>& running_var,
                                   double eps) {
  const ChannelLayout l = channel_layout(input, gamma, beta);
  Tensor out(input.shape());
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t c = 0; c < l.c; ++c) {
      const double scale = gamma[c] / std::sqrt(running_var[c] + eps);
      const std::size_t base = (n * l.c + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        out[base + s] = (input[base + s] - running_mean[c]) * scale + beta[c];
      }
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_out) {
  const Tensor& xhat = cache.normalized;
  require_same_shape(xhat, grad_out, "batchnorm backward");
  const std::size_t n = xhat.dim(0), c = xhat.dim(1);
  const std::size_t spatial = xhat.size() / (n * c);
  const double count = static_cast<double>(n * spatial);
  BatchNormGrads g{Tensor(xhat.shape()), Tensor({c}), Tensor({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        sum_dy += grad_out[base + s];
        sum_dy_xhat += grad_out[base + s] * xhat[base + s];
      }
    }
    g.beta[ch] = sum_dy;
    g.gamma[ch] = sum_dy_xhat;
    const double k = gamma[ch] * cache.inv_std[ch] / count;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        g.input[base + s] = k * (count * grad_out[base + s] - sum_dy - xhat[base + s] * sum_dy_xhat);
      }
    }
  }
  return g;
}

DropoutResult dropout_forward(const Tensor& input, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  DropoutResult r{input, std::vector<double>(input.size(), 1.0)};
  if (!training || rate == 0.0) return r;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    r.output[i] = input[i] * r.mask[i];
  }
  return r;
}

Tensor dropout_backward(const Tensor& grad_out, const std::vector<double>& mask) {
  if (grad_out.size() != mask.size()) throw ConfigError("dropout backward: mask size mismatch");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < mask.size(); ++i) dx[i] *= mask[i];
  return dx;
}

Tensor upsample2_forward(const Tensor& input) {
  require_rank(input, 4, "upsample2 input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t x = 0; x < 2 * w; ++x) {
        out[(nc * 2 * h + y) * 2 * w + x] = input[(nc * h + y / 2) * w + x / 2];
      }
    }
  }
  return out;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  require_rank(grad_out, 4, "upsample2 gradient");
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1), h = grad_out.dim(2) / 2, w = grad_out.dim(3) / 2;
  Tensor dx({n, c, h, w});
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t x = 0; x < 2 * w; ++x) {
        dx[(nc * h + y / 2) * w + x / 2] += grad_out[(nc * 2 * h + y) * 2 * w + x];
      }
    }
  }
  return dx;
}

Tensor global_avg_pool_forward(const Tensor& input) {
  require_rank(input, 4, "global average pool input");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += input[i * plane + p];
    out[i] = s / static_cast<double>(plane);
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape) {
  Tensor dx(input_shape);
  const std::size_t plane = input_shape[2] * input_shape[3];
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    for (std::size_t p = 0; p < plane; ++p) dx[i * plane + p] = grad_out[i] * inv;
  }
  return dx;
}

}  // namespace dsam::nn
