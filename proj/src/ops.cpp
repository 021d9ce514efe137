#include "orchard/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "orchard/errors.hpp"
#include "orchard/parallel.hpp"

namespace orchard {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + what + " shape " + shape_str(b.shape()) + " does not match " +
                     shape_str(a.shape()));
  }
}

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return ho * wo; }
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weights, 4, "conv2d", "weights");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvDims d{};
  d.n = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = weights.dim(0);
  d.kh = weights.dim(2);
  d.kw = weights.dim(3);
  if (weights.dim(1) != d.cin) {
    throw ShapeError("conv2d: input channels (" + std::to_string(d.cin) + ") != weight in-channels (" +
                     std::to_string(weights.dim(1)) + ")");
  }
  if (d.kh > d.h + 2 * padding) {
    throw ShapeError("conv2d: kernel height " + std::to_string(d.kh) + " exceeds padded input height " +
                     std::to_string(d.h + 2 * padding));
  }
  if (d.kw > d.w + 2 * padding) {
    throw ShapeError("conv2d: kernel width " + std::to_string(d.kw) + " exceeds padded input width " +
                     std::to_string(d.w + 2 * padding));
  }
  d.ho = conv_output_size(d.h, d.kh, stride, padding);
  d.wo = conv_output_size(d.w, d.kw, stride, padding);
  return d;
}

bool is_pointwise(const ConvDims& d, std::size_t stride, std::size_t padding) {
  return d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0;
}

// col[(ci*kh + ky)*kw + kx][oy*wo + ox]
void im2col(const float* img, const ConvDims& d, std::size_t stride, std::size_t padding, float* col) {
  const std::size_t p = d.p();
  for (std::size_t ci = 0; ci < d.cin; ++ci) {
    const float* plane = img + ci * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        float* row = col + ((ci * d.kh + ky) * d.kw + kx) * p;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          float* out = row + oy * d.wo;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill(out, out + d.wo, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * d.w;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            out[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvDims& d, std::size_t stride, std::size_t padding, float* img) {
  const std::size_t p = d.p();
  for (std::size_t ci = 0; ci < d.cin; ++ci) {
    float* plane = img + ci * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const float* row = col + ((ci * d.kh + ky) * d.kw + kx) * p;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          float* dst = plane + static_cast<std::size_t>(iy) * d.w;
          const float* src = row + oy * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                      std::size_t padding) {
  const ConvDims d = conv_dims(input, weights, stride, padding);
  if (bias.size() != d.cout) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != out-channels " +
                     std::to_string(d.cout));
  }
  Tensor out({d.n, d.cout, d.ho, d.wo});
  const std::size_t k = d.k();
  const std::size_t p = d.p();
  const bool pointwise = is_pointwise(d, stride, padding);
  parallel_for(d.n, [&](std::size_t n) {
    std::vector<float> col_buf;
    const float* col = input.raw() + n * d.cin * d.h * d.w;
    if (!pointwise) {
      col_buf.resize(k * p);
      im2col(col, d, stride, padding, col_buf.data());
      col = col_buf.data();
    }
    float* dst = out.raw() + n * d.cout * p;
    for (std::size_t co = 0; co < d.cout; ++co) {
      float* row = dst + co * p;
      std::fill(row, row + p, bias[co]);
      const float* wrow = weights.raw() + co * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const float wv = wrow[kk];
        const float* c = col + kk * p;
        for (std::size_t i = 0; i < p; ++i) row[i] += wv * c[i];
      }
    }
  });
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights,
                            std::size_t stride, std::size_t padding) {
  const ConvDims d = conv_dims(input, weights, stride, padding);
  const Shape expected{d.n, d.cout, d.ho, d.wo};
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d backward: upstream gradient " + shape_str(upstream.shape()) +
                     " does not match output shape " + shape_str(expected));
  }
  const std::size_t k = d.k();
  const std::size_t p = d.p();
  const bool pointwise = is_pointwise(d, stride, padding);

  Conv2dGrads grads{Tensor(input.shape()), Tensor(weights.shape()), Tensor({d.cout})};
  // Per-sample parameter gradients, reduced in sample order afterwards so the
  // result does not depend on the worker count.
  std::vector<float> dw_per_sample(d.n * d.cout * k, 0.0f);
  std::vector<float> db_per_sample(d.n * d.cout, 0.0f);

  parallel_for(d.n, [&](std::size_t n) {
    const float* img = input.raw() + n * d.cin * d.h * d.w;
    const float* g = upstream.raw() + n * d.cout * p;
    std::vector<float> col_buf;
    const float* col = img;
    if (!pointwise) {
      col_buf.resize(k * p);
      im2col(img, d, stride, padding, col_buf.data());
      col = col_buf.data();
    }
    // Transposed columns make the weight-gradient update a contiguous axpy.
    std::vector<float> col_t(p * k);
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t i = 0; i < p; ++i) col_t[i * k + kk] = col[kk * p + i];
    }
    float* dw = dw_per_sample.data() + n * d.cout * k;
    float* db = db_per_sample.data() + n * d.cout;
    for (std::size_t i = 0; i < p; ++i) {
      const float* ct = col_t.data() + i * k;
      for (std::size_t co = 0; co < d.cout; ++co) {
        const float gv = g[co * p + i];
        float* dwrow = dw + co * k;
        for (std::size_t kk = 0; kk < k; ++kk) dwrow[kk] += gv * ct[kk];
      }
    }
    for (std::size_t co = 0; co < d.cout; ++co) {
      float s = 0.0f;
      for (std::size_t i = 0; i < p; ++i) s += g[co * p + i];
      db[co] = s;
    }

    float* dx = grads.input.raw() + n * d.cin * d.h * d.w;
    std::vector<float> dcol_buf(pointwise ? 0 : k * p, 0.0f);
    float* dcol = pointwise ? dx : dcol_buf.data();
    for (std::size_t co = 0; co < d.cout; ++co) {
      const float* wrow = weights.raw() + co * k;
      const float* grow = g + co * p;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const float wv = wrow[kk];
        float* drow = dcol + kk * p;
        for (std::size_t i = 0; i < p; ++i) drow[i] += wv * grow[i];
      }
    }
    if (!pointwise) col2im(dcol, d, stride, padding, dx);
  });

  float* dw = grads.weights.raw();
  float* db = grads.bias.raw();
  for (std::size_t n = 0; n < d.n; ++n) {
    const float* src = dw_per_sample.data() + n * d.cout * k;
    for (std::size_t i = 0; i < d.cout * k; ++i) dw[i] += src[i];
    for (std::size_t co = 0; co < d.cout; ++co) db[co] += db_per_sample[n * d.cout + co];
  }
  return grads;
}

MaxPoolResult maxpool2d_forward(const Tensor& input, std::size_t kernel, std::size_t stride,
                                std::size_t padding) {
  require_rank(input, 4, "maxpool2d", "input");
  if (kernel == 0 || stride == 0) throw ShapeError("maxpool2d: kernel and stride must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h + 2 * padding || kernel > w + 2 * padding) {
    throw ShapeError("maxpool2d: window " + std::to_string(kernel) + " larger than input " +
                     shape_str(input.shape()));
  }
  if (padding >= kernel) throw ShapeError("maxpool2d: padding must be smaller than the window");
  const std::size_t ho = conv_output_size(h, kernel, stride, padding);
  const std::size_t wo = conv_output_size(w, kernel, stride, padding);
  MaxPoolResult r{Tensor({n, c, ho, wo}), std::vector<std::uint32_t>(n * c * ho * wo)};
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (!found || input[idx] > best) {
              best = input[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        r.output[o] = best;
        r.argmax[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const Tensor& upstream, std::span<const std::uint32_t> argmax,
                          const Shape& input_shape) {
  if (upstream.size() != argmax.size()) {
    throw ShapeError("maxpool2d backward: upstream gradient " + shape_str(upstream.shape()) +
                     " does not match cached output");
  }
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += upstream[i];
  return grad;
}

Tensor global_avg_pool_forward(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    const float* src = input.raw() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) s += src[j];
    out[i] = static_cast<float>(s / static_cast<double>(hw));
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& upstream, const Shape& input_shape) {
  if (input_shape.size() != 4 || upstream.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool backward: upstream gradient " + shape_str(upstream.shape()) +
                     " does not match input " + shape_str(input_shape));
  }
  Tensor grad(input_shape);
  const std::size_t hw = input_shape[2] * input_shape[3];
  const float scale = 1.0f / static_cast<float>(hw);
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    float* dst = grad.raw() + i * hw;
    std::fill(dst, dst + hw, upstream[i] * scale);
  }
  return grad;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weights, 2, "dense", "weights");
  const std::size_t n = input.dim(0), f = input.dim(1), k = weights.dim(1);
  if (weights.dim(0) != f) {
    throw ShapeError("dense: input features (" + std::to_string(f) + ") != weight rows (" +
                     std::to_string(weights.dim(0)) + ")");
  }
  if (bias.size() != k) {
    throw ShapeError("dense: bias length " + std::to_string(bias.size()) + " != outputs " + std::to_string(k));
  }
  Tensor out({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    float* dst = out.raw() + r * k;
    std::copy(bias.raw(), bias.raw() + k, dst);
    for (std::size_t i = 0; i < f; ++i) {
      const float x = input[r * f + i];
      const float* wrow = weights.raw() + i * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += x * wrow[j];
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights) {
  const std::size_t n = input.dim(0), f = input.dim(1), k = weights.dim(1);
  if (upstream.shape() != Shape{n, k}) {
    throw ShapeError("dense backward: upstream gradient " + shape_str(upstream.shape()) +
                     " does not match output " + shape_str({n, k}));
  }
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({k})};
  for (std::size_t r = 0; r < n; ++r) {
    const float* up = upstream.raw() + r * k;
    for (std::size_t i = 0; i < f; ++i) {
      const float x = input[r * f + i];
      const float* wrow = weights.raw() + i * k;
      float* dwrow = g.weights.raw() + i * k;
      float acc = 0.0f;
      for (std::size_t j = 0; j < k; ++j) {
        dwrow[j] += x * up[j];
        acc += wrow[j] * up[j];
      }
      g.input[r * f + i] = acc;
    }
    for (std::size_t j = 0; j < k; ++j) g.bias[j] += up[j];
  }
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& upstream, const Tensor& input) {
  require_same_shape(input, upstream, "relu backward", "upstream gradient");
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0f ? upstream[i] : 0.0f;
  return grad;
}

Tensor channel_concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("channel_concat: no parts");
  for (const Tensor& t : parts) require_rank(t, 4, "channel_concat", "part");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::size_t total_c = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& t = parts[i];
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw ShapeError("channel_concat: part " + std::to_string(i) + " shape " + shape_str(t.shape()) +
                       " does not share N,H,W with " + shape_str(parts[0].shape()));
    }
    total_c += t.dim(1);
  }
  Tensor out({n, total_c, h, w});
  const std::size_t hw = h * w;
  for (std::size_t b = 0; b < n; ++b) {
    float* dst = out.raw() + b * total_c * hw;
    for (const Tensor& t : parts) {
      const std::size_t len = t.dim(1) * hw;
      const float* src = t.raw() + b * len;
      std::copy(src, src + len, dst);
      dst += len;
    }
  }
  return out;
}

std::vector<Tensor> channel_split(const Tensor& upstream, std::span<const std::size_t> channels) {
  require_rank(upstream, 4, "channel_split", "gradient");
  std::size_t total = 0;
  for (std::size_t c : channels) total += c;
  if (total != upstream.dim(1)) {
    throw ShapeError("channel_split: part channels sum to " + std::to_string(total) + ", gradient has " +
                     std::to_string(upstream.dim(1)));
  }
  const std::size_t n = upstream.dim(0), h = upstream.dim(2), w = upstream.dim(3), hw = h * w;
  std::vector<Tensor> parts;
  parts.reserve(channels.size());
  for (std::size_t c : channels) parts.emplace_back(Shape{n, c, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    const float* src = upstream.raw() + b * total * hw;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const std::size_t len = channels[i] * hw;
      std::copy(src, src + len, parts[i].raw() + b * len);
      src += len;
    }
  }
  return parts;
}

Tensor residual_add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "residual_add", "second operand");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  std::vector<double> e(k);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = logits.raw() + r * k;
    const float m = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      e[j] = std::exp(static_cast<double>(row[j] - m));
      sum += e[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = static_cast<float>(e[j] / sum);
  }
  return out;
}

void check_soft_labels(const Tensor& soft_labels, double tolerance) {
  require_rank(soft_labels, 2, "cross_entropy", "labels");
  const std::size_t n = soft_labels.dim(0), k = soft_labels.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const float v = soft_labels[r * k + j];
      if (!(v >= 0.0f)) throw ShapeError("label row " + std::to_string(r) + " has a negative or NaN entry");
      s += v;
    }
    if (std::abs(s - 1.0) > tolerance) {
      throw ShapeError("label row " + std::to_string(r) + " sums to " + std::to_string(s) + ", expected 1");
    }
  }
}

double cross_entropy(const Tensor& probs, const Tensor& soft_labels) {
  require_rank(probs, 2, "cross_entropy", "probs");
  if (probs.shape() != soft_labels.shape()) {
    throw ShapeError("cross_entropy: class count mismatch, probs " + shape_str(probs.shape()) + " vs labels " +
                     shape_str(soft_labels.shape()));
  }
  check_soft_labels(soft_labels);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n * k; ++i) {
    const double b = soft_labels[i];
    if (b == 0.0) continue;
    total -= b * std::log(std::max(static_cast<double>(probs[i]), kLogClamp));
  }
  return total / static_cast<double>(n);
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, const Tensor& soft_labels) {
  if (probs.shape() != soft_labels.shape()) {
    throw ShapeError("cross_entropy backward: class count mismatch, probs " + shape_str(probs.shape()) +
                     " vs labels " + shape_str(soft_labels.shape()));
  }
  const float inv_n = 1.0f / static_cast<float>(probs.dim(0));
  Tensor grad(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = (probs[i] - soft_labels[i]) * inv_n;
  return grad;
}

}  // namespace orchard
