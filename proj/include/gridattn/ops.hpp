// Copyright 2026 The gridattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable operations over gridattn::Tensor.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gridattn/tensor.hpp"

namespace gridattn {

struct Padding {
  std::size_t h = 0;
  std::size_t w = 0;
};

enum class Mode { kTrain, kEval };

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, out_h, out_w;
  Padding pad;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

// Unfolds input [batch, cin, h, w] into columns [cin*kh*kw, batch*out_h*out_w].
inline void im2col(const ConvGeometry& g, const double* input, double* cols) {
  const std::size_t total = g.batch * g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols + ((c * g.kh + ky) * g.kw + kx) * total;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* plane = input + (n * g.cin + c) * g.h * g.w;
          double* dst = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad.h);
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad.w);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                  ix < static_cast<std::ptrdiff_t>(g.w);
              dst[oy * g.out_w + ox] = inside ? plane[iy * g.w + ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input layout.
inline void col2im(const ConvGeometry& g, const double* cols, double* input_grad) {
  const std::size_t total = g.batch * g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * total;
        for (std::size_t n = 0; n < g.batch; ++n) {
          double* plane = input_grad + (n * g.cin + c) * g.h * g.w;
          const double* src = row + n * g.positions();
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad.h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad.w);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              plane[iy * g.w + ix] += src[oy * g.out_w + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation with zero padding.
///
/// `input` is [cin, h, w] or a batch [n, cin, h, w]; `kernels` is
/// [cout, cin, kh, kw]; `bias`, when given, is [cout]. The result keeps the
/// batch rank of the input.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias = {},
                     std::size_t stride = 1, Padding pad = {}) {
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const bool batched = input.ndim() == 4;
  if (!batched && input.ndim() != 3) {
    throw DimensionError("conv2d: input must be [cin,h,w] or [n,cin,h,w], got " +
                         shape_str(input.shape()));
  }
  detail::require_shape(kernels, 4, "conv2d kernels");
  detail::ConvGeometry g{};
  g.batch = batched ? input.dim(0) : 1;
  g.cin = input.dim(batched ? 1 : 0);
  g.h = input.dim(batched ? 2 : 1);
  g.w = input.dim(batched ? 3 : 2);
  g.cout = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (kernels.dim(1) != g.cin) {
    throw DimensionError("conv2d: input has " + std::to_string(g.cin) + " channels but kernels " +
                         shape_str(kernels.shape()) + " expect " + std::to_string(kernels.dim(1)));
  }
  if (g.h + 2 * pad.h < g.kh || g.w + 2 * pad.w < g.kw) {
    throw DimensionError("conv2d: kernel " + shape_str(kernels.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(g.cout) + "], got " +
                         shape_str(bias.shape()));
  }
  g.out_h = (g.h + 2 * pad.h - g.kh) / stride + 1;
  g.out_w = (g.w + 2 * pad.w - g.kw) / stride + 1;

  const std::size_t total = g.batch * g.positions();
  std::vector<double> cols(g.patch() * total);
  detail::im2col(g, input.data().data(), cols.data());

  detail::RowMatrix product =
      detail::ConstRowMap(kernels.data().data(), g.cout, g.patch()) *
      detail::ConstRowMap(cols.data(), g.patch(), total);

  std::vector<double> out(g.batch * g.cout * g.positions());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.cout; ++o) {
      const double b = bias.defined() ? bias[o] : 0.0;
      const double* src = product.data() + o * total + n * g.positions();
      double* dst = out.data() + (n * g.cout + o) * g.positions();
      for (std::size_t p = 0; p < g.positions(); ++p) dst[p] = src[p] + b;
    }
  }

  Shape shape = batched ? Shape{g.batch, g.cout, g.out_h, g.out_w} : Shape{g.cout, g.out_h, g.out_w};
  const bool need_cols = kernels.defined() && kernels.requires_grad();
  return detail::make_result(
      std::move(shape), std::move(out), "conv2d", {input, kernels, bias},
      [g, cols = need_cols ? std::move(cols) : std::vector<double>{}](const Tensor::Node& self) {
        const std::size_t total = g.batch * g.positions();
        // Gather output gradient as [cout, batch*positions].
        detail::RowMatrix dout(g.cout, total);
        for (std::size_t n = 0; n < g.batch; ++n) {
          for (std::size_t o = 0; o < g.cout; ++o) {
            const double* src = self.grad.data() + (n * g.cout + o) * g.positions();
            std::copy(src, src + g.positions(), dout.data() + o * total + n * g.positions());
          }
        }
        const auto& kernel_node = *self.parents[1];
        if (double* dk = detail::grad_sink(self, 1)) {
          detail::RowMap(dk, g.cout, g.patch()).noalias() +=
              dout * detail::ConstRowMap(cols.data(), g.patch(), total).transpose();
        }
        if (double* dx = detail::grad_sink(self, 0)) {
          detail::RowMatrix dcols =
              detail::ConstRowMap(kernel_node.data.data(), g.cout, g.patch()).transpose() * dout;
          detail::col2im(g, dcols.data(), dx);
        }
        if (self.parents[2]) {
          if (double* db = detail::grad_sink(self, 2)) {
            for (std::size_t o = 0; o < g.cout; ++o) db[o] += dout.row(o).sum();
          }
        }
      });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(x.shape(), std::move(out), "relu", {x}, [](const Tensor::Node& self) {
    double* dx = detail::grad_sink(self, 0);
    const auto& in = self.parents[0]->data;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > 0.0) dx[i] += self.grad[i];
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), "add", {a, b}, [](const Tensor::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* d = detail::grad_sink(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
      }
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, [](const Tensor::Node& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    if (double* da = detail::grad_sink(self, 0)) {
      for (std::size_t i = 0; i < av.size(); ++i) da[i] += self.grad[i] * bv[i];
    }
    if (double* db = detail::grad_sink(self, 1)) {
      for (std::size_t i = 0; i < bv.size(); ++i) db[i] += self.grad[i] * av[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return detail::make_result(x.shape(), std::move(out), "scale", {x},
                             [factor](const Tensor::Node& self) {
                               double* dx = detail::grad_sink(self, 0);
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 dx[i] += factor * self.grad[i];
                               }
                             });
}

inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return detail::make_result({1}, {total}, "sum", {x}, [](const Tensor::Node& self) {
    double* dx = detail::grad_sink(self, 0);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[0];
  });
}

// Same values under a new shape of equal size.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result(std::move(shape), std::move(out), "reshape", {x},
                             [](const Tensor::Node& self) {
                               double* dx = detail::grad_sink(self, 0);
                               for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
                             });
}

// [a, b] -> [b, a]
inline Tensor transpose2d(const Tensor& x) {
  detail::require_shape(x, 2, "transpose2d");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  }
  return detail::make_result({cols, rows}, std::move(out), "transpose2d", {x},
                             [rows, cols](const Tensor::Node& self) {
                               double* dx = detail::grad_sink(self, 0);
                               for (std::size_t i = 0; i < rows; ++i) {
                                 for (std::size_t j = 0; j < cols; ++j) {
                                   dx[i * cols + j] += self.grad[j * rows + i];
                                 }
                               }
                             });
}

// Row `index` of a 2-d tensor.
inline Tensor row(const Tensor& m, std::size_t index) {
  detail::require_shape(m, 2, "row");
  if (index >= m.dim(0)) throw DimensionError("row: index out of range");
  const std::size_t k = m.dim(1);
  std::vector<double> values(m.data().begin() + index * k, m.data().begin() + (index + 1) * k);
  return detail::make_result({k}, std::move(values), "row", {m}, [index, k](const Tensor::Node& self) {
    double* dm = detail::grad_sink(self, 0);
    for (std::size_t i = 0; i < k; ++i) dm[index * k + i] += self.grad[i];
  });
}

// [n, c, h, w] -> [n, c], mean over each spatial plane.
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_shape(x, 4, "global_avg_pool");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  std::vector<double> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += x[p * area + i];
    out[p] = s / static_cast<double>(area);
  }
  return detail::make_result({x.dim(0), x.dim(1)}, std::move(out), "global_avg_pool", {x},
                             [planes, area](const Tensor::Node& self) {
                               double* dx = detail::grad_sink(self, 0);
                               const double inv = 1.0 / static_cast<double>(area);
                               for (std::size_t p = 0; p < planes; ++p) {
                                 const double g = self.grad[p] * inv;
                                 for (std::size_t i = 0; i < area; ++i) dx[p * area + i] += g;
                               }
                             });
}

/// y = W x + b for x [n], W [out, n], b [out].
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  detail::require_shape(input, 1, "linear input");
  detail::require_shape(weight, 2, "linear weight");
  detail::require_shape(bias, 1, "linear bias");
  const std::size_t n = input.dim(0);
  const std::size_t out_dim = weight.dim(0);
  if (weight.dim(1) != n || bias.dim(0) != out_dim) {
    throw DimensionError("linear: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(out_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = bias[o];
    for (std::size_t i = 0; i < n; ++i) acc += weight[o * n + i] * input[i];
    out[o] = acc;
  }
  return detail::make_result({out_dim}, std::move(out), "linear", {input, weight, bias},
                             [n, out_dim](const Tensor::Node& self) {
                               const auto& x = self.parents[0]->data;
                               const auto& w = self.parents[1]->data;
                               if (double* dx = detail::grad_sink(self, 0)) {
                                 for (std::size_t o = 0; o < out_dim; ++o) {
                                   for (std::size_t i = 0; i < n; ++i) dx[i] += w[o * n + i] * self.grad[o];
                                 }
                               }
                               if (double* dw = detail::grad_sink(self, 1)) {
                                 for (std::size_t o = 0; o < out_dim; ++o) {
                                   for (std::size_t i = 0; i < n; ++i) dw[o * n + i] += self.grad[o] * x[i];
                                 }
                               }
                               if (double* db = detail::grad_sink(self, 2)) {
                                 for (std::size_t o = 0; o < out_dim; ++o) db[o] += self.grad[o];
                               }
                             });
}

/// Softmax over every entry of `values` (an r x c grid), computed with the
/// maximum subtracted so large scores do not overflow.
inline Tensor softmax2d(const Tensor& values) {
  const double peak = *std::max_element(values.data().begin(), values.data().end());
  std::vector<double> out(values.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(values[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return detail::make_result(values.shape(), std::move(out), "softmax2d", {values},
                             [](const Tensor::Node& self) {
                               double* dv = detail::grad_sink(self, 0);
                               const auto& a = self.data;
                               double dot = 0.0;
                               for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * self.grad[i];
                               for (std::size_t i = 0; i < a.size(); ++i) dv[i] += a[i] * (self.grad[i] - dot);
                             });
}

/// Weighted sum of feature columns: z[n] = sum_{i,j} alpha[i,j] * u[n,i,j].
inline Tensor attention_pool(const Tensor& alpha, const Tensor& u) {
  detail::require_shape(alpha, 2, "attention_pool weights");
  detail::require_shape(u, 3, "attention_pool features");
  if (u.dim(1) != alpha.dim(0) || u.dim(2) != alpha.dim(1)) {
    throw DimensionError("attention_pool: weights " + shape_str(alpha.shape()) + " vs features " +
                         shape_str(u.shape()));
  }
  const std::size_t depth = u.dim(0);
  const std::size_t cells = alpha.numel();
  std::vector<double> out(depth, 0.0);
  for (std::size_t n = 0; n < depth; ++n) {
    double acc = 0.0;
    for (std::size_t p = 0; p < cells; ++p) acc += alpha[p] * u[n * cells + p];
    out[n] = acc;
  }
  return detail::make_result({depth}, std::move(out), "attention_pool", {alpha, u},
                             [depth, cells](const Tensor::Node& self) {
                               const auto& a = self.parents[0]->data;
                               const auto& f = self.parents[1]->data;
                               if (double* da = detail::grad_sink(self, 0)) {
                                 for (std::size_t n = 0; n < depth; ++n) {
                                   for (std::size_t p = 0; p < cells; ++p) da[p] += self.grad[n] * f[n * cells + p];
                                 }
                               }
                               if (double* du = detail::grad_sink(self, 1)) {
                                 for (std::size_t n = 0; n < depth; ++n) {
                                   for (std::size_t p = 0; p < cells; ++p) du[n * cells + p] += self.grad[n] * a[p];
                                 }
                               }
                             });
}

// Concatenates 1-d tensors in argument order.
inline Tensor concat(const std::vector<Tensor>& parts) {
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    detail::require_shape(p, 1, "concat");
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.numel());
  }
  const std::size_t n = out.size();
  return detail::make_result({n}, std::move(out), "concat", parts, [sizes](const Tensor::Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      if (double* d = detail::grad_sink(self, p)) {
        for (std::size_t i = 0; i < sizes[p]; ++i) d[i] += self.grad[offset + i];
      }
      offset += sizes[p];
    }
  });
}

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `drop_p` and survivors are scaled by 1/(1 - drop_p). Identity in eval mode.
template <typename Rng>
Tensor dropout(const Tensor& x, double drop_p, Mode mode, Rng& rng) {
  if (!(drop_p >= 0.0 && drop_p < 1.0)) {
    throw std::invalid_argument("dropout: drop probability must be in [0, 1)");
  }
  if (mode == Mode::kEval || drop_p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - drop_p);
  const double factor = 1.0 / (1.0 - drop_p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? factor : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return detail::make_result(x.shape(), std::move(out), "dropout", {x},
                             [mask = std::move(mask)](const Tensor::Node& self) {
                               double* dx = detail::grad_sink(self, 0);
                               for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += mask[i] * self.grad[i];
                             });
}

// Plain softmax of a value vector; no graph.
inline std::vector<double> softmax_values(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

/// -log softmax(logits)[label], via log-sum-exp.
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  detail::require_shape(logits, 1, "cross_entropy");
  if (logits.numel() < 2) throw DimensionError("cross_entropy: need at least two classes");
  if (label >= logits.numel()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.numel()) + " classes");
  }
  const double peak = *std::max_element(logits.data().begin(), logits.data().end());
  double total = 0.0;
  for (double v : logits.data()) total += std::exp(v - peak);
  const double loss = peak + std::log(total) - logits[label];
  return detail::make_result({1}, {loss}, "cross_entropy", {logits}, [label](const Tensor::Node& self) {
    double* dl = detail::grad_sink(self, 0);
    const auto probs = softmax_values(self.parents[0]->data);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      dl[i] += self.grad[0] * (probs[i] - (i == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace gridattn
