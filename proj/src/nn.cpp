#include "adenet/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "adenet/parallel.hpp"

namespace adenet::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t ci, h, w, k, pad, ho, wo;
  std::size_t rows() const { return ci * k * k; }
  std::size_t cols() const { return ho * wo; }
};

// col[(c*k + u)*k + v][i*wo + j] = x[c, i + u - pad, j + v - pad], zero outside.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t u = 0; u < g.k; ++u) {
      for (std::size_t v = 0; v < g.k; ++v) {
        T* row = col + ((c * g.k + u) * g.k + v) * g.cols();
        for (std::size_t i = 0; i < g.ho; ++i) {
          const std::ptrdiff_t src_i = static_cast<std::ptrdiff_t>(i + u) - pad;
          T* out = row + i * g.wo;
          if (src_i < 0 || src_i >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(src_i)) * g.w;
          for (std::size_t j = 0; j < g.wo; ++j) {
            const std::ptrdiff_t src_j = static_cast<std::ptrdiff_t>(j + v) - pad;
            out[j] = (src_j < 0 || src_j >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[src_j];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t u = 0; u < g.k; ++u) {
      for (std::size_t v = 0; v < g.k; ++v) {
        const T* row = col + ((c * g.k + u) * g.k + v) * g.cols();
        for (std::size_t i = 0; i < g.ho; ++i) {
          const std::ptrdiff_t dst_i = static_cast<std::ptrdiff_t>(i + u) - pad;
          if (dst_i < 0 || dst_i >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(dst_i)) * g.w;
          const T* in = row + i * g.wo;
          for (std::size_t j = 0; j < g.wo; ++j) {
            const std::ptrdiff_t dst_j = static_cast<std::ptrdiff_t>(j + v) - pad;
            if (dst_j >= 0 && dst_j < static_cast<std::ptrdiff_t>(g.w)) dst[dst_j] += in[j];
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t pad) {
  ConvGeometry g{x.c, x.h, x.w, w.h, pad, 0, 0};
  if (x.h + 2 * pad < g.k || x.w + 2 * pad < g.k)
    throw ShapeError("conv2d: input " + x.str() + " smaller than kernel");
  g.ho = x.h + 2 * pad - g.k + 1;
  g.wo = x.w + 2 * pad - g.k + 1;
  return g;
}

void require_batch(const Shape& s, const char* op) {
  if (s.n == 0) throw ShapeError(std::string(op) + ": empty batch");
}

}  // namespace

template <typename T>
Forward<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Padding padding) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require_batch(xs, "conv2d");
  if (ws.h != ws.w || ws.h == 0) throw ShapeError("conv2d: kernel must be square, got " + ws.str());
  if (ws.c != xs.c) throw ShapeError("conv2d: input channels " + std::to_string(xs.c) + " != kernel channels " + std::to_string(ws.c));
  if (b.size() != ws.n) throw ShapeError("conv2d: bias length does not match output channels");
  if (padding == Padding::kSame && ws.h % 2 == 0) throw ShapeError("conv2d: same padding needs an odd kernel");

  const std::size_t pad = padding == Padding::kSame ? (ws.h - 1) / 2 : 0;
  const ConvGeometry g = conv_geometry(xs, ws, pad);
  const std::size_t co = ws.n;

  Forward<T> out;
  out.y = Tensor<T>(xs.n, co, g.ho, g.wo);
  MapConstMat<T> weight(w.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(g.rows()));

  parallel_for(xs.n, [&](std::size_t n) {
    AlignedVector<T> col(g.rows() * g.cols());
    im2col(x.data() + n * xs.per_sample(), g, col.data());
    MapConstMat<T> cols(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    MapMat<T> y(out.y.data() + n * co * g.cols(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(g.cols()));
    y.noalias() = weight * cols;
    for (std::size_t o = 0; o < co; ++o) y.row(static_cast<Eigen::Index>(o)).array() += b[o];
  });

  auto& ctx = out.ctx;
  ctx.kind = LayerKind::kConv;
  ctx.in_shape = xs;
  ctx.out_shape = out.y.shape();
  ctx.input = x;
  ctx.weight = w;
  ctx.pad = pad;
  return out;
}

namespace {

template <typename T>
Gradients<T> conv2d_backward(const LayerContext<T>& ctx, const Tensor<T>& dy) {
  const Shape& xs = ctx.in_shape;
  const Shape& ws = ctx.weight.shape();
  const ConvGeometry g = conv_geometry(xs, ws, ctx.pad);
  const std::size_t co = ws.n;
  const std::size_t wsize = co * g.rows();

  Gradients<T> grads;
  grads.dx = Tensor<T>(xs);
  std::vector<AlignedVector<T>> partial_w(xs.n);
  std::vector<AlignedVector<T>> partial_b(xs.n);
  MapConstMat<T> weight(ctx.weight.data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(g.rows()));

  parallel_for(xs.n, [&](std::size_t n) {
    AlignedVector<T> col(g.rows() * g.cols());
    im2col(ctx.input.data() + n * xs.per_sample(), g, col.data());
    MapConstMat<T> cols(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    MapConstMat<T> dys(dy.data() + n * co * g.cols(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(g.cols()));

    partial_w[n].resize(wsize);
    MapMat<T> dw(partial_w[n].data(), static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(g.rows()));
    dw.noalias() = dys * cols.transpose();
    partial_b[n].resize(co);
    for (std::size_t o = 0; o < co; ++o) partial_b[n][o] = dys.row(static_cast<Eigen::Index>(o)).sum();

    // Reuse the column buffer for the input-gradient columns.
    MapMat<T> dcol(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
    dcol.noalias() = weight.transpose() * dys;
    col2im_add(col.data(), g, grads.dx.data() + n * xs.per_sample());
  });

  Tensor<T> dw(ws);
  Tensor<T> db = Tensor<T>::vector(co);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t i = 0; i < wsize; ++i) dw[i] += partial_w[n][i];
    for (std::size_t o = 0; o < co; ++o) db[o] += partial_b[n][o];
  }
  grads.params.push_back(std::move(dw));
  grads.params.push_back(std::move(db));
  return grads;
}

}  // namespace

template <typename T>
Forward<T> batchnorm_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, Mode mode, double eps,
                             double momentum) {
  const Shape& s = x.shape();
  require_batch(s, "batchnorm");
  if (gamma.size() != s.c || beta.size() != s.c || running_mean.size() != s.c || running_var.size() != s.c)
    throw ShapeError("batchnorm: parameter length does not match channel count " + std::to_string(s.c));
  if (!(eps > 0.0)) throw ArgumentError("batchnorm: eps must be positive");

  const std::size_t hw = s.spatial();
  const double count = static_cast<double>(s.n * hw);

  Forward<T> out;
  auto& ctx = out.ctx;
  ctx.kind = LayerKind::kBatchNorm;
  ctx.in_shape = s;
  ctx.out_shape = s;
  ctx.mode = mode;
  ctx.mean.resize(s.c);
  ctx.var.resize(s.c);
  ctx.inv_std.resize(s.c);
  ctx.gamma.assign(gamma.begin(), gamma.end());
  ctx.beta.assign(beta.begin(), beta.end());

  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::kTrain) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x.data() + x.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) mean += static_cast<double>(p[i]);
      }
      mean /= count;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x.data() + x.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          var += d * d;
        }
      }
      var /= count;
      running_mean[c] = static_cast<T>(momentum * static_cast<double>(running_mean[c]) + (1.0 - momentum) * mean);
      running_var[c] = static_cast<T>(momentum * static_cast<double>(running_var[c]) + (1.0 - momentum) * var);
    } else {
      mean = static_cast<double>(running_mean[c]);
      var = static_cast<double>(running_var[c]);
    }
    ctx.mean[c] = static_cast<T>(mean);
    ctx.var[c] = static_cast<T>(var);
    ctx.inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
  }

  out.y = Tensor<T>(s);
  ctx.normalized = Tensor<T>(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = x.offset(n, c, 0, 0);
      const T m = ctx.mean[c], is = ctx.inv_std[c], ga = gamma[c], be = beta[c];
      for (std::size_t i = 0; i < hw; ++i) {
        const T xhat = (x[base + i] - m) * is;
        ctx.normalized[base + i] = xhat;
        out.y[base + i] = ga * xhat + be;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_inverse(const Tensor<T>& y, const LayerContext<T>& ctx) {
  if (ctx.kind != LayerKind::kBatchNorm) throw ArgumentError("batchnorm_inverse: context is not from batch norm");
  if (y.shape() != ctx.out_shape) throw ShapeError("batchnorm_inverse: shape mismatch");
  const Shape& s = y.shape();
  Tensor<T> x(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      if (ctx.gamma[c] == T(0)) throw ArgumentError("batchnorm_inverse: gamma is zero");
      const std::size_t base = y.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < s.spatial(); ++i)
        x[base + i] = (y[base + i] - ctx.beta[c]) / ctx.gamma[c] / ctx.inv_std[c] + ctx.mean[c];
    }
  return x;
}

namespace {

template <typename T>
Gradients<T> batchnorm_backward(const LayerContext<T>& ctx, const Tensor<T>& dy) {
  const Shape& s = ctx.in_shape;
  const std::size_t hw = s.spatial();
  const double count = static_cast<double>(s.n * hw);
  Gradients<T> grads;
  grads.dx = Tensor<T>(s);
  Tensor<T> dgamma = Tensor<T>::vector(s.c);
  Tensor<T> dbeta = Tensor<T>::vector(s.c);

  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = dy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += static_cast<double>(dy[base + i]);
        sum_dy_xhat += static_cast<double>(dy[base + i]) * static_cast<double>(ctx.normalized[base + i]);
      }
    }
    dgamma[c] = static_cast<T>(sum_dy_xhat);
    dbeta[c] = static_cast<T>(sum_dy);
    const double scale = static_cast<double>(ctx.gamma[c]) * static_cast<double>(ctx.inv_std[c]);
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = dy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        const double g = static_cast<double>(dy[base + i]);
        if (ctx.mode == Mode::kTrain) {
          const double xhat = static_cast<double>(ctx.normalized[base + i]);
          grads.dx[base + i] = static_cast<T>(scale / count * (count * g - sum_dy - xhat * sum_dy_xhat));
        } else {
          grads.dx[base + i] = static_cast<T>(scale * g);
        }
      }
    }
  }
  grads.params.push_back(std::move(dgamma));
  grads.params.push_back(std::move(dbeta));
  return grads;
}

}  // namespace

template <typename T>
Forward<T> relu_forward(const Tensor<T>& x) {
  Forward<T> out;
  out.y = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.y[i] = x[i] > T(0) ? x[i] : T(0);
  out.ctx.kind = LayerKind::kRelu;
  out.ctx.in_shape = x.shape();
  out.ctx.out_shape = x.shape();
  out.ctx.input = x;
  return out;
}

template <typename T>
Forward<T> maxpool2_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h < 2 || s.w < 2) throw ShapeError("maxpool2: spatial extent below 2 in " + s.str());
  const std::size_t ho = s.h / 2, wo = s.w / 2;
  Forward<T> out;
  out.y = Tensor<T>(s.n, s.c, ho, wo);
  auto& ctx = out.ctx;
  ctx.kind = LayerKind::kMaxPool2;
  ctx.in_shape = s;
  ctx.out_shape = out.y.shape();
  ctx.argmax.resize(out.y.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j, ++o) {
          std::size_t best = x.offset(n, c, 2 * i, 2 * j);
          // Row-major scan with strict comparison keeps the first maximum.
          for (std::size_t u = 0; u < 2; ++u)
            for (std::size_t v = 0; v < 2; ++v) {
              const std::size_t idx = x.offset(n, c, 2 * i + u, 2 * j + v);
              if (x[idx] > x[best]) best = idx;
            }
          out.y[o] = x[best];
          ctx.argmax[o] = static_cast<std::uint32_t>(best);
        }
  return out;
}

template <typename T>
Forward<T> avgpool2_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h < 2 || s.w < 2) throw ShapeError("avgpool2: spatial extent below 2 in " + s.str());
  const std::size_t ho = s.h / 2, wo = s.w / 2;
  Forward<T> out;
  out.y = Tensor<T>(s.n, s.c, ho, wo);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j)
          out.y.at(n, c, i, j) = (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i, 2 * j + 1) +
                                  x.at(n, c, 2 * i + 1, 2 * j) + x.at(n, c, 2 * i + 1, 2 * j + 1)) /
                                 T(4);
  out.ctx.kind = LayerKind::kAvgPool2;
  out.ctx.in_shape = s;
  out.ctx.out_shape = out.y.shape();
  return out;
}

template <typename T>
Forward<T> global_avg_pool_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.spatial() == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Forward<T> out;
  out.y = Tensor<T>(s.n, s.c, 1, 1);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = x.data() + x.offset(n, c, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < s.spatial(); ++i) acc += static_cast<double>(p[i]);
      out.y.at(n, c, 0, 0) = static_cast<T>(acc / static_cast<double>(s.spatial()));
    }
  out.ctx.kind = LayerKind::kGlobalAvgPool;
  out.ctx.in_shape = s;
  out.ctx.out_shape = out.y.shape();
  return out;
}

template <typename T>
Forward<T> flatten_forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Forward<T> out;
  out.y = x.reshaped(Shape{s.n, s.per_sample(), 1, 1});
  out.ctx.kind = LayerKind::kFlatten;
  out.ctx.in_shape = s;
  out.ctx.out_shape = out.y.shape();
  return out;
}

template <typename T>
Forward<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const Shape& s = x.shape();
  require_batch(s, "dense");
  if (s.h != 1 || s.w != 1) throw ShapeError("dense: input must be (n, d), got " + s.str() + "; flatten first");
  const Shape& ws = w.shape();
  if (ws.n != s.c) throw ShapeError("dense: input width " + std::to_string(s.c) + " != weight rows " + std::to_string(ws.n));
  if (b.size() != ws.c) throw ShapeError("dense: bias length does not match units");
  const auto d = static_cast<Eigen::Index>(s.c), k = static_cast<Eigen::Index>(ws.c), n = static_cast<Eigen::Index>(s.n);

  Forward<T> out;
  out.y = Tensor<T>::matrix(s.n, ws.c);
  MapConstMat<T> xm(x.data(), n, d);
  MapConstMat<T> wm(w.data(), d, k);
  MapMat<T> ym(out.y.data(), n, k);
  ym.noalias() = xm * wm;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index j = 0; j < k; ++j) ym(r, j) += b[static_cast<std::size_t>(j)];

  out.ctx.kind = LayerKind::kDense;
  out.ctx.in_shape = s;
  out.ctx.out_shape = out.y.shape();
  out.ctx.input = x;
  out.ctx.weight = w;
  return out;
}

namespace {

template <typename T>
Gradients<T> dense_backward(const LayerContext<T>& ctx, const Tensor<T>& dy) {
  const Shape& s = ctx.in_shape;
  const Shape& ws = ctx.weight.shape();
  const auto d = static_cast<Eigen::Index>(s.c), k = static_cast<Eigen::Index>(ws.c), n = static_cast<Eigen::Index>(s.n);
  MapConstMat<T> xm(ctx.input.data(), n, d);
  MapConstMat<T> wm(ctx.weight.data(), d, k);
  MapConstMat<T> dym(dy.data(), n, k);

  Gradients<T> grads;
  grads.dx = Tensor<T>(s);
  MapMat<T> dxm(grads.dx.data(), n, d);
  dxm.noalias() = dym * wm.transpose();
  Tensor<T> dw(ws);
  MapMat<T> dwm(dw.data(), d, k);
  dwm.noalias() = xm.transpose() * dym;
  Tensor<T> db = Tensor<T>::vector(ws.c);
  for (Eigen::Index j = 0; j < k; ++j) {
    T acc = T(0);
    for (Eigen::Index r = 0; r < n; ++r) acc += dym(r, j);
    db[static_cast<std::size_t>(j)] = acc;
  }
  grads.params.push_back(std::move(dw));
  grads.params.push_back(std::move(db));
  return grads;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const Shape& s = logits.shape();
  const std::size_t k = s.per_sample();
  Tensor<T> probs(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* row = logits.data() + n * k;
    T* out = probs.data() + n * k;
    const T peak = *std::max_element(row, row + k);
    T total = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(row[j] - peak);
      total += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] /= total;
  }
  return probs;
}

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels, std::optional<std::array<T, 2>> class_weights) {
  const Shape& s = logits.shape();
  const std::size_t k = s.per_sample();
  require_batch(s, "softmax_xent");
  if (labels.size() != s.n) throw ShapeError("softmax_xent: label count does not match batch");
  if (!logits.all_finite()) throw NumericError("softmax_xent: non-finite logits");
  if (class_weights) {
    if (k != 2) throw ArgumentError("softmax_xent: class weights require two classes");
    if ((*class_weights)[0] < T(0) || (*class_weights)[1] < T(0)) throw ArgumentError("softmax_xent: negative class weight");
  }

  XentResult<T> result;
  result.probs = softmax(logits);
  result.dlogits = Tensor<T>(s);
  const double inv_n = 1.0 / static_cast<double>(s.n);
  double loss = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw ArgumentError("softmax_xent: label " + std::to_string(label) + " out of range");
    const T* row = logits.data() + n * k;
    const T peak = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - peak));
    const double nll = std::log(sum) + static_cast<double>(peak) - static_cast<double>(row[label]);
    const double weight = class_weights ? static_cast<double>((*class_weights)[static_cast<std::size_t>(label)]) : 1.0;
    loss += weight * nll;
    for (std::size_t j = 0; j < k; ++j) {
      const double onehot = static_cast<std::size_t>(label) == j ? 1.0 : 0.0;
      result.dlogits[n * k + j] = static_cast<T>(weight * (static_cast<double>(result.probs[n * k + j]) - onehot) * inv_n);
    }
  }
  result.loss = static_cast<T>(loss * inv_n);
  return result;
}

template <typename T>
Gradients<T> layer_vjp(LayerContext<T>& ctx, const Tensor<T>& dy) {
  if (ctx.consumed) throw ArgumentError("layer_vjp: context already consumed");
  if (dy.shape() != ctx.out_shape)
    throw ShapeError("layer_vjp: gradient shape " + dy.shape().str() + " != forward output " + ctx.out_shape.str());
  ctx.consumed = true;

  const Shape& s = ctx.in_shape;
  Gradients<T> grads;
  switch (ctx.kind) {
    case LayerKind::kConv:
      return conv2d_backward(ctx, dy);
    case LayerKind::kBatchNorm:
      return batchnorm_backward(ctx, dy);
    case LayerKind::kDense:
      return dense_backward(ctx, dy);
    case LayerKind::kRelu:
      grads.dx = Tensor<T>(s);
      for (std::size_t i = 0; i < dy.size(); ++i) grads.dx[i] = ctx.input[i] > T(0) ? dy[i] : T(0);
      break;
    case LayerKind::kMaxPool2:
      grads.dx = Tensor<T>(s);
      for (std::size_t o = 0; o < dy.size(); ++o) grads.dx[ctx.argmax[o]] += dy[o];
      break;
    case LayerKind::kAvgPool2:
      grads.dx = Tensor<T>(s);
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
          for (std::size_t i = 0; i < s.h / 2; ++i)
            for (std::size_t j = 0; j < s.w / 2; ++j) {
              const T g = dy.at(n, c, i, j) / T(4);
              grads.dx.at(n, c, 2 * i, 2 * j) = g;
              grads.dx.at(n, c, 2 * i, 2 * j + 1) = g;
              grads.dx.at(n, c, 2 * i + 1, 2 * j) = g;
              grads.dx.at(n, c, 2 * i + 1, 2 * j + 1) = g;
            }
      break;
    case LayerKind::kGlobalAvgPool: {
      grads.dx = Tensor<T>(s);
      const T scale = T(1) / static_cast<T>(s.spatial());
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
          const T g = dy.at(n, c, 0, 0) * scale;
          T* p = grads.dx.data() + grads.dx.offset(n, c, 0, 0);
          std::fill(p, p + s.spatial(), g);
        }
      break;
    }
    case LayerKind::kFlatten:
      grads.dx = dy.reshaped(s);
      break;
  }
  return grads;
}

#define ADENET_INSTANTIATE_NN(T)                                                                                   \
  template Forward<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Padding);               \
  template Forward<T> batchnorm_forward(const Tensor<T>&, std::span<const T>, std::span<const T>, std::span<T>,     \
                                        std::span<T>, Mode, double, double);                                       \
  template Tensor<T> batchnorm_inverse(const Tensor<T>&, const LayerContext<T>&);                                  \
  template Forward<T> relu_forward(const Tensor<T>&);                                                              \
  template Forward<T> maxpool2_forward(const Tensor<T>&);                                                          \
  template Forward<T> avgpool2_forward(const Tensor<T>&);                                                          \
  template Forward<T> global_avg_pool_forward(const Tensor<T>&);                                                   \
  template Forward<T> flatten_forward(const Tensor<T>&);                                                           \
  template Forward<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> softmax(const Tensor<T>&);                                                                    \
  template XentResult<T> softmax_xent(const Tensor<T>&, std::span<const int>, std::optional<std::array<T, 2>>);    \
  template Gradients<T> layer_vjp(LayerContext<T>&, const Tensor<T>&);

ADENET_INSTANTIATE_NN(float)
ADENET_INSTANTIATE_NN(double)

}  // namespace adenet::nn
