#include "anomkit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace anomkit {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(t.shape()));
  }
}

template <typename T>
void check_conv_shapes(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                       const char* what) {
  require_rank(input, 3, what);
  require_rank(kernels, 4, what);
  if (kernels.dim(0) != kernels.dim(1)) {
    throw DimensionError(std::string(what) + ": kernels must be square, got " +
                         shape_to_string(kernels.shape()));
  }
}

}  // namespace

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows are output positions (i, j); columns follow the kernel layout (a, b, c).
template <typename T>
RowMat<T> im2col(const BasicTensor<T>& input, std::size_t k) {
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const std::size_t OH = H - k + 1, OW = W - k + 1, run = k * C;
  RowMat<T> cols(static_cast<Eigen::Index>(OH * OW), static_cast<Eigen::Index>(k * run));
  const T* src = input.data().data();
  for (std::size_t i = 0; i < OH; ++i)
    for (std::size_t j = 0; j < OW; ++j) {
      T* dst = cols.data() + (i * OW + j) * k * run;
      for (std::size_t a = 0; a < k; ++a)
        std::copy_n(src + ((i + a) * W + j) * C, run, dst + a * run);
    }
  return cols;
}

template <typename T>
Eigen::Map<const RowMat<T>> as_matrix(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<RowMat<T>> as_matrix(BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_valid(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                            const BasicTensor<T>& bias) {
  check_conv_shapes(input, kernels, "conv2d_valid");
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const std::size_t k = kernels.dim(0), O = kernels.dim(3);
  if (kernels.dim(2) != C || bias.size() != O || H < k || W < k) {
    throw DimensionError("conv2d_valid: input " + shape_to_string(input.shape()) +
                         " incompatible with kernels " + shape_to_string(kernels.shape()) +
                         " and bias " + shape_to_string(bias.shape()));
  }
  const std::size_t OH = H - k + 1, OW = W - k + 1;
  BasicTensor<T> out({OH, OW, O});
  auto y = as_matrix(out, OH * OW, O);
  y.noalias() = im2col(input, k) * as_matrix(kernels, k * k * C, O);
  y.rowwise() += as_matrix(bias, 1, O).row(0);
  return out;
}

template <typename T>
void conv2d_valid_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                           const BasicTensor<T>& grad_output, BasicTensor<T>* grad_input,
                           BasicTensor<T>& grad_kernels, BasicTensor<T>& grad_bias) {
  check_conv_shapes(input, kernels, "conv2d_valid_backward");
  const std::size_t C = input.dim(2);
  const std::size_t k = kernels.dim(0), O = kernels.dim(3);
  const std::size_t OH = grad_output.dim(0), OW = grad_output.dim(1);
  if (grad_output.dim(2) != O || OH + k - 1 != input.dim(0) || OW + k - 1 != input.dim(1) ||
      grad_kernels.shape() != kernels.shape() || grad_bias.size() != O) {
    throw DimensionError("conv2d_valid_backward: inconsistent shapes");
  }
  const auto g = as_matrix(grad_output, OH * OW, O);
  as_matrix(grad_kernels, k * k * C, O).noalias() += im2col(input, k).transpose() * g;
  as_matrix(grad_bias, 1, O) += g.colwise().sum();
  if (grad_input) *grad_input = deconv2d(grad_output, kernels);
}

template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels) {
  check_conv_shapes(input, kernels, "deconv2d");
  const std::size_t H = input.dim(0), W = input.dim(1), O = input.dim(2);
  const std::size_t k = kernels.dim(0), C = kernels.dim(2);
  if (kernels.dim(3) != O) {
    throw DimensionError("deconv2d: input " + shape_to_string(input.shape()) +
                         " incompatible with kernels " + shape_to_string(kernels.shape()));
  }
  const std::size_t OH = H + k - 1, OW = W + k - 1, run = k * C;
  const RowMat<T> cols =
      as_matrix(input, H * W, O) * as_matrix(kernels, k * k * C, O).transpose();
  // col2im: scatter-add each position's contribution into the output.
  BasicTensor<T> out({OH, OW, C});
  T* dst = out.data().data();
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const T* src = cols.data() + (i * W + j) * k * run;
      for (std::size_t a = 0; a < k; ++a) {
        T* row = dst + ((i + a) * OW + j) * C;
        for (std::size_t n = 0; n < run; ++n) row[n] += src[a * run + n];
      }
    }
  return out;
}

template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                        const BasicTensor<T>& bias) {
  BasicTensor<T> out = deconv2d(input, kernels);
  const std::size_t C = out.dim(2);
  if (bias.size() != C) throw DimensionError("deconv2d: bias length must equal output channels");
  for (std::size_t n = 0; n < out.size(); ++n) out[n] += bias[n % C];
  return out;
}

template <typename T>
void deconv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                       const BasicTensor<T>& grad_output, BasicTensor<T>* grad_input,
                       BasicTensor<T>& grad_kernels, BasicTensor<T>* grad_bias) {
  check_conv_shapes(input, kernels, "deconv2d_backward");
  const std::size_t H = input.dim(0), W = input.dim(1), O = input.dim(2);
  const std::size_t k = kernels.dim(0), C = kernels.dim(2);
  if (grad_output.rank() != 3 || grad_output.dim(0) != H + k - 1 ||
      grad_output.dim(1) != W + k - 1 || grad_output.dim(2) != C ||
      grad_kernels.shape() != kernels.shape()) {
    throw DimensionError("deconv2d_backward: inconsistent shapes");
  }
  as_matrix(grad_kernels, k * k * C, O).noalias() +=
      im2col(grad_output, k).transpose() * as_matrix(input, H * W, O);
  if (grad_bias) {
    if (grad_bias->size() != C) throw DimensionError("deconv2d_backward: bias gradient length");
    as_matrix(*grad_bias, 1, C) += as_matrix(grad_output, (H + k - 1) * (W + k - 1), C).colwise().sum();
  }
  if (grad_input) {
    BasicTensor<T> zero_bias({O}, T{0});
    *grad_input = conv2d_valid(grad_output, kernels, zero_bias);
  }
}

template <typename T>
PoolResult<T> maxpool(const BasicTensor<T>& input, std::size_t pool) {
  if (pool < 1) throw ParameterError("maxpool: pool size must be >= 1");
  require_rank(input, 3, "maxpool");
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  if (H < pool || W < pool) {
    throw DimensionError("maxpool: input " + shape_to_string(input.shape()) +
                         " smaller than pool " + std::to_string(pool));
  }
  const std::size_t OH = H / pool, OW = W / pool;
  PoolResult<T> r{BasicTensor<T>({OH, OW, C}), Switches(OH * OW * C)};
  for (std::size_t i = 0; i < OH; ++i) {
    for (std::size_t j = 0; j < OW; ++j) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((i * pool) * W + j * pool) * C + c;
        T best_v = input[best];
        for (std::size_t a = 0; a < pool; ++a) {
          for (std::size_t b = 0; b < pool; ++b) {
            const std::size_t idx = ((i * pool + a) * W + (j * pool + b)) * C + c;
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (i * OW + j) * C + c;
        r.output[o] = best_v;
        r.switches[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> unpool(const BasicTensor<T>& input, const Switches& switches,
                      const Shape& out_shape) {
  const std::size_t out_n = shape_numel(out_shape);
  if (switches.size() != input.size()) {
    throw DimensionError("unpool: " + std::to_string(switches.size()) + " switches for " +
                         std::to_string(input.size()) + " values");
  }
  BasicTensor<T> out(out_shape);
  for (std::size_t n = 0; n < input.size(); ++n) {
    if (switches[n] >= out_n) throw DimensionError("unpool: switch index out of bounds");
    out[switches[n]] = input[n];
  }
  return out;
}

template <typename T>
BasicTensor<T> unpool_backward(const BasicTensor<T>& grad_output, const Switches& switches,
                               const Shape& in_shape) {
  if (switches.size() != shape_numel(in_shape)) {
    throw DimensionError("unpool_backward: switch count does not match input shape");
  }
  BasicTensor<T> g(in_shape);
  for (std::size_t n = 0; n < switches.size(); ++n) {
    if (switches[n] >= grad_output.size()) {
      throw DimensionError("unpool_backward: switch index out of bounds");
    }
    g[n] = grad_output[switches[n]];
  }
  return g;
}

double elu_value(double v, double alpha) { return v > 0.0 ? v : alpha * std::expm1(v); }

double elu_derivative(double v, double alpha) { return v > 0.0 ? 1.0 : alpha * std::exp(v); }

template <typename T>
BasicTensor<T> elu(const BasicTensor<T>& x, double alpha) {
  BasicTensor<T> y = x;
  for (T& v : y.values()) v = static_cast<T>(elu_value(v, alpha));
  return y;
}

template <typename T>
BasicTensor<T> elu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output,
                            double alpha) {
  if (x.size() != grad_output.size()) throw DimensionError("elu_backward: size mismatch");
  BasicTensor<T> g = grad_output;
  for (std::size_t n = 0; n < g.size(); ++n) {
    g[n] = static_cast<T>(g[n] * elu_derivative(x[n], alpha));
  }
  return g;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return {x, BasicTensor<T>(x.shape(), T{1})};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  DropoutResult<T> r{x, BasicTensor<T>(x.shape())};
  for (std::size_t n = 0; n < x.size(); ++n) {
    r.mask[n] = rng.uniform() < rate ? T{0} : keep_scale;
    r.output[n] = x[n] * r.mask[n];
  }
  return r;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias) {
  require_rank(weights, 2, "dense");
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  if (input.size() != in || bias.size() != out) {
    throw DimensionError("dense: input of " + std::to_string(input.size()) +
                         " values incompatible with weights " +
                         shape_to_string(weights.shape()));
  }
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<const Mat> w(weights.data().data(), out, in);
  Eigen::Map<const Vec> x(input.data().data(), in);
  Eigen::Map<const Vec> b(bias.data().data(), out);
  BasicTensor<T> y({out});
  Eigen::Map<Vec>(y.data().data(), out).noalias() = w * x + b;
  return y;
}

template <typename T>
void dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                    const BasicTensor<T>& grad_output, BasicTensor<T>* grad_input,
                    BasicTensor<T>& grad_weights, BasicTensor<T>& grad_bias) {
  const std::size_t out = weights.dim(0), in = weights.dim(1);
  if (grad_output.size() != out || input.size() != in ||
      grad_weights.shape() != weights.shape() || grad_bias.size() != out) {
    throw DimensionError("dense_backward: inconsistent shapes");
  }
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<const Mat> w(weights.data().data(), out, in);
  Eigen::Map<const Vec> x(input.data().data(), in);
  Eigen::Map<const Vec> g(grad_output.data().data(), out);
  Eigen::Map<Mat>(grad_weights.data().data(), out, in).noalias() += g * x.transpose();
  Eigen::Map<Vec>(grad_bias.data().data(), out) += g;
  if (grad_input) {
    *grad_input = BasicTensor<T>(input.shape());
    Eigen::Map<Vec>(grad_input->data().data(), in).noalias() = w.transpose() * g;
  }
}

template <typename T>
double mse(const BasicTensor<T>& x, const BasicTensor<T>& xhat) {
  if (x.shape() != xhat.shape()) {
    throw DimensionError("mse: shape mismatch " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(xhat.shape()));
  }
  double s = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double d = static_cast<double>(x[n]) - xhat[n];
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

template <typename T>
BasicTensor<T> mse_grad(const BasicTensor<T>& x, const BasicTensor<T>& xhat) {
  if (x.shape() != xhat.shape()) throw DimensionError("mse_grad: shape mismatch");
  BasicTensor<T> g(x.shape());
  const double scale = 2.0 / static_cast<double>(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    g[n] = static_cast<T>(scale * (static_cast<double>(xhat[n]) - x[n]));
  }
  return g;
}

#define ANOMKIT_INSTANTIATE_OPS(T)                                                          \
  template BasicTensor<T> conv2d_valid(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                       const BasicTensor<T>&);                              \
  template void conv2d_valid_backward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                      const BasicTensor<T>&, BasicTensor<T>*,               \
                                      BasicTensor<T>&, BasicTensor<T>&);                    \
  template BasicTensor<T> deconv2d(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> deconv2d(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                   const BasicTensor<T>&);                                  \
  template void deconv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                  const BasicTensor<T>&, BasicTensor<T>*, BasicTensor<T>&,  \
                                  BasicTensor<T>*);                                         \
  template PoolResult<T> maxpool(const BasicTensor<T>&, std::size_t);                       \
  template BasicTensor<T> unpool(const BasicTensor<T>&, const Switches&, const Shape&);     \
  template BasicTensor<T> unpool_backward(const BasicTensor<T>&, const Switches&,           \
                                          const Shape&);                                    \
  template BasicTensor<T> elu(const BasicTensor<T>&, double);                               \
  template BasicTensor<T> elu_backward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                       double);                                             \
  template DropoutResult<T> dropout(const BasicTensor<T>&, double, Rng&, bool);             \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                const BasicTensor<T>&);                                     \
  template void dense_backward(const BasicTensor<T>&, const BasicTensor<T>&,                \
                               const BasicTensor<T>&, BasicTensor<T>*, BasicTensor<T>&,     \
                               BasicTensor<T>&);                                            \
  template double mse(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> mse_grad(const BasicTensor<T>&, const BasicTensor<T>&);

ANOMKIT_INSTANTIATE_OPS(float)
ANOMKIT_INSTANTIATE_OPS(double)

}  // namespace anomkit
