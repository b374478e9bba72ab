#pragma once

#include <cstdint>
#include <vector>

#include "anomkit/rng.hpp"
#include "anomkit/tensor.hpp"

// Layer primitives on rank-3 [H, W, C] tensors and their exact gradients.
// Convolution kernels are laid out [k, k, Cin, Cout].

namespace anomkit {

/// Flat argmax positions (indices into the pooled input) per output cell.
using Switches = std::vector<std::uint32_t>;

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  Switches switches;
};

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  BasicTensor<T> mask;  // 0 or 1/(1-rate) per element
};

template <typename T>
BasicTensor<T> conv2d_valid(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                            const BasicTensor<T>& bias);

/// Gradients of conv2d_valid. `grad_input` may be null when not needed.
/// Kernel and bias gradients are accumulated (+=).
template <typename T>
void conv2d_valid_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                           const BasicTensor<T>& grad_output, BasicTensor<T>* grad_input,
                           BasicTensor<T>& grad_kernels, BasicTensor<T>& grad_bias);

/// Adjoint of conv2d_valid: [H, W, Cout] -> [H+k-1, W+k-1, Cin].
template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels);

/// deconv2d followed by a per-output-channel bias of length Cin.
template <typename T>
BasicTensor<T> deconv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                        const BasicTensor<T>& bias);

template <typename T>
void deconv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                       const BasicTensor<T>& grad_output, BasicTensor<T>* grad_input,
                       BasicTensor<T>& grad_kernels, BasicTensor<T>* grad_bias);

/// Non-overlapping p x p max pooling; trailing rows/cols are dropped.
/// Ties resolve to the lowest flat index.
template <typename T>
PoolResult<T> maxpool(const BasicTensor<T>& input, std::size_t pool);

/// Scatter each value to its recorded switch position in a zero tensor of `out_shape`.
template <typename T>
BasicTensor<T> unpool(const BasicTensor<T>& input, const Switches& switches,
                      const Shape& out_shape);

/// Gradient of unpool w.r.t. its input (a gather at the switch positions).
template <typename T>
BasicTensor<T> unpool_backward(const BasicTensor<T>& grad_output, const Switches& switches,
                               const Shape& in_shape);

template <typename T>
BasicTensor<T> elu(const BasicTensor<T>& x, double alpha = 1.0);

/// Multiplies `grad_output` by f'(x) where x is the ELU input.
template <typename T>
BasicTensor<T> elu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output,
                            double alpha = 1.0);

double elu_value(double v, double alpha = 1.0);
double elu_derivative(double v, double alpha = 1.0);

/// Inverted dropout. With training == false (or rate == 0) the input passes through.
template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& x, double rate, Rng& rng, bool training);

/// y = W x + b with W stored [out, in].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias);

template <typename T>
void dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                    const BasicTensor<T>& grad_output, BasicTensor<T>* grad_input,
                    BasicTensor<T>& grad_weights, BasicTensor<T>& grad_bias);

template <typename T>
double mse(const BasicTensor<T>& x, const BasicTensor<T>& xhat);

/// d mse / d xhat = 2 (xhat - x) / N.
template <typename T>
BasicTensor<T> mse_grad(const BasicTensor<T>& x, const BasicTensor<T>& xhat);

}  // namespace anomkit
