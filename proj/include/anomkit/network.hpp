#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anomkit/ops.hpp"
#include "anomkit/rng.hpp"
#include "anomkit/tensor.hpp"

namespace anomkit {

enum class LayerKind { conv, maxpool, unpool, deconv, dense, elu, dropout };

const char* to_string(LayerKind kind);

/// One layer of a sequential network. Only the fields relevant to `kind` are read.
struct LayerSpec {
  LayerKind kind = LayerKind::elu;
  std::size_t kernel = 0;    // conv, deconv: square kernel side
  std::size_t channels = 0;  // conv, deconv: output channels
  std::size_t pool = 0;      // maxpool
  std::size_t units = 0;     // dense
  double rate = 0.0;         // dropout
  double alpha = 1.0;        // elu
  std::size_t pair = 0;      // unpool: index of the maxpool layer whose switches are reused

  static LayerSpec Conv(std::size_t channels, std::size_t kernel);
  static LayerSpec MaxPool(std::size_t pool);
  static LayerSpec Unpool(std::size_t pair);
  static LayerSpec Deconv(std::size_t channels, std::size_t kernel);
  static LayerSpec Dense(std::size_t units);
  static LayerSpec Elu(double alpha = 1.0);
  static LayerSpec Dropout(double rate);

  void validate() const;
  bool has_params() const {
    return kind == LayerKind::conv || kind == LayerKind::deconv || kind == LayerKind::dense;
  }
  bool operator==(const LayerSpec&) const = default;
};

/// shapes[0] is the input; shapes[i + 1] is the output of layer i.
std::vector<Shape> trace_shapes(const Shape& input, const std::vector<LayerSpec>& layers);

/// Number of scalar parameters (weights and biases) of the architecture.
std::size_t parameter_count(const Shape& input, const std::vector<LayerSpec>& layers);

/// Compact notation of the parameterized/pooling layers, e.g. "32c5-2p-128f-64f".
std::string describe(const std::vector<LayerSpec>& layers);

template <typename T>
using ParamSet = std::vector<BasicTensor<T>>;

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& params) {
  ParamSet<T> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.shape());
  return out;
}

template <typename T>
void accumulate(ParamSet<T>& dst, const ParamSet<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst[i].data();
    auto s = src[i].data();
    for (std::size_t n = 0; n < d.size(); ++n) d[n] += s[n];
  }
}

/// Forward record consumed by Network::backward.
template <typename T>
struct Tape {
  std::vector<BasicTensor<T>> activations;  // [0] input, [i + 1] output of layer i
  std::vector<Switches> switches;            // per layer; filled for maxpool
  std::vector<BasicTensor<T>> masks;         // per layer; filled for dropout
  const void* owner = nullptr;
  std::uint64_t version = 0;
  bool consumed = false;
};

template <typename T>
class Network {
 public:
  Network() = default;
  /// Allocates parameters with uniform Glorot init drawn from `init_rng` in layer order.
  Network(Shape input_shape, std::vector<LayerSpec> layers, Rng& init_rng);

  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  const std::vector<Shape>& shapes() const { return shapes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  /// Call after modifying params(); invalidates outstanding tapes.
  void mark_updated() { ++version_; }
  std::uint64_t version() const { return version_; }

  BasicTensor<T> forward(const BasicTensor<T>& x, Tape<T>& tape, bool training, Rng* rng) const;

  /// Inference pass (dropout off) returning the activation after the first `upto` layers.
  BasicTensor<T> infer(const BasicTensor<T>& x, std::size_t upto) const;
  BasicTensor<T> infer(const BasicTensor<T>& x) const { return infer(x, layers_.size()); }

  /// Accumulates parameter gradients of the recorded pass into `grads`.
  /// Returns the gradient with respect to the network input (empty when
  /// `input_grad` is false and the first layer is a convolution).
  BasicTensor<T> backward(Tape<T>& tape, const BasicTensor<T>& grad_output,
                          ParamSet<T>& grads, bool input_grad = true) const;

 private:
  BasicTensor<T> apply(std::size_t l, const BasicTensor<T>& in, Tape<T>* tape, bool training,
                       Rng* rng) const;

  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::ptrdiff_t> param_index_;  // weight slot per layer, bias at +1; -1 if none
  ParamSet<T> params_;
  std::uint64_t version_ = 0;
};

/// Momentum SGD: v <- momentum * v - lr * g; p <- p + v.
/// `velocity` is zero-initialized when empty. Non-finite gradients raise TrainingError.
template <typename T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, ParamSet<T>& velocity, double lr,
              double momentum);

}  // namespace anomkit
