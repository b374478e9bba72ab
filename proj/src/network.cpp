#include "anomkit/network.hpp"

#include <cmath>
#include <sstream>

namespace anomkit {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::unpool: return "unpool";
    case LayerKind::deconv: return "deconv";
    case LayerKind::dense: return "dense";
    case LayerKind::elu: return "elu";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

LayerSpec LayerSpec::Conv(std::size_t channels, std::size_t kernel) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.channels = channels;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::MaxPool(std::size_t pool) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.pool = pool;
  return s;
}

LayerSpec LayerSpec::Unpool(std::size_t pair) {
  LayerSpec s;
  s.kind = LayerKind::unpool;
  s.pair = pair;
  return s;
}

LayerSpec LayerSpec::Deconv(std::size_t channels, std::size_t kernel) {
  LayerSpec s;
  s.kind = LayerKind::deconv;
  s.channels = channels;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::Dense(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::Elu(double alpha) {
  LayerSpec s;
  s.kind = LayerKind::elu;
  s.alpha = alpha;
  return s;
}

LayerSpec LayerSpec::Dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::deconv:
      if (kernel < 1) throw ParameterError("kernel size must be >= 1");
      if (channels < 1) throw ParameterError("channel count must be >= 1");
      break;
    case LayerKind::maxpool:
      if (pool < 1) throw ParameterError("pool size must be >= 1");
      break;
    case LayerKind::dense:
      if (units < 1) throw ParameterError("dense unit count must be >= 1");
      break;
    case LayerKind::dropout:
      if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must lie in [0, 1)");
      break;
    case LayerKind::elu:
      if (!(alpha > 0.0)) throw ParameterError("elu alpha must be positive");
      break;
    case LayerKind::unpool:
      break;
  }
}

std::vector<Shape> trace_shapes(const Shape& input, const std::vector<LayerSpec>& layers) {
  std::vector<Shape> shapes{input};
  shape_numel(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    s.validate();
    const Shape& in = shapes.back();
    auto need_rank3 = [&] {
      if (in.size() != 3) {
        throw DimensionError("layer " + std::to_string(l) + " (" + to_string(s.kind) +
                             ") needs a rank-3 input, got " + shape_to_string(in));
      }
    };
    switch (s.kind) {
      case LayerKind::conv:
        need_rank3();
        if (in[0] < s.kernel || in[1] < s.kernel) {
          throw DimensionError("layer " + std::to_string(l) + ": input " + shape_to_string(in) +
                               " smaller than kernel");
        }
        shapes.push_back({in[0] - s.kernel + 1, in[1] - s.kernel + 1, s.channels});
        break;
      case LayerKind::deconv:
        need_rank3();
        shapes.push_back({in[0] + s.kernel - 1, in[1] + s.kernel - 1, s.channels});
        break;
      case LayerKind::maxpool:
        need_rank3();
        if (in[0] < s.pool || in[1] < s.pool) {
          throw DimensionError("layer " + std::to_string(l) + ": input smaller than pool");
        }
        shapes.push_back({in[0] / s.pool, in[1] / s.pool, in[2]});
        break;
      case LayerKind::unpool: {
        if (s.pair >= l || layers[s.pair].kind != LayerKind::maxpool) {
          throw DimensionError("layer " + std::to_string(l) +
                               ": unpool must pair with an earlier maxpool layer");
        }
        if (shape_numel(in) != shape_numel(shapes[s.pair + 1])) {
          throw DimensionError("layer " + std::to_string(l) + ": unpool input " +
                               shape_to_string(in) + " does not match pooled shape " +
                               shape_to_string(shapes[s.pair + 1]));
        }
        shapes.push_back(shapes[s.pair]);
        break;
      }
      case LayerKind::dense:
        shapes.push_back({s.units});
        break;
      case LayerKind::elu:
      case LayerKind::dropout:
        shapes.push_back(in);
        break;
    }
  }
  return shapes;
}

std::size_t parameter_count(const Shape& input, const std::vector<LayerSpec>& layers) {
  const auto shapes = trace_shapes(input, layers);
  std::size_t n = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& s = layers[l];
    const Shape& in = shapes[l];
    switch (s.kind) {
      case LayerKind::conv:
      case LayerKind::deconv:
        n += s.kernel * s.kernel * in[2] * s.channels + s.channels;
        break;
      case LayerKind::dense:
        n += shape_numel(in) * s.units + s.units;
        break;
      default:
        break;
    }
  }
  return n;
}

std::string describe(const std::vector<LayerSpec>& layers) {
  std::ostringstream os;
  bool first = true;
  for (const auto& s : layers) {
    std::string token;
    switch (s.kind) {
      case LayerKind::conv: token = std::to_string(s.channels) + "c" + std::to_string(s.kernel); break;
      case LayerKind::deconv: token = std::to_string(s.channels) + "d" + std::to_string(s.kernel); break;
      case LayerKind::maxpool: token = std::to_string(s.pool) + "p"; break;
      case LayerKind::unpool: token = "u"; break;
      case LayerKind::dense: token = std::to_string(s.units) + "f"; break;
      default: continue;
    }
    if (!first) os << '-';
    os << token;
    first = false;
  }
  return os.str();
}

template <typename T>
Network<T>::Network(Shape input_shape, std::vector<LayerSpec> layers, Rng& init_rng)
    : layers_(std::move(layers)) {
  shapes_ = trace_shapes(input_shape, layers_);
  param_index_.assign(layers_.size(), -1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerSpec& s = layers_[l];
    const Shape& in = shapes_[l];
    Shape wshape;
    std::size_t fan_in = 0, fan_out = 0, nbias = 0;
    switch (s.kind) {
      case LayerKind::conv:
        wshape = {s.kernel, s.kernel, in[2], s.channels};
        fan_in = s.kernel * s.kernel * in[2];
        fan_out = s.kernel * s.kernel * s.channels;
        nbias = s.channels;
        break;
      case LayerKind::deconv:
        // Stored as the kernels of the conv it is the adjoint of: [k, k, out, in].
        wshape = {s.kernel, s.kernel, s.channels, in[2]};
        fan_in = s.kernel * s.kernel * in[2];
        fan_out = s.kernel * s.kernel * s.channels;
        nbias = s.channels;
        break;
      case LayerKind::dense:
        wshape = {s.units, shape_numel(in)};
        fan_in = shape_numel(in);
        fan_out = s.units;
        nbias = s.units;
        break;
      default:
        continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    BasicTensor<T> w(wshape);
    for (T& v : w.values()) v = static_cast<T>(init_rng.uniform(-bound, bound));
    param_index_[l] = static_cast<std::ptrdiff_t>(params_.size());
    params_.push_back(std::move(w));
    params_.emplace_back(Shape{nbias});
  }
}

template <typename T>
BasicTensor<T> Network<T>::apply(std::size_t l, const BasicTensor<T>& in, Tape<T>* tape,
                                 bool training, Rng* rng) const {
  const LayerSpec& s = layers_[l];
  const std::ptrdiff_t p = param_index_[l];
  switch (s.kind) {
    case LayerKind::conv:
      return conv2d_valid(in, params_[p], params_[p + 1]);
    case LayerKind::deconv:
      return deconv2d(in, params_[p], params_[p + 1]);
    case LayerKind::dense:
      return dense(in, params_[p], params_[p + 1]);
    case LayerKind::elu:
      return elu(in, s.alpha);
    case LayerKind::maxpool: {
      auto r = maxpool(in, s.pool);
      if (tape) tape->switches[l] = std::move(r.switches);
      return std::move(r.output);
    }
    case LayerKind::unpool: {
      if (!tape || tape->switches[s.pair].empty()) {
        throw UsageError("unpool layer " + std::to_string(l) + " has no recorded switches");
      }
      return unpool(in, tape->switches[s.pair], shapes_[l + 1]);
    }
    case LayerKind::dropout: {
      if (!training || s.rate == 0.0) return in;
      if (!rng) throw UsageError("dropout in training mode needs an Rng");
      auto r = dropout(in, s.rate, *rng, true);
      if (tape) tape->masks[l] = std::move(r.mask);
      return std::move(r.output);
    }
  }
  throw UsageError("unknown layer kind");
}

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& x, Tape<T>& tape, bool training,
                                   Rng* rng) const {
  if (x.shape() != input_shape()) {
    throw DimensionError("network input " + shape_to_string(x.shape()) + " expected " +
                         shape_to_string(input_shape()));
  }
  tape.activations.clear();
  tape.activations.reserve(layers_.size() + 1);
  tape.switches.assign(layers_.size(), {});
  tape.masks.assign(layers_.size(), {});
  tape.activations.push_back(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    tape.activations.push_back(apply(l, tape.activations.back(), &tape, training, rng));
  }
  tape.owner = this;
  tape.version = version_;
  tape.consumed = false;
  return tape.activations.back();
}

template <typename T>
BasicTensor<T> Network<T>::infer(const BasicTensor<T>& x, std::size_t upto) const {
  if (upto > layers_.size()) throw UsageError("infer: layer index out of range");
  // Unpool layers need the switches of their maxpool, so keep a light tape.
  Tape<T> tape;
  tape.switches.assign(layers_.size(), {});
  tape.masks.assign(layers_.size(), {});
  if (x.shape() != input_shape()) {
    throw DimensionError("network input " + shape_to_string(x.shape()) + " expected " +
                         shape_to_string(input_shape()));
  }
  BasicTensor<T> a = x;
  for (std::size_t l = 0; l < upto; ++l) a = apply(l, a, &tape, false, nullptr);
  return a;
}

template <typename T>
BasicTensor<T> Network<T>::backward(Tape<T>& tape, const BasicTensor<T>& grad_output,
                                    ParamSet<T>& grads, bool input_grad) const {
  if (tape.owner != this || tape.version != version_ || tape.consumed ||
      tape.activations.size() != layers_.size() + 1) {
    throw UsageError("backward: tape does not belong to the latest forward pass of this network");
  }
  if (grads.size() != params_.size()) {
    throw UsageError("backward: gradient set does not match parameters");
  }
  if (grad_output.size() != shape_numel(output_shape())) {
    throw DimensionError("backward: gradient of " + std::to_string(grad_output.size()) +
                         " values for output " + shape_to_string(output_shape()));
  }
  tape.consumed = true;
  BasicTensor<T> g = grad_output;
  g.reshape(output_shape());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LayerSpec& s = layers_[l];
    const BasicTensor<T>& in = tape.activations[l];
    const std::ptrdiff_t p = param_index_[l];
    switch (s.kind) {
      case LayerKind::conv: {
        BasicTensor<T> gin;
        const bool need = input_grad || l > 0;
        conv2d_valid_backward(in, params_[p], g, need ? &gin : nullptr, grads[p], grads[p + 1]);
        if (!need) return {};
        g = std::move(gin);
        break;
      }
      case LayerKind::deconv: {
        BasicTensor<T> gin;
        deconv2d_backward(in, params_[p], g, &gin, grads[p], &grads[p + 1]);
        g = std::move(gin);
        break;
      }
      case LayerKind::dense: {
        BasicTensor<T> gin;
        dense_backward(in, params_[p], g, &gin, grads[p], grads[p + 1]);
        g = std::move(gin);
        break;
      }
      case LayerKind::elu:
        g = elu_backward(in, g, s.alpha);
        break;
      case LayerKind::maxpool:
        g = unpool(g, tape.switches[l], in.shape());
        break;
      case LayerKind::unpool:
        g = unpool_backward(g, tape.switches[s.pair], in.shape());
        break;
      case LayerKind::dropout:
        if (!tape.masks[l].empty()) {
          for (std::size_t n = 0; n < g.size(); ++n) g[n] *= tape.masks[l][n];
        }
        break;
    }
  }
  return g;
}

template <typename T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, ParamSet<T>& velocity, double lr,
              double momentum) {
  if (!(lr > 0.0)) throw ParameterError("sgd: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("sgd: momentum must lie in [0, 1)");
  if (grads.size() != params.size()) throw DimensionError("sgd: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) throw DimensionError("sgd: gradient shape mismatch");
    if (!grads[i].all_finite()) {
      throw TrainingError("sgd: non-finite gradient in parameter tensor " + std::to_string(i) +
                          " " + shape_to_string(grads[i].shape()));
    }
  }
  if (velocity.empty()) velocity = zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto v = velocity[i].data();
    auto g = grads[i].data();
    for (std::size_t n = 0; n < p.size(); ++n) {
      v[n] = static_cast<T>(momentum * v[n] - lr * g[n]);
      p[n] += v[n];
    }
  }
}

template class Network<float>;
template class Network<double>;
template void sgd_step(ParamSet<float>&, const ParamSet<float>&, ParamSet<float>&, double, double);
template void sgd_step(ParamSet<double>&, const ParamSet<double>&, ParamSet<double>&, double,
                       double);

}  // namespace anomkit
