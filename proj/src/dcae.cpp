#include "anomkit/dcae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "anomkit/errors.hpp"
#include "anomkit/parallel.hpp"

namespace anomkit {

Architecture architecture(ModelPreset preset) {
  if (preset == ModelPreset::paper) return {512, 9, 3, 2048, 512, 256};
  return {32, 5, 2, 128, 64, 32};
}

std::vector<LayerSpec> scale_layers(ModelPreset preset, const ModelOptions& options) {
  const Architecture a = architecture(preset);
  const std::size_t s = patch_side(preset);
  const std::size_t conv_out = s - a.conv_kernel + 1;
  const std::size_t pooled = conv_out / a.pool;
  const double d = options.dropout;
  return {
      LayerSpec::Conv(a.conv_channels, a.conv_kernel),      // 0
      LayerSpec::Elu(),                                      // 1
      LayerSpec::Dropout(d),                                 // 2
      LayerSpec::MaxPool(a.pool),                            // 3
      LayerSpec::Dense(a.hidden),                            // 4
      LayerSpec::Elu(),                                      // 5
      LayerSpec::Dropout(d),                                 // 6
      LayerSpec::Dense(a.code),                              // 7
      LayerSpec::Elu(),                                      // 8  <- code
      LayerSpec::Dropout(d),                                 // 9
      LayerSpec::Dense(a.hidden),                            // 10
      LayerSpec::Elu(),                                      // 11
      LayerSpec::Dropout(d),                                 // 12
      LayerSpec::Dense(pooled * pooled * a.conv_channels),   // 13
      LayerSpec::Elu(),                                      // 14
      LayerSpec::Dropout(d),                                 // 15
      LayerSpec::Unpool(3),                                  // 16
      LayerSpec::Deconv(1, a.conv_kernel),                   // 17, linear output
  };
}

std::size_t encoder_depth(const std::vector<LayerSpec>& layers) {
  std::size_t dense_seen = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].kind == LayerKind::dense && ++dense_seen == 2) {
      const bool elu_next = l + 1 < layers.size() && layers[l + 1].kind == LayerKind::elu;
      return l + (elu_next ? 2 : 1);
    }
  }
  throw UsageError("encoder_depth: architecture has fewer than two dense layers");
}

std::vector<LayerSpec> fusion_layers(ModelPreset preset, const ModelOptions& options) {
  const Architecture a = architecture(preset);
  std::vector<LayerSpec> layers{LayerSpec::Dense(a.fusion_hidden)};
  if (options.fusion_elu) layers.push_back(LayerSpec::Elu());
  layers.push_back(LayerSpec::Dense(2 * a.code));
  return layers;
}

std::size_t DcaeModel::code_size() const { return architecture(preset).code; }
std::size_t DcaeModel::feature_size() const { return architecture(preset).fusion_hidden; }

DcaeModel build_model(ModelPreset preset, Rng& rng, const ModelOptions& options) {
  if (!(options.dropout >= 0.0 && options.dropout < 1.0))
    throw ParameterError("dropout rate must lie in [0, 1)");
  DcaeModel m;
  m.preset = preset;
  m.options = options;
  const std::size_t s = patch_side(preset);
  const auto layers = scale_layers(preset, options);
  m.scale1 = Network<float>({s, s, 1}, layers, rng);
  m.scale2 = Network<float>({s, s, 1}, layers, rng);
  m.encoder_layers = encoder_depth(layers);
  const auto fl = fusion_layers(preset, options);
  m.fusion = Network<float>({2 * architecture(preset).code}, fl, rng);
  m.fusion_encoder_layers = options.fusion_elu ? 2 : 1;
  return m;
}

void TrainConfig::validate() const {
  if (batch == 0) throw ParameterError("batch size must be positive");
  if (!(lr > 0.0) || !(fusion_lr > 0.0)) throw ParameterError("learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (!(masking >= 0.0 && masking < 1.0)) throw ParameterError("masking must lie in [0, 1)");
}

namespace {

void zero(ParamSet<float>& g) {
  for (auto& t : g) t.fill(0.0f);
}

// Per-chunk gradient buffers reused across batches.
struct ChunkBuffers {
  std::vector<ParamSet<float>> grads;
  std::vector<double> loss;

  ChunkBuffers(const ParamSet<float>& like, std::size_t chunks) : loss(chunks, 0.0) {
    for (std::size_t i = 0; i < chunks; ++i) grads.push_back(zeros_like(like));
  }
  void reset(std::size_t used) {
    for (std::size_t i = 0; i < used; ++i) {
      zero(grads[i]);
      loss[i] = 0.0;
    }
  }
  // Fixed-order reduction into grads[0].
  void reduce(std::size_t used) {
    for (std::size_t i = 1; i < used; ++i) {
      accumulate(grads[0], grads[i]);
      loss[0] += loss[i];
    }
  }
};

std::size_t chunks_for(std::size_t batch) { return (batch + kGradientChunk - 1) / kGradientChunk; }

// MSE gradient for one sample scaled into the batch mean.
Tensor scaled_grad(const Tensor& target, const Tensor& output, double scale) {
  Tensor g = mse_grad(target, output);
  for (float& v : g.values()) v = static_cast<float>(v * scale);
  return g;
}

void checked_step(Network<float>& net, ParamSet<float>& grads, ParamSet<float>& velocity,
                  double lr, double momentum, const std::string& where) {
  try {
    sgd_step(net.params(), grads, velocity, lr, momentum);
  } catch (const TrainingError& e) {
    throw TrainingError(where + ": " + e.what());
  }
  net.mark_updated();
}

std::string location(const char* stage, std::size_t epoch, std::size_t batch) {
  return std::string(stage) + " epoch " + std::to_string(epoch) + " batch " + std::to_string(batch);
}

}  // namespace

void train_dcae(DcaeModel& model, const PatchDataset& dataset, const TrainConfig& config, Rng& rng) {
  config.validate();
  if (dataset.pairs.empty()) throw EmptyDatasetError("train_dcae: empty dataset");
  if (dataset.split != Split::healthy_train)
    throw UsageError("train_dcae expects the healthy-train split");
  const Shape in_shape = model.scale1.input_shape();
  for (const auto& p : dataset.pairs)
    if (p.scale1.shape() != in_shape || p.scale2.shape() != in_shape)
      throw DimensionError("train_dcae: patch shape does not match the model preset");

  const std::size_t n = dataset.pairs.size();
  const std::size_t chunks = chunks_for(config.batch);
  ChunkBuffers buf1(model.scale1.params(), chunks), buf2(model.scale2.params(), chunks);
  ParamSet<float> vel1, vel2;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t steps = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double sum1 = 0.0, sum2 = 0.0;
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch, ++batch_index) {
      const std::size_t bs = std::min(config.batch, n - start);
      const std::size_t used = chunks_for(bs);
      const Rng batch_rng(rng.next_u64());
      buf1.reset(used);
      buf2.reset(used);
      const double scale = 1.0 / static_cast<double>(bs);
      parallel_for(used, [&](std::size_t ch) {
        const std::size_t lo = ch * kGradientChunk, hi = std::min(bs, lo + kGradientChunk);
        Tape<float> tape;
        for (std::size_t k = lo; k < hi; ++k) {
          const PatchPair& pair = dataset.pairs[order[start + k]];
          Rng sample_rng = batch_rng.derive(k);
          auto out1 = model.scale1.forward(pair.scale1, tape, true, &sample_rng);
          buf1.loss[ch] += mse(pair.scale1, out1);
          model.scale1.backward(tape, scaled_grad(pair.scale1, out1, scale), buf1.grads[ch], false);
          auto out2 = model.scale2.forward(pair.scale2, tape, true, &sample_rng);
          buf2.loss[ch] += mse(pair.scale2, out2);
          model.scale2.backward(tape, scaled_grad(pair.scale2, out2, scale), buf2.grads[ch], false);
        }
      });
      buf1.reduce(used);
      buf2.reduce(used);
      if (!std::isfinite(buf1.loss[0]) || !std::isfinite(buf2.loss[0])) {
        throw TrainingError("non-finite loss at " + location("dcae", epoch, batch_index) +
                            " (scale1 " + std::to_string(buf1.loss[0] * scale) + ", scale2 " +
                            std::to_string(buf2.loss[0] * scale) + ")");
      }
      const std::string where = location("dcae", epoch, batch_index);
      checked_step(model.scale1, buf1.grads[0], vel1, config.lr, config.momentum, where);
      checked_step(model.scale2, buf2.grads[0], vel2, config.lr, config.momentum, where);
      sum1 += buf1.loss[0];
      sum2 += buf2.loss[0];
      seen += bs;
      if (config.max_steps > 0 && ++steps >= config.max_steps) break;
    }
    EpochLog e;
    e.epoch = epoch;
    e.loss_scale1 = sum1 / static_cast<double>(seen);
    e.loss_scale2 = sum2 / static_cast<double>(seen);
    e.loss = 0.5 * (e.loss_scale1 + e.loss_scale2);
    model.log.push_back(e);
    if (config.max_steps > 0 && steps >= config.max_steps) break;
  }
  model.scales_trained = true;
}

double reconstruction_loss(const DcaeModel& model, const PatchDataset& dataset) {
  if (dataset.pairs.empty()) throw EmptyDatasetError("reconstruction_loss: empty dataset");
  std::vector<double> loss(dataset.pairs.size());
  parallel_for(loss.size(), [&](std::size_t i) {
    const auto& p = dataset.pairs[i];
    loss[i] = 0.5 * (mse(p.scale1, model.scale1.infer(p.scale1)) +
                     mse(p.scale2, model.scale2.infer(p.scale2)));
  });
  return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(loss.size());
}

std::vector<float> encode_pair(const DcaeModel& model, const PatchPair& pair) {
  const Tensor c1 = model.scale1.infer(pair.scale1, model.encoder_layers);
  const Tensor c2 = model.scale2.infer(pair.scale2, model.encoder_layers);
  std::vector<float> out(c1.values());
  out.insert(out.end(), c2.values().begin(), c2.values().end());
  return out;
}

void train_fusion(DcaeModel& model, const PatchDataset& dataset, const TrainConfig& config,
                  Rng& rng) {
  config.validate();
  if (!model.scales_trained) throw UsageError("train_fusion: scale autoencoders are not trained");
  if (dataset.pairs.empty()) throw EmptyDatasetError("train_fusion: empty dataset");

  const std::size_t n = dataset.pairs.size();
  const Shape code_shape = model.fusion.input_shape();
  std::vector<Tensor> codes(n);
  parallel_for(n, [&](std::size_t i) { codes[i] = Tensor(code_shape, encode_pair(model, dataset.pairs[i])); });

  const std::size_t chunks = chunks_for(config.batch);
  ChunkBuffers buf(model.fusion.params(), chunks);
  ParamSet<float> vel;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t steps = 0;

  for (std::size_t epoch = 0; epoch < config.fusion_epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch, ++batch_index) {
      const std::size_t bs = std::min(config.batch, n - start);
      const std::size_t used = chunks_for(bs);
      const Rng batch_rng(rng.next_u64());
      buf.reset(used);
      const double scale = 1.0 / static_cast<double>(bs);
      parallel_for(used, [&](std::size_t ch) {
        const std::size_t lo = ch * kGradientChunk, hi = std::min(bs, lo + kGradientChunk);
        Tape<float> tape;
        for (std::size_t k = lo; k < hi; ++k) {
          const Tensor& clean = codes[order[start + k]];
          Tensor noisy = clean;
          Rng mask_rng = batch_rng.derive(k);
          for (float& v : noisy.values())
            if (mask_rng.bernoulli(config.masking)) v = 0.0f;
          auto out = model.fusion.forward(noisy, tape, true, &mask_rng);
          buf.loss[ch] += mse(clean, out);
          model.fusion.backward(tape, scaled_grad(clean, out, scale), buf.grads[ch], false);
        }
      });
      buf.reduce(used);
      const std::string where = location("fusion", epoch, batch_index);
      if (!std::isfinite(buf.loss[0])) throw TrainingError("non-finite loss at " + where);
      checked_step(model.fusion, buf.grads[0], vel, config.fusion_lr, config.momentum, where);
      sum += buf.loss[0];
      seen += bs;
      if (config.max_steps > 0 && ++steps >= config.max_steps) break;
    }
    EpochLog e;
    e.epoch = epoch;
    e.loss = sum / static_cast<double>(seen);
    model.fusion_log.push_back(e);
    if (config.max_steps > 0 && steps >= config.max_steps) break;
  }
  model.fusion_trained = true;
}

std::vector<float> extract_features(const DcaeModel& model, const PatchPair& pair) {
  if (!model.scales_trained || !model.fusion_trained)
    throw UsageError("extract_features: model is not fully trained");
  const Tensor code(model.fusion.input_shape(), encode_pair(model, pair));
  return model.fusion.infer(code, model.fusion_encoder_layers).values();
}

Matrix extract_features(const DcaeModel& model, const std::vector<PatchPair>& pairs) {
  if (!model.scales_trained || !model.fusion_trained)
    throw UsageError("extract_features: model is not fully trained");
  Matrix z(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(model.feature_size()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto f = extract_features(model, pairs[i]);
    for (std::size_t j = 0; j < f.size(); ++j)
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
  });
  return z;
}

}  // namespace anomkit
