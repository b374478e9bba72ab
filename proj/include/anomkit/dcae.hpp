#pragma once

#include <string>
#include <vector>

#include "anomkit/network.hpp"
#include "anomkit/patches.hpp"
#include "anomkit/pca.hpp"

namespace anomkit {

/// Layer sizes of one scale autoencoder and of the fusion denoising autoencoder.
struct Architecture {
  std::size_t conv_channels, conv_kernel, pool, hidden, code, fusion_hidden;
};

Architecture architecture(ModelPreset preset);

struct ModelOptions {
  double dropout = 0.2;     // after every parameterized layer except the output
  bool fusion_elu = true;   // ELU on the fusion hidden layer
};

/// Encoder: conv -> ELU -> drop -> pool -> dense -> ELU -> drop -> dense(code) -> ELU -> drop;
/// decoder mirrors it and ends in a linear deconvolution.
std::vector<LayerSpec> scale_layers(ModelPreset preset, const ModelOptions& options = {});
/// Number of leading layers of scale_layers() that form the encoder (through the code ELU).
std::size_t encoder_depth(const std::vector<LayerSpec>& layers);
/// Fusion autoencoder on the concatenated codes: dense(hidden) [-> ELU] -> dense(2 * code).
std::vector<LayerSpec> fusion_layers(ModelPreset preset, const ModelOptions& options = {});

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;                  // mean over both scales (or the fusion loss)
  double loss_scale1 = 0.0, loss_scale2 = 0.0;
};

struct DcaeModel {
  ModelPreset preset = ModelPreset::desk;
  ModelOptions options;
  Network<float> scale1, scale2, fusion;
  std::size_t encoder_layers = 0;
  std::size_t fusion_encoder_layers = 0;
  bool scales_trained = false, fusion_trained = false;
  std::vector<EpochLog> log, fusion_log;

  std::size_t code_size() const;     // per-scale encoding length
  std::size_t feature_size() const;  // length of z
};

/// Allocates both scale autoencoders and the fusion autoencoder (Glorot init from `rng`).
/// The paper preset needs on the order of a gigabyte of parameters.
DcaeModel build_model(ModelPreset preset, Rng& rng, const ModelOptions& options = {});

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 64;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t max_steps = 0;  // stop after this many optimizer steps when > 0
  // Fusion stage.
  std::size_t fusion_epochs = 10;
  double fusion_lr = 1e-3;
  double masking = 0.2;

  void validate() const;
};

/// Samples per gradient chunk. Chunks are reduced in index order, so the summed
/// gradient does not depend on the number of threads.
inline constexpr std::size_t kGradientChunk = 8;

/// Joint minibatch training of both scale autoencoders (one step updates both).
/// Throws TrainingError with epoch/batch diagnostics on a non-finite loss.
void train_dcae(DcaeModel& model, const PatchDataset& dataset, const TrainConfig& config, Rng& rng);

/// Mean inference-mode reconstruction MSE over both scales.
double reconstruction_loss(const DcaeModel& model, const PatchDataset& dataset);

/// Frozen-encoder codes of a pair, concatenated (scale1 then scale2).
std::vector<float> encode_pair(const DcaeModel& model, const PatchPair& pair);

/// Trains the fusion denoising autoencoder on masked concatenated codes.
void train_fusion(DcaeModel& model, const PatchDataset& dataset, const TrainConfig& config,
                  Rng& rng);

/// z: fusion hidden activation. Throws UsageError unless both stages are trained.
std::vector<float> extract_features(const DcaeModel& model, const PatchPair& pair);
/// One row of z per pair, computed in parallel with index-ordered output.
Matrix extract_features(const DcaeModel& model, const std::vector<PatchPair>& pairs);

}  // namespace anomkit
