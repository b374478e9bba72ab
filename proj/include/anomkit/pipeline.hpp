#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "anomkit/baseline_pca.hpp"
#include "anomkit/cluster.hpp"
#include "anomkit/dcae.hpp"
#include "anomkit/metrics.hpp"
#include "anomkit/ocsvm.hpp"
#include "anomkit/phantom.hpp"
#include "anomkit/preprocess.hpp"

namespace anomkit {

/// Every tunable of the experiment graph; serialized as JSON (see config.hpp).
struct PipelineConfig {
  ModelPreset preset = ModelPreset::desk;
  std::uint64_t seed = 42;
  PreprocessConfig preprocess;
  ModelOptions model;
  TrainConfig train;
  std::size_t train_cap = 12000;     // healthy patch pairs for the autoencoders and PCA
  double nu = 0.1, svm_tol = 1e-6;   // shared by all three one-class SVMs
  std::size_t svm_max_iter = 2000000;
  std::size_t svm_cap = 4000;        // healthy feature rows for the one-class SVMs
  SelectKOptions cluster;
  std::size_t cluster_cap = 4000;    // anomalous feature rows for clustering
  CvOptions cv;
  std::size_t per_class = 200;

  void validate() const;
};

/// Desk defaults, tuned for the phantom benchmark.
PipelineConfig default_config(ModelPreset preset = ModelPreset::desk);

enum class Method { dcae = 0, pca_fixed = 1, pca_var = 2 };
inline constexpr std::array<Method, 3> kMethods{Method::dcae, Method::pca_fixed, Method::pca_var};
const char* to_string(Method m);

/// Everything a bundle stores.
struct Models {
  PipelineConfig config;
  DcaeModel dcae;
  PcaBaseline pca_fixed, pca_var;
  std::array<OcSvmModel, 3> svm;     // indexed by Method
  std::optional<ClusterModel> cluster;  // on DCAE features

  Embedder embedder(Method m) const;
  const OcSvmModel& ocsvm(Method m) const { return svm[static_cast<std::size_t>(m)]; }
};

/// Progress sink; receives one line per stage event.
using Logger = std::function<void(const std::string&)>;

/// Preprocesses volumes in parallel (output order = input order).
std::vector<PreparedVolume> prepare_volumes(const std::vector<const Volume*>& volumes,
                                            const PreprocessConfig& config);

/// Trains both scale autoencoders and the fusion autoencoder, fits both PCA baselines,
/// and fits a one-class SVM per method on healthy features with identical nu/tol.
/// Stored parameters are rounded to single precision so a saved bundle is exact.
Models train_models(const std::vector<PreparedVolume>& healthy, const PipelineConfig& config,
                    const Logger& log = {});

/// Embeds anomaly-split superpixels, keeps those flagged by the DCAE one-class SVM, and
/// selects the number of clusters by the Davies-Bouldin index.
void fit_clusters(Models& models, const std::vector<PreparedVolume>& anomalous,
                  const Logger& log = {});

struct Segmentation {
  AnomalyMap map;
  std::vector<std::optional<std::size_t>> cluster;  // per map.superpixels entry (anomalies only)
};

Segmentation segment(const Models& models, Method method, const PreparedVolume& volume);

struct Evaluation {
  std::vector<SegRow> seg;
  std::vector<CvRow> cv;
};

/// Dice/precision/recall inside the true retina band (flattened frame) for every method,
/// plus the grouped-CV classification probe on the test volumes.
Evaluation evaluate(const Models& models, const std::vector<PreparedVolume>& test,
                    const std::vector<GroundTruth>& truth, const Logger& log = {});

/// Retina band (inclusive true surfaces) brought into the flattened frame.
std::vector<std::uint8_t> flattened_retina_mask(const GroundTruth& truth, const PreparedVolume& prepared);

}  // namespace anomkit
