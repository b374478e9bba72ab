#include "anomkit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "anomkit/errors.hpp"
#include "anomkit/parallel.hpp"

namespace anomkit {

namespace {

// Seed salts of the independent random streams derived from the pipeline seed.
enum Stream : std::uint64_t {
  kInit = 1,
  kHealthySample = 2,
  kTrain = 3,
  kFusion = 4,
  kSvmSample = 5,
  kClusterSample = 6,
  kCluster = 7,
  kProbeSample = 8,
  kProbeFolds = 9,
};

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

// Round-trip through single precision so the stored (f32) values are the ones used.
void round_to_float(Matrix& m) { m = m.cast<float>().cast<double>(); }
void round_to_float(Vector& v) { v = v.cast<float>().cast<double>(); }
void round_to_float(double& x) { x = static_cast<double>(static_cast<float>(x)); }

void round_to_float(PcaModel& p) {
  round_to_float(p.mean);
  round_to_float(p.components);
  round_to_float(p.eigenvalues);
  round_to_float(p.retained_fraction);
}

void round_to_float(OcSvmModel& m) {
  round_to_float(m.w);
  round_to_float(m.rho);
  round_to_float(m.standardizer.offset);
  round_to_float(m.standardizer.scale);
}

PatchPair zero_pair(ModelPreset preset) {
  const std::size_t s = patch_side(preset);
  PatchPair p;
  p.scale1 = Tensor({s, s, 1});
  p.scale2 = Tensor({s, s, 1});
  return p;
}

std::string elapsed(std::chrono::steady_clock::time_point start) {
  const double s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

}  // namespace

void PipelineConfig::validate() const {
  preprocess.validate();
  train.validate();
  cv.svm.validate();
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("nu must lie in (0, 1]");
  if (!(svm_tol > 0.0)) throw ParameterError("svm tol must be positive");
  if (svm_max_iter == 0) throw ParameterError("svm max_iter must be positive");
  if (train_cap < 2 || svm_cap < 2) throw ParameterError("training caps must be at least 2");
  if (cluster.k_min < 2 || cluster.k_max < cluster.k_min)
    throw ParameterError("cluster k range must satisfy 2 <= k_min <= k_max");
  if (cluster.restarts == 0 || cluster.max_iter == 0)
    throw ParameterError("cluster restarts and max_iter must be positive");
  if (cluster_cap <= cluster.k_max) throw ParameterError("cluster cap must exceed k_max");
  if (cv.folds < 2) throw ParameterError("folds must be at least 2");
  if (per_class == 0) throw ParameterError("per_class must be positive");
}

PipelineConfig default_config(ModelPreset preset) {
  PipelineConfig c;
  c.preset = preset;
  c.train.epochs = 10;
  c.train.batch = 64;
  c.train.lr = 0.05;
  c.train.fusion_epochs = 10;
  c.train.fusion_lr = 0.02;
  return c;
}

const char* to_string(Method m) {
  switch (m) {
    case Method::dcae: return "dcae";
    case Method::pca_fixed: return "pca_fixed";
    case Method::pca_var: return "pca_var";
  }
  return "?";
}

Embedder Models::embedder(Method m) const {
  switch (m) {
    case Method::dcae:
      return [this](const std::vector<PatchPair>& p) { return extract_features(dcae, p); };
    case Method::pca_fixed:
      return [this](const std::vector<PatchPair>& p) { return embed(pca_fixed, p); };
    case Method::pca_var:
      return [this](const std::vector<PatchPair>& p) { return embed(pca_var, p); };
  }
  throw UsageError("unknown method");
}

std::vector<PreparedVolume> prepare_volumes(const std::vector<const Volume*>& volumes,
                                            const PreprocessConfig& config) {
  std::vector<PreparedVolume> out(volumes.size());
  parallel_for(volumes.size(), [&](std::size_t i) { out[i] = preprocess_volume(*volumes[i], config); });
  return out;
}

Models train_models(const std::vector<PreparedVolume>& healthy, const PipelineConfig& config,
                    const Logger& log) {
  config.validate();
  const Rng root(config.seed);
  const auto start = std::chrono::steady_clock::now();
  std::vector<const PreparedVolume*> refs;
  for (const auto& v : healthy) refs.push_back(&v);

  Models m;
  m.config = config;
  DatasetOptions opts;
  opts.cap = config.train_cap;
  Rng sample_rng = root.derive(kHealthySample);
  const auto train_set = build_dataset(refs, Split::healthy_train, config.preset, sample_rng, opts);
  say(log, "healthy training pairs: " + std::to_string(train_set.pairs.size()));

  Rng init_rng = root.derive(kInit);
  m.dcae = build_model(config.preset, init_rng, config.model);
  Rng train_rng = root.derive(kTrain);
  train_dcae(m.dcae, train_set, config.train, train_rng);
  for (const auto& e : m.dcae.log)
    say(log, "dcae epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss));
  Rng fusion_rng = root.derive(kFusion);
  train_fusion(m.dcae, train_set, config.train, fusion_rng);
  for (const auto& e : m.dcae.fusion_log)
    say(log, "fusion epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss));
  say(log, "autoencoders trained (" + elapsed(start) + ")");

  m.pca_fixed = fit_pca_baseline(train_set, PcaMode::fixed_k, config.preset);
  m.pca_var = fit_pca_baseline(train_set, PcaMode::variance_frac, config.preset);
  for (auto* p : {&m.pca_fixed, &m.pca_var}) {
    round_to_float(p->scale1);
    round_to_float(p->scale2);
  }
  say(log, "pca baselines: " + std::to_string(m.pca_fixed.dim()) + " and " +
               std::to_string(m.pca_var.dim()) + " dims");

  // One-class SVMs on a healthy subset, anchored at the embedding of an all-zero patch.
  Rng svm_rng = root.derive(kSvmSample);
  DatasetOptions svm_opts;
  svm_opts.cap = config.svm_cap;
  const auto svm_set = build_dataset(refs, Split::healthy_train, config.preset, svm_rng, svm_opts);
  const PatchPair zero = zero_pair(config.preset);
  for (Method method : kMethods) {
    const auto embedder = m.embedder(method);
    OcSvmOptions so;
    so.nu = config.nu;
    so.tol = config.svm_tol;
    so.max_iter = config.svm_max_iter;
    so.anchor = embedder({zero}).row(0).transpose();
    auto& svm = m.svm[static_cast<std::size_t>(method)];
    svm = fit_ocsvm(embedder(svm_set.pairs), so);
    round_to_float(svm);
    for (const auto& w : svm.warnings) say(log, std::string(to_string(method)) + " ocsvm: " + w);
    say(log, std::string(to_string(method)) + " ocsvm fitted (" + std::to_string(svm.iterations) +
                 " iterations, " + elapsed(start) + ")");
  }
  return m;
}

void fit_clusters(Models& models, const std::vector<PreparedVolume>& anomalous, const Logger& log) {
  const auto& cfg = models.config;
  const Rng root(cfg.seed);
  std::vector<const PreparedVolume*> refs;
  for (const auto& v : anomalous) refs.push_back(&v);
  // Embed every in-retina superpixel, keep the flagged ones, then subsample.
  Rng unused(0);  // no cap: every superpixel is kept
  const auto all = build_dataset(refs, Split::anomaly_train, cfg.preset, unused, {});
  const Matrix z = extract_features(models.dcae, all.pairs);
  const auto scores = score_rows(models.ocsvm(Method::dcae), z);
  std::vector<Eigen::Index> flagged;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i].anomaly) flagged.push_back(static_cast<Eigen::Index>(i));
  say(log, "anomalous superpixels: " + std::to_string(flagged.size()) + " of " +
               std::to_string(scores.size()));
  Rng sample_rng = root.derive(kClusterSample);
  if (flagged.size() > cfg.cluster_cap) {
    for (std::size_t i = 0; i < cfg.cluster_cap; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(sample_rng.below(flagged.size() - i));
      std::swap(flagged[i], flagged[j]);
    }
    flagged.resize(cfg.cluster_cap);
    std::sort(flagged.begin(), flagged.end());
  }
  if (flagged.size() <= cfg.cluster.k_max)
    throw FittingError("clustering needs more than " + std::to_string(cfg.cluster.k_max) +
                       " anomalous superpixels, found " + std::to_string(flagged.size()));
  Matrix x(static_cast<Eigen::Index>(flagged.size()), z.cols());
  for (std::size_t i = 0; i < flagged.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = z.row(flagged[i]);
  Rng cluster_rng = root.derive(kCluster);
  auto model = select_k(x, cluster_rng, cfg.cluster);
  round_to_float(model.centroids);
  for (auto& entry : model.db_trace) round_to_float(entry.second);
  say(log, "selected k = " + std::to_string(model.k));
  models.cluster = std::move(model);
}

Segmentation segment(const Models& models, Method method, const PreparedVolume& volume) {
  Matrix features;
  const auto inner = models.embedder(method);
  const Embedder caching = [&](const std::vector<PatchPair>& pairs) {
    features = inner(pairs);
    return features;
  };
  Segmentation out;
  out.map = segment_volume(models.ocsvm(method), caching, volume, models.config.preset);
  out.cluster.resize(out.map.superpixels.size());
  if (method == Method::dcae && models.cluster)
    for (std::size_t i = 0; i < out.map.superpixels.size(); ++i)
      if (out.map.superpixels[i].anomaly)
        out.cluster[i] = assign(*models.cluster, features.row(static_cast<Eigen::Index>(i)).transpose());
  return out;
}

std::vector<std::uint8_t> flattened_retina_mask(const GroundTruth& truth, const PreparedVolume& prepared) {
  std::vector<std::uint8_t> band(truth.labels.size(), 0);
  for (std::size_t s = 0; s < truth.slices; ++s)
    for (std::size_t c = 0; c < truth.width; ++c)
      for (int r = std::max(0, truth.top.at(s, c));
           r <= std::min(static_cast<int>(truth.height) - 1, truth.bottom.at(s, c)); ++r)
        band[(s * truth.height + static_cast<std::size_t>(r)) * truth.width + c] = 1;
  return shift_columns(band, truth.width, truth.height, truth.slices, prepared.shifts, std::uint8_t{0});
}

Evaluation evaluate(const Models& models, const std::vector<PreparedVolume>& test,
                    const std::vector<GroundTruth>& truth, const Logger& log) {
  if (test.size() != truth.size()) throw UsageError("evaluate: one ground truth per test volume required");
  const auto& cfg = models.config;
  const Rng root(cfg.seed);
  std::vector<LabeledVolume> labeled;
  std::vector<std::vector<std::uint8_t>> gt_masks, rois;
  for (std::size_t v = 0; v < test.size(); ++v) {
    labeled.push_back({&test[v], flatten_labels(truth[v], test[v])});
    std::vector<std::uint8_t> gt(labeled.back().labels.size());
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = labeled.back().labels[i] != AnomalyType::none;
    gt_masks.push_back(std::move(gt));
    rois.push_back(flattened_retina_mask(truth[v], test[v]));
  }
  Evaluation ev;
  for (Method method : kMethods) {
    SegRow row;
    row.method = to_string(method);
    for (std::size_t v = 0; v < test.size(); ++v) {
      const auto seg = segment(models, method, test[v]);
      row.per_volume.push_back(seg_scores(seg.map.mask, gt_masks[v], rois[v]));
    }
    row.pooled = pooled(row.per_volume);
    say(log, row.method + " dice " + std::to_string(row.pooled.dice));
    ev.seg.push_back(std::move(row));

    // Same sample and folds for every method: only the embedding differs.
    Rng sample_rng = root.derive(kProbeSample), fold_rng = root.derive(kProbeFolds);
    const auto set = build_classification_set(labeled, models.embedder(method), cfg.preset,
                                              cfg.per_class, sample_rng);
    CvRow cv{to_string(method), grouped_cv(set.features, set.labels, set.patients, fold_rng, cfg.cv)};
    say(log, cv.method + " grouped-cv accuracy " +
                 format_accuracy(cv.report.mean_accuracy, cv.report.std_accuracy));
    ev.cv.push_back(std::move(cv));
  }
  return ev;
}

}  // namespace anomkit
