#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "anomkit/ocsvm.hpp"
#include "anomkit/pca.hpp"
#include "anomkit/preprocess.hpp"
#include "anomkit/rng.hpp"

namespace anomkit {

// ---------------------------------------------------------------- segmentation scores

struct SegScores {
  double dice = 0.0, precision = 0.0, recall = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Scores from counts. Degenerate rules: both masks empty -> (1, 1, 1); empty prediction
/// with nonempty truth -> dice = recall = 0, precision = 1; nonempty prediction with
/// empty truth -> dice = precision = 0, recall = 1.
SegScores seg_scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// Voxel-wise counts inside `roi` (nonzero = set). Throws UsageError on size mismatch.
SegScores seg_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                     std::span<const std::uint8_t> roi);

/// Scores of the summed counts (voxels pooled over all inputs).
SegScores pooled(const std::vector<SegScores>& parts);

// ---------------------------------------------------------------- L2-SVM

struct L2SvmOptions {
  double C = 1.0;
  double tol = 1e-6;          // stop when |grad| <= tol * max(1, |grad at start|)
  std::size_t max_iter = 5000;

  void validate() const;
};

/// One-vs-rest linear SVMs on standardized features with an appended unit bias column:
///   J(w) = 1/2 |w|^2 + C * mean_i max(0, 1 - y_i w.x_i)^2.
struct L2Svm {
  std::size_t classes = 0;
  Vector mean, scale;         // feature standardization from the training set
  Matrix w;                   // classes x (d + 1), last column is the bias
  std::vector<std::vector<double>> objective_trace;  // per class, one entry per iteration
  bool converged = true;

  Vector decision(const Eigen::Ref<const Vector>& x) const;
  /// argmax decision value; ties go to the lowest class index.
  std::size_t predict(const Eigen::Ref<const Vector>& x) const;
};

/// Labels are class indices 0..K-1. Throws FittingError when fewer than two classes occur.
L2Svm train_l2svm(const Matrix& features, const std::vector<std::size_t>& labels,
                  const L2SvmOptions& options = {});

// ---------------------------------------------------------------- grouped cross-validation

struct FoldResult {
  std::vector<std::uint32_t> patients;  // held-out patients, ascending
  std::vector<double> class_accuracy;   // NaN when a class is absent from the fold
  double accuracy = 0.0;
  std::size_t tested = 0;
};

struct CvReport {
  std::vector<FoldResult> folds;
  std::vector<double> mean_class_accuracy;  // over folds where the class occurs
  double mean_accuracy = 0.0, std_accuracy = 0.0;  // sample std over folds
};

struct CvOptions {
  std::size_t folds = 5;
  L2SvmOptions svm;
};

/// Patients are shuffled with `rng` and dealt round-robin into folds; each fold is
/// tested with an SVM trained on the others. Throws InputError with fewer patients than folds.
CvReport grouped_cv(const Matrix& features, const std::vector<std::size_t>& labels,
                    const std::vector<std::uint32_t>& patients, Rng& rng,
                    const CvOptions& options = {});

/// "86.6 (± 1.6)" with both values in percent.
std::string format_accuracy(double mean, double sd);

// ---------------------------------------------------------------- classification set

/// Classes of the probe: the phantom's cyst and fluid types stand in for the two fluid
/// pathologies, and the third class is the remaining (anomaly-free majority) retina.
enum class ProbeClass : std::size_t { cyst = 0, fluid = 1, retina = 2 };
inline constexpr std::size_t kProbeClasses = 3;
const char* to_string(ProbeClass c);

struct LabeledVolume {
  const PreparedVolume* prepared = nullptr;
  std::vector<AnomalyType> labels;  // ground truth in the flattened frame
};

struct ClassificationSet {
  Matrix features;
  std::vector<std::size_t> labels;
  std::vector<std::uint32_t> patients;  // index into the input volume list
  std::vector<PatchSource> sources;
};

/// Majority ground-truth type over the superpixel's pixels (ties -> lowest type value).
AnomalyType majority_type(const Superpixel& sp, std::span<const AnomalyType> labels,
                          std::size_t slice, std::size_t plane);

/// Samples `per_class` in-retina superpixels per probe class (uniformly, seeded) and
/// embeds their patch pairs. Throws InputError naming a class that has too few candidates.
ClassificationSet build_classification_set(const std::vector<LabeledVolume>& volumes,
                                           const Embedder& embedder, ModelPreset preset,
                                           std::size_t per_class, Rng& rng);

// ---------------------------------------------------------------- reports

struct SegRow {
  std::string method;
  SegScores pooled;
  std::vector<SegScores> per_volume;
};

struct CvRow {
  std::string method;
  CvReport report;
};

/// `metric,value` CSV: one line per method and metric.
std::string seg_csv(const std::vector<SegRow>& rows);
/// Per-volume table: method,volume,dice,precision,recall,tp,fp,fn.
std::string seg_volume_csv(const std::vector<SegRow>& rows);
/// `metric,value` CSV with mean/std accuracy and per-class means per method.
std::string cv_csv(const std::vector<CvRow>& rows);
/// Per-fold table: method,fold,patients,accuracy,<class accuracies>.
std::string cv_fold_csv(const std::vector<CvRow>& rows);
/// Human-readable tables of both evaluations.
std::string text_summary(const std::vector<SegRow>& seg, const std::vector<CvRow>& cv);

}  // namespace anomkit
