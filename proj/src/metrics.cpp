#include "anomkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "anomkit/errors.hpp"
#include "anomkit/parallel.hpp"

namespace anomkit {

namespace {

std::string fmt(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- segmentation scores

SegScores seg_scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  SegScores s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  const bool pred_empty = tp + fp == 0, gt_empty = tp + fn == 0;
  if (pred_empty && gt_empty) {
    s.dice = s.precision = s.recall = 1.0;
  } else if (pred_empty) {
    s.dice = s.recall = 0.0;
    s.precision = 1.0;
  } else if (gt_empty) {
    s.dice = s.precision = 0.0;
    s.recall = 1.0;
  } else {
    const auto t = static_cast<double>(tp);
    s.dice = 2.0 * t / (2.0 * t + static_cast<double>(fp + fn));
    s.precision = t / static_cast<double>(tp + fp);
    s.recall = t / static_cast<double>(tp + fn);
  }
  return s;
}

SegScores seg_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                     std::span<const std::uint8_t> roi) {
  if (pred.size() != gt.size() || pred.size() != roi.size())
    throw UsageError("seg_scores: prediction, ground truth and roi masks differ in size (" +
                     std::to_string(pred.size()) + ", " + std::to_string(gt.size()) + ", " +
                     std::to_string(roi.size()) + ")");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!roi[i]) continue;
    const bool p = pred[i] != 0, g = gt[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  return seg_scores_from_counts(tp, fp, fn);
}

SegScores pooled(const std::vector<SegScores>& parts) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& p : parts) {
    tp += p.tp;
    fp += p.fp;
    fn += p.fn;
  }
  return seg_scores_from_counts(tp, fp, fn);
}

// ---------------------------------------------------------------- L2-SVM

void L2SvmOptions::validate() const {
  if (!(C > 0.0)) throw ParameterError("L2-SVM C must be positive");
  if (!(tol > 0.0)) throw ParameterError("L2-SVM tol must be positive");
  if (max_iter == 0) throw ParameterError("L2-SVM max_iter must be positive");
}

Vector L2Svm::decision(const Eigen::Ref<const Vector>& x) const {
  const auto d = mean.size();
  if (x.size() != d) throw UsageError("L2-SVM: feature dimension mismatch");
  const Vector z = (x - mean).cwiseQuotient(scale);
  return w.leftCols(d) * z + w.col(d);
}

std::size_t L2Svm::predict(const Eigen::Ref<const Vector>& x) const {
  const Vector v = decision(x);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < v.size(); ++c)
    if (v(c) > v(best)) best = c;
  return static_cast<std::size_t>(best);
}

namespace {

struct BinaryFit {
  Vector w;
  std::vector<double> trace;
  bool converged = false;
};

// Gradient descent with Armijo backtracking on the smooth squared-hinge objective.
BinaryFit fit_binary(const Matrix& xa, const Vector& y, const L2SvmOptions& opt) {
  const auto n = static_cast<double>(xa.rows());
  const double coef = opt.C / n;
  auto objective = [&](const Vector& w, Vector* grad) {
    const Vector margin = (1.0 - (y.array() * (xa * w).array())).max(0.0).matrix();
    if (grad) *grad = w - 2.0 * coef * (xa.transpose() * y.cwiseProduct(margin));
    return 0.5 * w.squaredNorm() + coef * margin.squaredNorm();
  };
  BinaryFit fit;
  fit.w = Vector::Zero(xa.cols());
  Vector g;
  double j = objective(fit.w, &g);
  const double stop = opt.tol * std::max(1.0, g.norm());
  double step = 1.0;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    const double gg = g.squaredNorm();
    if (std::sqrt(gg) <= stop) {
      fit.converged = true;
      break;
    }
    step *= 2.0;
    Vector candidate;
    double jc = 0.0;
    for (;;) {
      candidate = fit.w - step * g;
      jc = objective(candidate, nullptr);
      if (jc <= j - 1e-4 * step * gg || step < 1e-20) break;
      step *= 0.5;
    }
    if (!(jc < j)) {  // no further decrease representable
      fit.converged = true;
      break;
    }
    fit.w = candidate;
    j = objective(fit.w, &g);
    fit.trace.push_back(j);
  }
  if (!fit.converged && std::sqrt(g.squaredNorm()) <= stop) fit.converged = true;
  return fit;
}

}  // namespace

L2Svm train_l2svm(const Matrix& features, const std::vector<std::size_t>& labels,
                  const L2SvmOptions& options) {
  options.validate();
  if (labels.size() != static_cast<std::size_t>(features.rows()))
    throw UsageError("train_l2svm: one label per feature row required");
  if (labels.empty()) throw FittingError("L2-SVM needs training samples");
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) ++counts[l];
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
    throw FittingError("L2-SVM needs at least two classes in the training data");

  const auto n = features.rows(), d = features.cols();
  L2Svm m;
  m.classes = k;
  m.mean = features.colwise().mean();
  m.scale = Vector::Ones(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double sd = std::sqrt((features.col(c).array() - m.mean(c)).square().mean());
    if (sd > 1e-12) m.scale(c) = sd;
  }
  Matrix xa(n, d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    xa.row(i).head(d) = (features.row(i).transpose() - m.mean).cwiseQuotient(m.scale).transpose();
    xa(i, d) = 1.0;
  }
  m.w = Matrix::Zero(static_cast<Eigen::Index>(k), d + 1);
  m.objective_trace.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
    auto fit = fit_binary(xa, y, options);
    m.w.row(static_cast<Eigen::Index>(c)) = fit.w.transpose();
    m.objective_trace[c] = std::move(fit.trace);
    m.converged = m.converged && fit.converged;
  }
  return m;
}

// ---------------------------------------------------------------- grouped cross-validation

CvReport grouped_cv(const Matrix& features, const std::vector<std::size_t>& labels,
                    const std::vector<std::uint32_t>& patients, Rng& rng,
                    const CvOptions& options) {
  options.svm.validate();
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n || patients.size() != n)
    throw UsageError("grouped_cv: labels and patients must match the feature rows");
  if (options.folds < 2) throw ParameterError("grouped_cv needs at least 2 folds");
  std::vector<std::uint32_t> unique(patients);
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (unique.size() < options.folds)
    throw InputError("grouped_cv: " + std::to_string(unique.size()) + " patients for " +
                     std::to_string(options.folds) + " folds");
  rng.shuffle(unique);
  CvReport report;
  report.folds.resize(options.folds);
  for (std::size_t i = 0; i < unique.size(); ++i) report.folds[i % options.folds].patients.push_back(unique[i]);
  for (auto& f : report.folds) std::sort(f.patients.begin(), f.patients.end());
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;

  parallel_for(options.folds, [&](std::size_t f) {
    auto& fold = report.folds[f];
    auto held_out = [&](std::uint32_t p) {
      return std::binary_search(fold.patients.begin(), fold.patients.end(), p);
    };
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (held_out(patients[i]) ? test : train).push_back(static_cast<Eigen::Index>(i));
    Matrix xtr(static_cast<Eigen::Index>(train.size()), features.cols());
    std::vector<std::size_t> ytr(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = features.row(train[i]);
      ytr[i] = labels[static_cast<std::size_t>(train[i])];
    }
    const auto svm = train_l2svm(xtr, ytr, options.svm);
    std::vector<std::size_t> correct(k, 0), total(k, 0);
    for (auto i : test) {
      const auto truth = labels[static_cast<std::size_t>(i)];
      ++total[truth];
      correct[truth] += svm.predict(features.row(i).transpose()) == truth;
    }
    fold.tested = test.size();
    fold.class_accuracy.assign(k, std::numeric_limits<double>::quiet_NaN());
    std::size_t hits = 0;
    for (std::size_t c = 0; c < k; ++c) {
      hits += correct[c];
      if (total[c]) fold.class_accuracy[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    }
    fold.accuracy = test.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(test.size());
  });

  report.mean_class_accuracy.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double sum = 0.0;
    std::size_t m = 0;
    for (const auto& f : report.folds)
      if (!std::isnan(f.class_accuracy[c])) {
        sum += f.class_accuracy[c];
        ++m;
      }
    report.mean_class_accuracy[c] = m ? sum / static_cast<double>(m) : std::numeric_limits<double>::quiet_NaN();
  }
  double sum = 0.0;
  for (const auto& f : report.folds) sum += f.accuracy;
  report.mean_accuracy = sum / static_cast<double>(report.folds.size());
  double ss = 0.0;
  for (const auto& f : report.folds) ss += (f.accuracy - report.mean_accuracy) * (f.accuracy - report.mean_accuracy);
  report.std_accuracy = std::sqrt(ss / static_cast<double>(report.folds.size() - 1));
  return report;
}

std::string format_accuracy(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f (\xC2\xB1 %.1f)", 100.0 * mean, 100.0 * sd);
  return buf;
}

// ---------------------------------------------------------------- classification set

const char* to_string(ProbeClass c) {
  switch (c) {
    case ProbeClass::cyst: return "cyst";
    case ProbeClass::fluid: return "fluid";
    case ProbeClass::retina: return "retina";
  }
  return "?";
}

AnomalyType majority_type(const Superpixel& sp, std::span<const AnomalyType> labels,
                          std::size_t slice, std::size_t plane) {
  std::array<std::size_t, 4> counts{};
  for (auto p : sp.pixels) ++counts[static_cast<std::size_t>(labels[slice * plane + p])];
  std::size_t best = 0;
  for (std::size_t t = 1; t < counts.size(); ++t)
    if (counts[t] > counts[best]) best = t;
  return static_cast<AnomalyType>(best);
}

ClassificationSet build_classification_set(const std::vector<LabeledVolume>& volumes,
                                           const Embedder& embedder, ModelPreset preset,
                                           std::size_t per_class, Rng& rng) {
  if (per_class == 0) throw ParameterError("per-class sample count must be positive");
  std::array<std::vector<PatchSource>, kProbeClasses> candidates;
  for (std::size_t v = 0; v < volumes.size(); ++v) {
    const auto& pv = *volumes[v].prepared;
    const std::size_t plane = pv.image.width * pv.image.height;
    if (volumes[v].labels.size() != pv.image.voxels.size())
      throw UsageError("classification set: ground truth does not match volume " + std::to_string(v));
    for (std::size_t s = 0; s < pv.superpixels.size(); ++s)
      for (const auto& sp : pv.superpixels[s]) {
        if (!sp.in_retina) continue;
        const auto t = majority_type(sp, volumes[v].labels, s, plane);
        const PatchSource src{static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(s), sp.id};
        if (t == AnomalyType::cyst_blob) candidates[0].push_back(src);
        else if (t == AnomalyType::subsurface_fluid) candidates[1].push_back(src);
        else if (t == AnomalyType::none) candidates[2].push_back(src);
      }
  }
  ClassificationSet set;
  std::vector<PatchPair> pairs;
  for (std::size_t c = 0; c < kProbeClasses; ++c) {
    auto& cand = candidates[c];
    if (cand.size() < per_class)
      throw InputError(std::string("classification set: class '") + to_string(static_cast<ProbeClass>(c)) +
                       "' has " + std::to_string(cand.size()) + " superpixels, " +
                       std::to_string(per_class) + " requested");
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(cand.size() - i));
      std::swap(cand[i], cand[j]);
    }
    cand.resize(per_class);
    std::sort(cand.begin(), cand.end(), [](const PatchSource& a, const PatchSource& b) {
      return std::tie(a.volume, a.slice, a.superpixel) < std::tie(b.volume, b.slice, b.superpixel);
    });
    for (const auto& src : cand) {
      const auto& pv = *volumes[src.volume].prepared;
      const auto& sp = pv.superpixels[src.slice][src.superpixel];
      const auto [r, col] = superpixel_center(sp, pv.image.height, pv.image.width);
      PatchPair p = extract_pair(pv.image, src.slice, r, col, preset);
      p.source = src;
      p.patient = src.volume;
      pairs.push_back(std::move(p));
      set.labels.push_back(c);
      set.patients.push_back(src.volume);
      set.sources.push_back(src);
    }
  }
  set.features = embedder(pairs);
  return set;
}

// ---------------------------------------------------------------- reports

std::string seg_csv(const std::vector<SegRow>& rows) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const auto& r : rows) {
    out << r.method << "_dice," << fmt(r.pooled.dice) << '\n';
    out << r.method << "_precision," << fmt(r.pooled.precision) << '\n';
    out << r.method << "_recall," << fmt(r.pooled.recall) << '\n';
  }
  return out.str();
}

std::string seg_volume_csv(const std::vector<SegRow>& rows) {
  std::ostringstream out;
  out << "method,volume,dice,precision,recall,tp,fp,fn\n";
  for (const auto& r : rows)
    for (std::size_t v = 0; v < r.per_volume.size(); ++v) {
      const auto& s = r.per_volume[v];
      out << r.method << ',' << v << ',' << fmt(s.dice) << ',' << fmt(s.precision) << ','
          << fmt(s.recall) << ',' << s.tp << ',' << s.fp << ',' << s.fn << '\n';
    }
  return out.str();
}

std::string cv_csv(const std::vector<CvRow>& rows) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const auto& r : rows) {
    out << r.method << "_accuracy_mean," << fmt(r.report.mean_accuracy) << '\n';
    out << r.method << "_accuracy_std," << fmt(r.report.std_accuracy) << '\n';
    for (std::size_t c = 0; c < r.report.mean_class_accuracy.size(); ++c)
      out << r.method << "_accuracy_" << to_string(static_cast<ProbeClass>(c)) << ','
          << fmt(r.report.mean_class_accuracy[c]) << '\n';
  }
  return out.str();
}

std::string cv_fold_csv(const std::vector<CvRow>& rows) {
  std::ostringstream out;
  out << "method,fold,patients,accuracy";
  for (std::size_t c = 0; c < kProbeClasses; ++c) out << ",accuracy_" << to_string(static_cast<ProbeClass>(c));
  out << '\n';
  for (const auto& r : rows)
    for (std::size_t f = 0; f < r.report.folds.size(); ++f) {
      const auto& fold = r.report.folds[f];
      out << r.method << ',' << f << ',';
      for (std::size_t i = 0; i < fold.patients.size(); ++i) out << (i ? ";" : "") << fold.patients[i];
      out << ',' << fmt(fold.accuracy);
      for (double a : fold.class_accuracy) out << ',' << fmt(a);
      out << '\n';
    }
  return out.str();
}

std::string text_summary(const std::vector<SegRow>& seg, const std::vector<CvRow>& cv) {
  std::ostringstream out;
  char line[160];
  out << "Anomaly segmentation (voxels pooled over the test split)\n";
  std::snprintf(line, sizeof line, "  %-12s %8s %10s %8s\n", "method", "Dice", "Precision", "Recall");
  out << line;
  for (const auto& r : seg) {
    std::snprintf(line, sizeof line, "  %-12s %8.3f %10.3f %8.3f\n", r.method.c_str(), r.pooled.dice,
                  r.pooled.precision, r.pooled.recall);
    out << line;
  }
  out << "\nGrouped cross-validation accuracy of linear L2-SVMs, mean (± std) over folds\n";
  std::snprintf(line, sizeof line, "  %-12s %-16s %8s %8s %8s\n", "method", "overall", "cyst", "fluid",
                "retina");
  out << line;
  for (const auto& r : cv) {
    const auto& m = r.report.mean_class_accuracy;
    auto pct = [&](std::size_t c) { return c < m.size() ? 100.0 * m[c] : std::nan(""); };
    std::snprintf(line, sizeof line, "  %-12s %-17s %8.1f %8.1f %8.1f\n", r.method.c_str(),
                  format_accuracy(r.report.mean_accuracy, r.report.std_accuracy).c_str(), pct(0), pct(1),
                  pct(2));
    out << line;
  }
  return out.str();
}

}  // namespace anomkit
