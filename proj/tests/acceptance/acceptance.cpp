// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "anomkit/bundle.hpp"
#include "anomkit/cluster.hpp"
#include "anomkit/metrics.hpp"
#include "anomkit/network.hpp"
#include "anomkit/ocsvm.hpp"
#include "anomkit/pipeline.hpp"
#include "cluster_oracle.hpp"
#include "gradcheck.hpp"
#include "ocsvm_oracle.hpp"

using namespace anomkit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

template <class T>
BasicTensor<T> random_tensor(Shape shape, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t;
}

// ---------------------------------------------------------------- 1. numeric core

void numcore() {
  const auto t0 = Clock::now();
  double worst_grad = 0.0;
  std::size_t checked = 0;
  auto add = [&](const gradcheck::Result& r) {
    worst_grad = std::max(worst_grad, r.worst);
    checked += r.checked;
  };
  add(gradcheck::check({6}, {LayerSpec::Dense(4)}, 41));
  add(gradcheck::check({8, 8, 2}, {LayerSpec::Conv(3, 3), LayerSpec::Elu(), LayerSpec::MaxPool(2)}, 43));
  add(gradcheck::check({5, 5, 1}, {LayerSpec::Conv(2, 2), LayerSpec::Dropout(0.4), LayerSpec::Dense(3)},
                       47, true));
  add(gradcheck::check({8, 8, 1}, gradcheck::tiny_autoencoder(), 53));
  add(gradcheck::check({6, 6, 2}, {LayerSpec::Deconv(3, 2), LayerSpec::Elu(), LayerSpec::Dense(5)}, 59));

  double worst_adjoint = 0.0;
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng.below(4), C = 1 + rng.below(3), O = 1 + rng.below(3);
    const std::size_t H = k + rng.below(5), W = k + rng.below(5);
    auto x = random_tensor<double>({H, W, C}, rng);
    auto K = random_tensor<double>({k, k, C, O}, rng);
    auto y = random_tensor<double>({H - k + 1, W - k + 1, O}, rng);
    const double lhs = dot(conv2d_valid(x, K, BasicTensor<double>({O})), y);
    const double rhs = dot(x, deconv2d(y, K));
    worst_adjoint = std::max(worst_adjoint, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  {
    auto x = random_tensor<float>({12, 12, 4}, rng);
    auto K = random_tensor<float>({5, 5, 4, 6}, rng);
    auto y = random_tensor<float>({8, 8, 6}, rng);
    const double lhs = dot(conv2d_valid(x, K, Tensor({6})), y);
    const double rhs = dot(x, deconv2d(y, K));
    worst_adjoint = std::max(worst_adjoint, std::abs(lhs - rhs) / std::abs(lhs));
  }
  const double secs = seconds_since(t0);
  report(1, worst_grad <= 1e-4 && worst_adjoint <= 1e-5 && secs < 60.0,
         fmt("max gradient rel. err %.2e over %zu coords (<= 1e-4), max adjoint rel. err %.2e "
             "(<= 1e-5), %.1f s (< 60 s)",
             worst_grad, checked, worst_adjoint, secs));
}

// ---------------------------------------------------------------- 2. one-class SVM

Matrix gaussian(Eigen::Index n, Eigen::Index d, double offset, Rng& rng) {
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = offset + rng.normal();
  return x;
}

void ocsvm() {
  Rng rng(2024);
  const int instances = 120;
  double worst_obj = 0.0;
  for (int trial = 0; trial < instances; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(7));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(3));
    const double nu = rng.uniform(0.1, 1.0);
    const Matrix x = gaussian(n, d, rng.uniform(-1.0, 2.0), rng);
    const auto sol = solve_ocsvm_dual(x, nu, 1e-12, 100000);
    worst_obj = std::max(worst_obj, std::abs(sol.objective - oracle::ocsvm_dual(x, nu).objective));
  }
  Rng grng(7);
  const Matrix x = gaussian(100, 2, 3.0, grng);
  const double slack = 2.0 / std::sqrt(100.0);
  bool nu_ok = true;
  std::string nu_detail;
  for (double nu : {0.05, 0.1, 0.5}) {
    const auto sol = solve_ocsvm_dual(x, nu, 1e-10, 100000);
    const Vector f = x * sol.w - Vector::Constant(100, sol.rho);
    const double outliers = (f.array() < -1e-9).cast<double>().mean();
    const double svs = (sol.alpha.array() > 0.0).cast<double>().mean();
    nu_ok = nu_ok && outliers <= nu + slack && svs >= nu - slack;
    nu_detail += fmt(" nu=%.2f: outliers %.2f, SVs %.2f;", nu, outliers, svs);
  }
  report(2, worst_obj <= 1e-8 && nu_ok,
         fmt("%d oracle instances, max objective diff %.2e (<= 1e-8);", instances, worst_obj) + nu_detail);
}

// ---------------------------------------------------------------- 3. clustering

Matrix axis_centers(Eigen::Index k, Eigen::Index d) {
  Matrix c = Matrix::Zero(k, d);
  for (Eigen::Index i = 0; i < k; ++i) c(i, i) = 1.0;
  return c;
}

void clustering() {
  Rng rng(11);
  double worst_db = 0.0;
  int compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(6 + rng.below(45));
    const auto d = static_cast<Eigen::Index>(2 + rng.below(6));
    const std::size_t k = 2 + rng.below(4);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Rng km(trial);
    const auto res = spherical_kmeans(x, k, km, 2);
    std::vector<std::size_t> counts(k, 0);
    for (auto a : res.assignment) ++counts[a];
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) continue;
    worst_db = std::max(worst_db, std::abs(davies_bouldin(x, res.assignment, res.centroids) -
                                           oracle::davies_bouldin(x, res.assignment, res.centroids)));
    ++compared;
  }

  Rng crng(13);
  const Matrix cones = oracle::cones(axis_centers(3, 8), 100, 0.08, crng);
  Rng sel(1);
  const auto model = select_k(cones, sel);

  Rng mrng(12);
  Matrix x(300, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = mrng.normal();
  bool monotone = true;
  for (std::size_t k : {2u, 5u, 12u}) {
    Rng km(k);
    const auto res = spherical_kmeans(x, k, km, 3);
    for (std::size_t t = 1; t < res.objective_trace.size(); ++t)
      monotone = monotone && res.objective_trace[t] >= res.objective_trace[t - 1] - 1e-9;
  }
  report(3, compared > 0 && worst_db <= 1e-9 && model.k == 3 && monotone,
         fmt("DB max diff %.2e over %d clusterings (<= 1e-9); select_k on 3 cones -> k=%zu; "
             "objective monotone: %s",
             worst_db, compared, model.k, monotone ? "yes" : "no"));
}

// ---------------------------------------------------------------- 4. metrics

void metric_identities() {
  std::size_t grids = 0, bad = 0;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  for (unsigned p = 0; p < 16; ++p)
    for (unsigned g = 0; g < 16; ++g)
      for (unsigned r = 0; r < 16; ++r) {
        std::vector<std::uint8_t> pred(4), gt(4), roi(4);
        for (int i = 0; i < 4; ++i) {
          pred[i] = (p >> i) & 1;
          gt[i] = (g >> i) & 1;
          roi[i] = (r >> i) & 1;
        }
        const auto s = seg_scores(pred, gt, roi);
        std::size_t tp = 0, fp = 0, fn = 0;
        for (int i = 0; i < 4; ++i)
          if (roi[i]) {
            tp += pred[i] && gt[i];
            fp += pred[i] && !gt[i];
            fn += !pred[i] && gt[i];
          }
        bool ok = s.tp == tp && s.fp == fp && s.fn == fn && s.dice >= 0.0 && s.dice <= 1.0;
        const bool pe = tp + fp == 0, ge = tp + fn == 0;
        if (pe && ge) {
          ok = ok && s.dice == 1.0 && s.precision == 1.0 && s.recall == 1.0;
        } else if (pe) {
          ok = ok && s.dice == 0.0 && s.precision == 1.0 && s.recall == 0.0;
        } else if (ge) {
          ok = ok && s.dice == 0.0 && s.precision == 0.0 && s.recall == 1.0;
        } else {
          ok = ok && near(s.dice, 2.0 * tp / (2.0 * tp + fp + fn)) &&
               near(s.precision, double(tp) / (tp + fp)) && near(s.recall, double(tp) / (tp + fn));
          const double pr = s.precision + s.recall;
          ok = ok && (pr > 0 ? near(s.dice, 2 * s.precision * s.recall / pr) : s.dice == 0.0);
        }
        ++grids;
        bad += !ok;
      }
  report(4, bad == 0, fmt("%zu (pred, truth, roi) 2x2 mask triples, %zu violations", grids, bad));
}

// ---------------------------------------------------------------- 5-7. phantom benchmark

struct Run {
  Models models;
  Evaluation eval;
  std::string csv;  // every report table plus the DB trace, concatenated
  double seconds = 0.0;
};

std::string db_trace_text(const Models& m) {
  std::string out = "k,db\n";
  if (m.cluster)
    for (const auto& [k, db] : m.cluster->db_trace) out += fmt("%zu,%.9g\n", k, db);
  return out;
}

Run run_pipeline(const Benchmark& bench) {
  const auto t0 = Clock::now();
  const auto cfg = default_config(ModelPreset::desk);
  auto prep = [&](const std::vector<Phantom>& split) {
    std::vector<const Volume*> v;
    for (const auto& p : split) v.push_back(&p.volume);
    return prepare_volumes(v, cfg.preprocess);
  };
  Run run;
  run.models = train_models(prep(bench.healthy), cfg);
  fit_clusters(run.models, prep(bench.anomalous));
  std::vector<GroundTruth> truth;
  for (const auto& p : bench.test) truth.push_back(p.truth);
  run.eval = evaluate(run.models, prep(bench.test), truth);
  run.seconds = seconds_since(t0);
  run.csv = seg_csv(run.eval.seg) + seg_volume_csv(run.eval.seg) + cv_csv(run.eval.cv) +
            cv_fold_csv(run.eval.cv) + db_trace_text(run.models);
  return run;
}

bool same_segmentation(const Segmentation& a, const Segmentation& b) {
  if (a.map.mask != b.map.mask || a.map.labeled != b.map.labeled || a.cluster != b.cluster ||
      a.map.superpixels.size() != b.map.superpixels.size())
    return false;
  for (std::size_t i = 0; i < a.map.superpixels.size(); ++i) {
    const auto &x = a.map.superpixels[i], &y = b.map.superpixels[i];
    if (x.slice != y.slice || x.superpixel != y.superpixel || x.score != y.score ||
        x.anomaly != y.anomaly)
      return false;
  }
  return true;
}

void benchmark() {
  const Benchmark bench = generate_benchmark(42);
  std::printf("running the desk phantom benchmark (seed 42)...\n");
  std::fflush(stdout);
  const Run first = run_pipeline(bench);
  std::printf("%s", text_summary(first.eval.seg, first.eval.cv).c_str());

  const auto& seg = first.eval.seg;
  const auto& cv = first.eval.cv;
  const double dcae = seg[0].pooled.dice, fixed = seg[1].pooled.dice, var = seg[2].pooled.dice;
  const double acc_d = 100 * cv[0].report.mean_accuracy, acc_f = 100 * cv[1].report.mean_accuracy,
               acc_v = 100 * cv[2].report.mean_accuracy;
  const bool a = dcae >= 0.50, b = dcae > fixed && dcae > var,
             c = acc_d >= acc_f + 5.0 && acc_d >= acc_v + 5.0, fast = first.seconds < 900.0;
  report(5, a && b && c && fast,
         fmt("(a) DCAE Dice %.3f >= 0.50: %s; (b) DCAE %.3f > PCA_fixed %.3f and PCA_var %.3f: %s; "
             "(c) accuracy DCAE %.1f vs PCA_fixed %.1f / PCA_var %.1f (need +5): %s; "
             "%.0f s (< 900 s), k = %zu",
             dcae, a ? "yes" : "no", dcae, fixed, var, b ? "yes" : "no", acc_d, acc_f, acc_v,
             c ? "yes" : "no", first.seconds, first.models.cluster ? first.models.cluster->k : 0));

  const Run second = run_pipeline(bench);
  const fs::path tmp = fs::temp_directory_path() / fmt("anomkit_acceptance_%d", static_cast<int>(::getpid()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  save_bundle(tmp / "first", first.models);
  save_bundle(tmp / "second", second.models);
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp / "first")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), tmp / "first");
    const auto other = tmp / "second" / rel;
    if (!fs::exists(other) || sha256_file(e.path()) != sha256_file(other)) ++differing;
  }
  report(6, first.csv == second.csv && differing == 0,
         fmt("report CSVs byte-equal: %s (%zu bytes); bundle files identical: %zu of %zu",
             first.csv == second.csv ? "yes" : "no", first.csv.size(), files - differing, files));

  const Models loaded = load_bundle(tmp / "first");
  const auto probe = prepare_volumes({&bench.test.front().volume}, first.models.config.preprocess);
  bool same = true;
  std::size_t superpixels = 0;
  for (Method m : kMethods) {
    const auto before = segment(first.models, m, probe.front());
    const auto after = segment(loaded, m, probe.front());
    same = same && same_segmentation(before, after);
    superpixels += before.map.superpixels.size();
  }
  fs::remove_all(tmp);
  report(7, same, fmt("probe test volume, 3 methods, %zu superpixels: scores, labels, masks and "
                      "clusters %s after save/load",
                      superpixels, same ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  try {
    numcore();
    ocsvm();
    clustering();
    metric_identities();
    benchmark();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
