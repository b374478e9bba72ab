// anomkit: phantom generation, training, clustering, segmentation and evaluation.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "anomkit/bundle.hpp"
#include "anomkit/config.hpp"
#include "anomkit/dataset_dir.hpp"
#include "anomkit/errors.hpp"
#include "anomkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace anomkit;

namespace {

const auto kStart = std::chrono::steady_clock::now();

void log_line(const std::string& msg) {
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - kStart).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, msg.c_str());
}

// Tags errors with the stage that raised them.
template <typename F>
auto stage(const char* name, F&& fn) {
  try {
    return fn();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw InputError("cannot write " + path.string());
}

std::vector<PreparedVolume> prepare_split(const fs::path& data, const std::string& split,
                                          const PreprocessConfig& cfg, std::vector<GroundTruth>* truth = nullptr) {
  const auto phantoms = stage("load", [&] { return load_split(data, split); });
  std::vector<const Volume*> vols;
  for (const auto& p : phantoms) vols.push_back(&p.volume);
  if (truth)
    for (const auto& p : phantoms) truth->push_back(p.truth);
  auto prepared = stage("preprocess", [&] { return prepare_volumes(vols, cfg); });
  log_line("preprocessed " + std::to_string(prepared.size()) + " " + split + " volumes");
  return prepared;
}

void cmd_gen_phantom(const fs::path& out, std::uint64_t seed, const std::string& preset) {
  const auto p = parse_phantom_preset(preset);
  const auto bench = stage("phantom", [&] { return generate_benchmark(default_benchmark_config(p, seed)); });
  write_benchmark(out, bench, seed, preset);
  log_line("wrote " + std::to_string(bench.healthy.size()) + " healthy, " +
           std::to_string(bench.anomalous.size()) + " anomalous and " + std::to_string(bench.test.size()) +
           " test volumes to " + out.string());
}

void cmd_train(const fs::path& data, const std::string& config_path, const fs::path& bundle,
               std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
  if (seed) cfg.seed = *seed;
  BundleLock lock(bundle);
  const auto healthy = prepare_split(data, "healthy", cfg.preprocess);
  const auto models = stage("train", [&] { return train_models(healthy, cfg, log_line); });
  stage("bundle", [&] { save_bundle(bundle, models); return 0; });
  log_line("bundle written to " + bundle.string());
}

void cmd_cluster_fit(const fs::path& bundle, const fs::path& data, std::optional<std::uint64_t> seed) {
  BundleLock lock(bundle);
  Models models = stage("bundle", [&] { return load_bundle(bundle); });
  if (seed) models.config.seed = *seed;
  const auto anomalous = prepare_split(data, "anomalous", models.config.preprocess);
  stage("cluster", [&] { fit_clusters(models, anomalous, log_line); return 0; });
  stage("bundle", [&] { save_bundle(bundle, models); return 0; });
  log_line("cluster model (k = " + std::to_string(models.cluster->k) + ") added to " + bundle.string());
}

void cmd_segment(const fs::path& bundle, const fs::path& volume_path, const fs::path& out,
                 const std::string& method_name) {
  Method method = Method::dcae;
  bool found = false;
  for (Method m : kMethods)
    if (method_name == to_string(m)) {
      method = m;
      found = true;
    }
  if (!found) throw UsageError("unknown method '" + method_name + "' (dcae, pca_fixed, pca_var)");
  const Models models = stage("bundle", [&] { return load_bundle(bundle); });
  const Volume volume = stage("load", [&] { return load_volume(volume_path); });
  const auto prepared = stage("preprocess", [&] { return preprocess_volume(volume, models.config.preprocess); });
  const auto seg = stage("segment", [&] { return segment(models, method, prepared); });

  // Gray levels: 0 outside the scored retina, 64 normal, 255 anomaly without a cluster,
  // 128 + 4 * cluster id for clustered anomalies. Written in the original (unflattened) frame.
  const auto& map = seg.map;
  const std::size_t plane = map.width * map.height;
  std::vector<std::uint8_t> raster(map.mask.size(), 0);
  for (std::size_t i = 0; i < map.superpixels.size(); ++i) {
    const auto& r = map.superpixels[i];
    const std::uint8_t value = !r.anomaly ? 64
                               : seg.cluster[i] ? static_cast<std::uint8_t>(128 + 4 * std::min<std::size_t>(*seg.cluster[i], 31))
                                                : 255;
    for (auto p : prepared.superpixels[r.slice][r.superpixel].pixels) raster[r.slice * plane + p] = value;
  }
  std::vector<int> back(prepared.shifts.size());
  for (std::size_t i = 0; i < back.size(); ++i) back[i] = -prepared.shifts[i];
  raster = shift_columns(raster, map.width, map.height, map.slices, back, std::uint8_t{0});

  fs::create_directories(out);
  for (std::size_t s = 0; s < map.slices; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03zu.pgm", s);
    std::ofstream pgm(out / name, std::ios::binary);
    pgm << "P5\n" << map.width << ' ' << map.height << "\n255\n";
    pgm.write(reinterpret_cast<const char*>(raster.data() + s * plane), static_cast<std::streamsize>(plane));
    if (!pgm) throw InputError("cannot write " + (out / name).string());
  }
  std::string csv = "slice,superpixel,score,label,cluster\n";
  for (std::size_t i = 0; i < map.superpixels.size(); ++i) {
    const auto& r = map.superpixels[i];
    char line[128];
    std::snprintf(line, sizeof line, "%u,%u,%.9g,%s,", r.slice, r.superpixel, r.score,
                  r.anomaly ? "anomaly" : "normal");
    csv += line;
    if (seg.cluster[i]) csv += std::to_string(*seg.cluster[i]);
    csv += '\n';
  }
  write_file(out / "superpixels.csv", csv);
  char summary[96];
  std::snprintf(summary, sizeof summary, "%zu superpixels, anomaly fraction %.4f", map.superpixels.size(),
                map.anomaly_fraction());
  log_line(summary);
}

void cmd_evaluate(const fs::path& bundle, const fs::path& data, const fs::path& report,
                  std::optional<std::uint64_t> seed) {
  Models models = stage("bundle", [&] { return load_bundle(bundle); });
  if (seed) models.config.seed = *seed;
  std::vector<GroundTruth> truth;
  const auto test = prepare_split(data, "test", models.config.preprocess, &truth);
  const auto ev = stage("evaluate", [&] { return evaluate(models, test, truth, log_line); });
  fs::create_directories(report);
  write_file(report / "segmentation.csv", seg_csv(ev.seg));
  write_file(report / "segmentation_volumes.csv", seg_volume_csv(ev.seg));
  write_file(report / "classification.csv", cv_csv(ev.cv));
  write_file(report / "classification_folds.csv", cv_fold_csv(ev.cv));
  const std::string summary = text_summary(ev.seg, ev.cv);
  write_file(report / "summary.txt", summary);
  std::cout << summary;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly detection and clustering in retinal OCT-like volumes"};
  app.require_subcommand(1);

  fs::path out, data, bundle, volume, report;
  std::uint64_t seed = 42;
  std::optional<std::uint64_t> seed_override;
  std::string preset = "desk", config_path, method = "dcae";

  auto* gen = app.add_subcommand("gen-phantom", "Generate the phantom benchmark (healthy/anomalous/test)");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Benchmark seed");
  gen->add_option("--preset", preset, "Phantom preset: desk or paper_shape");

  auto* train = app.add_subcommand("train", "Train autoencoders, PCA baselines and one-class SVMs");
  train->add_option("--data", data, "Phantom data directory")->required();
  train->add_option("--config", config_path, "JSON configuration file");
  train->add_option("--out-bundle", bundle, "Bundle directory to write")->required();
  train->add_option("--seed", seed_override, "Override the configured seed");

  auto* cfit = app.add_subcommand("cluster-fit", "Cluster anomalous superpixels of the anomalous split");
  cfit->add_option("--bundle", bundle, "Bundle directory")->required();
  cfit->add_option("--data", data, "Phantom data directory")->required();
  cfit->add_option("--seed", seed_override, "Override the configured seed");

  auto* seg = app.add_subcommand("segment", "Segment one volume into normal/anomalous superpixels");
  seg->add_option("--bundle", bundle, "Bundle directory")->required();
  seg->add_option("--volume", volume, "OCTV volume file")->required();
  seg->add_option("--out", out, "Output directory for PGM slices and superpixels.csv")->required();
  seg->add_option("--method", method, "Embedding: dcae, pca_fixed or pca_var");

  auto* eval = app.add_subcommand("evaluate", "Score all methods on the test split");
  eval->add_option("--bundle", bundle, "Bundle directory")->required();
  eval->add_option("--data", data, "Phantom data directory")->required();
  eval->add_option("--report", report, "Report directory")->required();
  eval->add_option("--seed", seed_override, "Override the configured seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) cmd_gen_phantom(out, seed, preset);
    else if (*train) cmd_train(data, config_path, bundle, seed_override);
    else if (*cfit) cmd_cluster_fit(bundle, data, seed_override);
    else if (*seg) cmd_segment(bundle, volume, out, method);
    else if (*eval) cmd_evaluate(bundle, data, report, seed_override);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
