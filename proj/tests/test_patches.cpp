#include <algorithm>

#include "anomkit/errors.hpp"
#include "anomkit/patches.hpp"
#include "anomkit/phantom.hpp"
#include "doctest.h"

using namespace anomkit;

namespace {

Volume random_volume(std::size_t w, std::size_t h, std::uint64_t seed) {
  Volume v(w, h, 1);
  Rng rng(seed);
  for (float& x : v.voxels) x = static_cast<float>(rng.uniform());
  return v;
}

}  // namespace

TEST_CASE("constant slice gives constant patches with the same value") {
  Volume v(64, 64, 1, 0.37f);
  auto p = extract_pair(v, 0, 10, 3, ModelPreset::desk);
  for (float x : p.scale1.values()) CHECK(x == 0.37f);
  for (float x : p.scale2.values()) CHECK(x == doctest::Approx(0.37f));
}

TEST_CASE("scale2 of a column-constant slice equals scale1") {
  Volume v(100, 40, 1);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 100; ++c) v.at(0, r, c) = static_cast<float>(r) / 40.0f;
  auto p = extract_pair(v, 0, 20, 50, ModelPreset::desk);
  for (std::size_t i = 0; i < p.scale1.size(); ++i)
    CHECK(p.scale2[i] == doctest::Approx(p.scale1[i]).epsilon(1e-6));
}

TEST_CASE("scale2 equals a 1x4 mean-pool oracle of the wide crop") {
  const auto v = random_volume(160, 80, 9);
  for (ModelPreset preset : {ModelPreset::desk, ModelPreset::paper}) {
    const std::size_t s = patch_side(preset);
    const std::size_t row = 40, col = 80;
    auto p = extract_pair(v, 0, row, col, preset);
    CHECK(p.scale1.shape() == Shape{s, s, 1});
    CHECK(p.scale2.shape() == Shape{s, s, 1});
    // Wide crop built independently, then pooled.
    std::vector<double> wide(s * 4 * s);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < 4 * s; ++j)
        wide[i * 4 * s + j] = v.at(0, row - s / 2 + i, col - 2 * s + j);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        double m = 0.0;
        for (std::size_t k = 0; k < 4; ++k) m += wide[i * 4 * s + 4 * j + k];
        CHECK(std::abs(p.scale2.at(i, j, 0) - m / 4.0) <= 1e-6);
        CHECK(p.scale1.at(i, j, 0) == v.at(0, row - s / 2 + i, col - s / 2 + j));
      }
    // Both scales share the center pixel: scale1[s/2, s/2] is the center.
    CHECK(p.scale1.at(s / 2, s / 2, 0) == v.at(0, row, col));
  }
}

TEST_CASE("borders are edge-replicated") {
  const auto v = random_volume(32, 32, 3);
  auto p = extract_pair(v, 0, 0, 0, ModelPreset::desk);
  CHECK(p.scale1.at(0, 0, 0) == v.at(0, 0, 0));
  CHECK(p.scale1.at(8, 8, 0) == v.at(0, 0, 0));
  CHECK(p.scale1.at(15, 15, 0) == v.at(0, 7, 7));
  CHECK_THROWS_AS(extract_pair(v, 0, 32, 0, ModelPreset::desk), DimensionError);
}

TEST_CASE("dataset has one pair per in-retina superpixel, deterministic order and subsample") {
  PhantomConfig cfg;
  cfg.seed = 4;
  auto p = generate_volume(cfg);
  auto pv = preprocess_volume(p.volume);
  Rng rng(1);
  auto ds = build_dataset({&pv}, Split::healthy_train, ModelPreset::desk, rng);
  CHECK(ds.pairs.size() == pv.in_retina_count());
  for (std::size_t i = 1; i < ds.pairs.size(); ++i) {
    const auto& a = ds.pairs[i - 1].source;
    const auto& b = ds.pairs[i].source;
    CHECK(std::tie(a.volume, a.slice, a.superpixel) < std::tie(b.volume, b.slice, b.superpixel));
  }
  for (const auto& pair : ds.pairs) {
    for (float x : pair.scale1.values()) REQUIRE((x >= 0.0f && x <= 1.0f));
    for (float x : pair.scale2.values()) REQUIRE((x >= 0.0f && x <= 1.0f));
  }

  DatasetOptions opt;
  opt.cap = 100;
  Rng r1(7), r2(7);
  auto a = build_dataset({&pv}, Split::healthy_train, ModelPreset::desk, r1, opt);
  auto b = build_dataset({&pv}, Split::healthy_train, ModelPreset::desk, r2, opt);
  REQUIRE(a.pairs.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a.pairs[i].source == b.pairs[i].source);
    CHECK(a.pairs[i].scale1 == b.pairs[i].scale1);
  }
}

TEST_CASE("healthy-split pairs never touch the anomaly mask of anomalous volumes") {
  // Healthy volumes carry an empty mask, so every healthy pair center is anomaly-free;
  // an anomalous volume in the same run does contribute pairs that hit the mask.
  auto bench = generate_benchmark(42);
  std::vector<PreparedVolume> pvs;
  for (std::size_t i = 0; i < 2; ++i) pvs.push_back(preprocess_volume(bench.healthy[i].volume));
  Rng rng(2);
  auto ds = build_dataset({&pvs[0], &pvs[1]}, Split::healthy_train, ModelPreset::desk, rng);
  for (const auto& pair : ds.pairs) {
    const auto labels = flatten_labels(bench.healthy[pair.source.volume].truth, pvs[pair.source.volume]);
    const std::size_t W = pvs[0].image.width, H = pvs[0].image.height;
    CHECK(labels[(pair.source.slice * H + pair.row) * W + pair.col] == AnomalyType::none);
  }
}

TEST_CASE("no in-retina superpixels is an empty-dataset error") {
  PreparedVolume pv;
  pv.image = Volume(8, 8, 1);
  pv.superpixels = {{Superpixel{}}};
  Rng rng(0);
  CHECK_THROWS_AS(build_dataset({&pv}, Split::eval, ModelPreset::desk, rng), EmptyDatasetError);
}

TEST_CASE("patient ids default to the volume index and can be overridden") {
  PhantomConfig cfg;
  cfg.seed = 6;
  auto pv = preprocess_volume(generate_volume(cfg).volume);
  Rng rng(0);
  DatasetOptions opt;
  opt.patients = {17};
  auto ds = build_dataset({&pv}, Split::eval, ModelPreset::desk, rng, opt);
  for (const auto& p : ds.pairs) CHECK(p.patient == 17);
  CHECK_THROWS_AS(parse_model_preset("tiny"), ParameterError);
}
