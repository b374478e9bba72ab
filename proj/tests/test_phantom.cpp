#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "anomkit/errors.hpp"
#include "anomkit/phantom.hpp"
#include "doctest.h"

using namespace anomkit;

namespace {

PhantomConfig single(AnomalyType t, double w, double h) {
  PhantomConfig cfg;
  cfg.seed = 5;
  cfg.anomalies = {AnomalySpec{t, 1, 1, w, w, h, h, 1, 1}};
  return cfg;
}

}  // namespace

TEST_CASE("healthy config has an empty anomaly mask") {
  PhantomConfig cfg;
  cfg.seed = 3;
  auto p = generate_volume(cfg);
  CHECK(p.truth.anomaly_count() == 0);
  CHECK(p.volume.voxels.size() == 128u * 128u * 8u);
}

TEST_CASE("same seed gives bitwise identical volumes") {
  auto cfg = default_benchmark_config().base;
  cfg.anomalies = default_benchmark_config().test_anomalies;
  cfg.seed = 77;
  auto a = generate_volume(cfg);
  auto b = generate_volume(cfg);
  CHECK(a.volume == b.volume);
  CHECK(a.truth == b.truth);
  cfg.seed = 78;
  CHECK(!(generate_volume(cfg).volume == a.volume));
}

TEST_CASE("10x6 cyst covers roughly pi*a*b voxels in its center slice") {
  auto p = generate_volume(single(AnomalyType::cyst_blob, 10, 6));
  const double expected = std::numbers::pi * 5.0 * 3.0;
  std::size_t best = 0;
  for (std::size_t s = 0; s < p.truth.slices; ++s) {
    std::size_t n = 0;
    for (std::size_t r = 0; r < p.truth.height; ++r)
      for (std::size_t c = 0; c < p.truth.width; ++c) n += p.truth.anomalous(s, r, c);
    best = std::max(best, n);
  }
  CHECK(best >= 0.5 * expected);
  CHECK(best <= 1.5 * expected);
}

TEST_CASE("ground truth invariants") {
  auto bench = default_benchmark_config();
  PhantomConfig cfg = bench.base;
  cfg.anomalies = bench.test_anomalies;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    auto p = generate_volume(cfg);
    for (std::size_t s = 0; s < cfg.slices; ++s) {
      for (std::size_t c = 0; c < cfg.width; ++c) {
        CHECK(p.truth.top.at(s, c) < p.truth.bottom.at(s, c));
        CHECK(p.truth.top.at(s, c) >= 0);
        CHECK(p.truth.bottom.at(s, c) < static_cast<int>(cfg.height));
      }
    }
    // Anomalous voxels lie inside the band.
    for (std::size_t s = 0; s < cfg.slices; ++s)
      for (std::size_t r = 0; r < cfg.height; ++r)
        for (std::size_t c = 0; c < cfg.width; ++c)
          if (p.truth.anomalous(s, r, c)) {
            CHECK(static_cast<int>(r) >= p.truth.top.at(s, c));
            CHECK(static_cast<int>(r) <= p.truth.bottom.at(s, c));
          }
  }
}

TEST_CASE("subsurface fluid and deformation lift the top surface") {
  for (AnomalyType t : {AnomalyType::subsurface_fluid, AnomalyType::surface_deformation}) {
    auto cfg = single(t, 30, 8);
    auto healthy_cfg = cfg;
    healthy_cfg.anomalies.clear();
    auto p = generate_volume(cfg);
    REQUIRE(p.truth.anomaly_count() > 0);
    // The lifted region is where labels of type t exist; the top there must be higher
    // (smaller row) than the undeformed neighbour columns would suggest.
    std::size_t labelled_cols = 0;
    for (std::size_t s = 0; s < cfg.slices; ++s)
      for (std::size_t c = 0; c < cfg.width; ++c) {
        bool any = false;
        for (std::size_t r = 0; r < cfg.height; ++r) any = any || p.truth.at(s, r, c) == t;
        labelled_cols += any;
      }
    CHECK(labelled_cols > 10);
  }
}

TEST_CASE("unplaceable anomaly is a generation error naming the type") {
  PhantomConfig cfg;
  cfg.seed = 1;
  cfg.max_retries = 5;
  cfg.anomalies = {AnomalySpec{AnomalyType::cyst_blob, 12, 12, 60, 60, 20, 20, 3, 3}};
  try {
    generate_volume(cfg);
    FAIL("expected GenerationError");
  } catch (const GenerationError& e) {
    CHECK(std::string(e.what()).find("cyst_blob") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  PhantomConfig cfg;
  cfg.layer_intensities = {0.5, 0.55};
  cfg.layer_fractions = {0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  PhantomConfig tall;
  tall.thickness = 120;
  CHECK_THROWS_AS(tall.validate(), ParameterError);
  CHECK_THROWS_AS(parse_phantom_preset("huge"), ParameterError);
}

TEST_CASE("benchmark splits") {
  auto b = generate_benchmark(42);
  CHECK(b.healthy.size() == 40);
  CHECK(b.anomalous.size() == 40);
  CHECK(b.test.size() == 8);
  for (const auto& p : b.healthy) CHECK(p.truth.anomaly_count() == 0);

  std::set<AnomalyType> seen;
  for (const auto& p : b.test) {
    for (AnomalyType t : p.truth.labels) seen.insert(t);
    const double frac =
        static_cast<double>(p.truth.anomaly_count()) / retina_voxel_count(p.truth);
    CHECK(frac >= 0.01);
    CHECK(frac <= 0.20);
  }
  CHECK(seen.count(AnomalyType::cyst_blob) == 1);
  CHECK(seen.count(AnomalyType::subsurface_fluid) == 1);
  CHECK(seen.count(AnomalyType::surface_deformation) == 1);
}

TEST_CASE("volume and ground truth files round-trip") {
  PhantomConfig cfg = single(AnomalyType::cyst_blob, 12, 8);
  auto p = generate_volume(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "anomkit_phantom_io";
  std::filesystem::create_directories(dir);
  save_volume(dir / "v.octv", p.volume);
  save_ground_truth(dir / "v.octg", p.truth);
  CHECK(load_volume(dir / "v.octv") == p.volume);
  CHECK(load_ground_truth(dir / "v.octg") == p.truth);
  std::filesystem::remove_all(dir);
}
