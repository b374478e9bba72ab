#include <filesystem>
#include <fstream>

#include "anomkit/bundle.hpp"
#include "anomkit/config.hpp"
#include "anomkit/errors.hpp"
#include "doctest.h"

using namespace anomkit;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_config() {
  PipelineConfig c = default_config();
  c.train.epochs = 1;
  c.train.fusion_epochs = 1;
  c.train_cap = 200;
  c.svm_cap = 150;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anomkit_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config JSON round-trips and starts from defaults") {
  PipelineConfig c = default_config();
  c.seed = 7;
  c.nu = 0.2;
  c.cluster.k_max = 12;
  c.model.fusion_elu = false;
  const auto back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  const auto partial = parse_config(R"({"ocsvm": {"nu": 0.05}})");
  CHECK(partial.nu == 0.05);
  CHECK(partial.train.lr == default_config().train.lr);
}

TEST_CASE("config rejects unknown keys, wrong types and out-of-range values") {
  CHECK_THROWS_AS(parse_config(R"({"colour": 1})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dcae": {"epochz": 1}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dcae": {"epochs": "ten"}})"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"dcae": {"epochs": -1}})"), UsageError);
  CHECK_THROWS_AS(parse_config("{not json"), UsageError);
  CHECK_THROWS_AS(parse_config(R"({"ocsvm": {"nu": 1.5}})"), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"preset": "huge"})"), UsageError);
}

TEST_CASE("bundle round-trip reproduces scores exactly; tampering is detected") {
  auto bench = generate_benchmark(42);
  const auto healthy = prepare_volumes({&bench.healthy[0].volume, &bench.healthy[1].volume}, {});
  const Models models = train_models(healthy, tiny_config());
  const fs::path dir = scratch("bundle");
  save_bundle(dir, models);
  CHECK(!fs::exists(dir.string() + ".partial"));
  const Models loaded = load_bundle(dir);
  CHECK(config_to_json(loaded.config) == config_to_json(models.config));
  const auto probe = preprocess_volume(bench.test[0].volume);
  for (Method m : kMethods) {
    const auto a = segment(models, m, probe), b = segment(loaded, m, probe);
    REQUIRE(a.map.superpixels.size() == b.map.superpixels.size());
    for (std::size_t i = 0; i < a.map.superpixels.size(); ++i) {
      CHECK(a.map.superpixels[i].score == b.map.superpixels[i].score);
      CHECK(a.map.superpixels[i].anomaly == b.map.superpixels[i].anomaly);
    }
  }
  {
    std::ofstream f(dir / "pca_fixed" / "scale1_mean.nct", std::ios::app | std::ios::binary);
    f << 'x';
  }
  CHECK_THROWS_AS(load_bundle(dir), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("a bundle lock is exclusive and released on scope exit") {
  const fs::path dir = scratch("locked");
  {
    BundleLock lock(dir);
    CHECK_THROWS_AS(BundleLock{dir}, InputError);
  }
  BundleLock again(dir);
  CHECK(fs::exists(dir.string() + ".lock"));
}

TEST_CASE("sha256 of a known string") {
  const fs::path p = scratch("sha.txt");
  std::ofstream(p) << "abc";
  CHECK(sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}
