#include "anomkit/dataset_dir.hpp"

#include <cstdio>
#include <fstream>

#include "anomkit/errors.hpp"
#include "json.hpp"

namespace anomkit {

namespace fs = std::filesystem;
using nlohmann::json;

void write_benchmark(const fs::path& dir, const Benchmark& bench, std::uint64_t seed,
                     const std::string& preset) {
  json splits = json::object();
  const std::pair<const char*, const std::vector<Phantom>*> parts[] = {
      {"healthy", &bench.healthy}, {"anomalous", &bench.anomalous}, {"test", &bench.test}};
  for (const auto& [name, vols] : parts) {
    fs::create_directories(dir / name);
    json list = json::array();
    for (std::size_t i = 0; i < vols->size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "vol_%03zu", i);
      const std::string vol = std::string(name) + "/" + stem + ".octv";
      const std::string gt = std::string(name) + "/" + stem + ".octg";
      save_volume(dir / vol, (*vols)[i].volume);
      save_ground_truth(dir / gt, (*vols)[i].truth);
      list.push_back({{"volume", vol}, {"truth", gt}});
    }
    splits[name] = std::move(list);
  }
  const json index{{"format", "anomkit-phantom"}, {"seed", seed}, {"preset", preset}, {"splits", splits}};
  std::ofstream out(dir / "index.json", std::ios::binary);
  out << index.dump(2) << '\n';
  if (!out) throw FormatError("cannot write " + (dir / "index.json").string());
}

std::vector<Phantom> load_split(const fs::path& dir, const std::string& split) {
  std::ifstream in(dir / "index.json");
  if (!in) throw InputError("no index.json in data directory " + dir.string());
  try {
    const json index = json::parse(in);
    if (!index.at("splits").contains(split))
      throw InputError("data directory " + dir.string() + " has no '" + split + "' split");
    std::vector<Phantom> out;
    for (const auto& entry : index.at("splits").at(split)) {
      Phantom p;
      p.volume = load_volume(dir / entry.at("volume").get<std::string>());
      p.truth = load_ground_truth(dir / entry.at("truth").get<std::string>());
      out.push_back(std::move(p));
    }
    if (out.empty()) throw InputError("split '" + split + "' is empty");
    return out;
  } catch (const json::exception& e) {
    throw FormatError(std::string("index.json is malformed: ") + e.what());
  }
}

}  // namespace anomkit
