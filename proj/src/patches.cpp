#include "anomkit/patches.hpp"

#include <algorithm>
#include <cmath>

#include "anomkit/errors.hpp"

namespace anomkit {

ModelPreset parse_model_preset(const std::string& name) {
  if (name == "desk") return ModelPreset::desk;
  if (name == "paper") return ModelPreset::paper;
  throw ParameterError("unknown model preset '" + name + "' (expected desk or paper)");
}

const char* to_string(ModelPreset preset) {
  return preset == ModelPreset::desk ? "desk" : "paper";
}

std::size_t patch_side(ModelPreset preset) { return preset == ModelPreset::desk ? 16 : 32; }

const char* to_string(Split split) {
  switch (split) {
    case Split::healthy_train: return "healthy-train";
    case Split::anomaly_train: return "anomaly-train";
    case Split::eval: return "eval";
  }
  return "?";
}

PatchPair extract_pair(const Volume& volume, std::size_t slice, std::size_t row, std::size_t col,
                       ModelPreset preset) {
  if (slice >= volume.slices || row >= volume.height || col >= volume.width)
    throw DimensionError("extract_pair: center outside the volume");
  const long s = static_cast<long>(patch_side(preset));
  const long H = static_cast<long>(volume.height), W = static_cast<long>(volume.width);
  auto px = [&](long r, long c) {
    return volume.at(slice, static_cast<std::size_t>(std::clamp(r, 0L, H - 1)),
                     static_cast<std::size_t>(std::clamp(c, 0L, W - 1)));
  };
  const long r0 = static_cast<long>(row) - s / 2;
  const long c1 = static_cast<long>(col) - s / 2;
  const long c2 = static_cast<long>(col) - 2 * s;

  PatchPair p;
  p.scale1 = Tensor({static_cast<std::size_t>(s), static_cast<std::size_t>(s), 1});
  p.scale2 = Tensor({static_cast<std::size_t>(s), static_cast<std::size_t>(s), 1});
  for (long i = 0; i < s; ++i)
    for (long j = 0; j < s; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      p.scale1.at(ui, uj, 0) = px(r0 + i, c1 + j);
      double sum = 0.0;
      for (long k = 0; k < 4; ++k) sum += px(r0 + i, c2 + 4 * j + k);
      p.scale2.at(ui, uj, 0) = static_cast<float>(sum / 4.0);
    }
  p.source.slice = static_cast<std::uint32_t>(slice);
  p.row = row;
  p.col = col;
  return p;
}

std::pair<std::size_t, std::size_t> superpixel_center(const Superpixel& sp, std::size_t rows,
                                                      std::size_t cols) {
  const long r = std::clamp(std::lround(sp.centroid_row), 0L, static_cast<long>(rows) - 1);
  const long c = std::clamp(std::lround(sp.centroid_col), 0L, static_cast<long>(cols) - 1);
  return {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
}

PatchDataset build_dataset(const std::vector<const PreparedVolume*>& volumes, Split split,
                           ModelPreset preset, Rng& rng, const DatasetOptions& options) {
  if (!options.patients.empty() && options.patients.size() != volumes.size())
    throw DimensionError("build_dataset: one patient id per volume required");

  struct Ref {
    std::uint32_t volume, slice, index;
  };
  std::vector<Ref> refs;
  for (std::size_t v = 0; v < volumes.size(); ++v) {
    const auto& pv = *volumes[v];
    for (std::size_t s = 0; s < pv.superpixels.size(); ++s)
      for (std::size_t k = 0; k < pv.superpixels[s].size(); ++k)
        if (pv.superpixels[s][k].in_retina)
          refs.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(s),
                          static_cast<std::uint32_t>(k)});
  }
  if (refs.empty())
    throw EmptyDatasetError(std::string("no in-retina superpixels for split ") + to_string(split));

  if (options.cap && *options.cap < refs.size()) {
    // Partial Fisher-Yates picks the subsample; sorting restores the canonical order.
    std::vector<std::size_t> idx(refs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < *options.cap; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(*options.cap);
    std::sort(idx.begin(), idx.end());
    std::vector<Ref> kept;
    kept.reserve(idx.size());
    for (std::size_t i : idx) kept.push_back(refs[i]);
    refs = std::move(kept);
  }

  PatchDataset ds;
  ds.split = split;
  ds.pairs.reserve(refs.size());
  for (const auto& ref : refs) {
    const auto& pv = *volumes[ref.volume];
    const auto& sp = pv.superpixels[ref.slice][ref.index];
    const auto [r, c] = superpixel_center(sp, pv.image.height, pv.image.width);
    PatchPair p = extract_pair(pv.image, ref.slice, r, c, preset);
    p.source = {ref.volume, ref.slice, sp.id};
    p.patient = options.patients.empty() ? ref.volume : options.patients[ref.volume];
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

}  // namespace anomkit
