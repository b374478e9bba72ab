#include "anomkit/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "anomkit/errors.hpp"

namespace anomkit {

void PreprocessConfig::validate() const {
  if (smoothness < 0) throw ParameterError("smoothness must be >= 0");
  if (min_thickness < 1) throw ParameterError("min_thickness must be >= 1");
  if (!(target_area >= 1.0)) throw ParameterError("target_area must be >= 1");
  if (!(compactness > 0.0)) throw ParameterError("compactness must be > 0");
  if (slic_iterations < 1) throw ParameterError("slic_iterations must be >= 1");
  if (!(low_percentile >= 0.0 && low_percentile < high_percentile && high_percentile <= 1.0))
    throw ParameterError("percentiles must satisfy 0 <= low < high <= 1");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Column-wise prefix sums of a 3-column horizontal box average, with edge replication.
struct BoxColumns {
  std::size_t rows, cols;
  std::vector<double> prefix;  // [(rows + 1) * cols], prefix[r * cols + c] = sum of rows < r

  explicit BoxColumns(const Image& img) : rows(img.rows), cols(img.cols), prefix((rows + 1) * cols) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t cl = c == 0 ? 0 : c - 1, cr = std::min(c + 1, cols - 1);
        const double v = (img.at(r, cl) + img.at(r, c) + img.at(r, cr)) / 3.0;
        prefix[(r + 1) * cols + c] = prefix[r * cols + c] + v;
      }
    }
  }

  // Mean over rows [lo, hi) clamped into the image; rows outside replicate the edge rows.
  double mean(long lo, long hi, std::size_t c) const {
    double s = 0.0;
    for (long r = lo; r < hi; ++r) {
      const long rc = std::clamp<long>(r, 0, static_cast<long>(rows) - 1);
      s += prefix[static_cast<std::size_t>(rc + 1) * cols + c] -
           prefix[static_cast<std::size_t>(rc) * cols + c];
    }
    return s / static_cast<double>(hi - lo);
  }
};

// Smooth minimum-cost path through cost[c][r] with |r(c+1) - r(c)| <= smooth.
// Ties prefer the lowest row. Returns empty when no finite path exists.
std::vector<int> dp_path(const std::vector<double>& cost, std::size_t rows, std::size_t cols,
                         int smooth) {
  std::vector<double> acc(cost.begin(), cost.begin() + static_cast<std::ptrdiff_t>(rows));
  std::vector<double> next(rows);
  std::vector<int> back(rows * cols, -1);
  for (std::size_t c = 1; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      double best = kInf;
      int arg = -1;
      const long lo = std::max<long>(0, static_cast<long>(r) - smooth);
      const long hi = std::min<long>(static_cast<long>(rows) - 1, static_cast<long>(r) + smooth);
      for (long p = lo; p <= hi; ++p) {
        if (acc[static_cast<std::size_t>(p)] < best) {
          best = acc[static_cast<std::size_t>(p)];
          arg = static_cast<int>(p);
        }
      }
      next[r] = best + cost[c * rows + r];
      back[c * rows + r] = arg;
    }
    std::swap(acc, next);
  }
  const auto it = std::min_element(acc.begin(), acc.end());
  if (!std::isfinite(*it)) return {};
  std::vector<int> path(cols);
  path[cols - 1] = static_cast<int>(it - acc.begin());
  for (std::size_t c = cols - 1; c > 0; --c)
    path[c - 1] = back[c * rows + static_cast<std::size_t>(path[c])];
  return path;
}

}  // namespace

SurfacePair segment_surfaces(const Volume& volume, const PreprocessConfig& config) {
  config.validate();
  const std::size_t H = volume.height, W = volume.width;
  if (H < static_cast<std::size_t>(config.min_thickness) + 3 || W == 0)
    throw SegmentationError("volume too small for surface segmentation");

  SurfacePair out{SurfaceMap(W, volume.slices), SurfaceMap(W, volume.slices)};
  std::vector<double> grad(H * W), cost(H * W);
  for (std::size_t s = 0; s < volume.slices; ++s) {
    const Image img = volume.slice(s);
    const BoxColumns box(img);
    double peak = 0.0;
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t r = 0; r < H; ++r) {
        const long rl = static_cast<long>(r);
        // Edge between rows r-1 and r: mean below minus mean above.
        const double g = box.mean(rl, rl + 3, c) - box.mean(rl - 3, rl, c);
        grad[c * H + r] = g;
        peak = std::max(peak, std::abs(g));
      }
    }
    if (peak <= 1e-9)
      throw SegmentationError("slice " + std::to_string(s) + ": no gradient evidence (degenerate cost)");

    // Top: dark-to-bright edge with a dark region above it.
    const std::size_t top_max = H - static_cast<std::size_t>(config.min_thickness) - 1;
    for (std::size_t c = 0; c < W; ++c) {
      for (std::size_t r = 0; r < H; ++r) {
        const long rl = static_cast<long>(r);
        cost[c * H + r] = (r >= 1 && r <= top_max)
                              ? -grad[c * H + r] + box.mean(rl - 6, rl, c)
                              : kInf;
      }
    }
    const auto top = dp_path(cost, H, W, config.smoothness);
    if (top.empty())
      throw SegmentationError("slice " + std::to_string(s) + ": no admissible top surface");

    // Bottom: bright-to-dark edge with a bright region above it, below the top.
    for (std::size_t c = 0; c < W; ++c) {
      const long first = top[c] + config.min_thickness + 1;
      for (std::size_t r = 0; r < H; ++r) {
        const long rl = static_cast<long>(r);
        cost[c * H + r] =
            rl >= first ? grad[c * H + r] - box.mean(rl - 3, rl, c) : kInf;
      }
    }
    const auto edge = dp_path(cost, H, W, config.smoothness);
    if (edge.empty())
      throw SegmentationError("slice " + std::to_string(s) +
                              ": no bottom surface within the smoothness bound");
    for (std::size_t c = 0; c < W; ++c) {
      out.top.at(s, c) = top[c];
      out.bottom.at(s, c) = edge[c] - 1;  // last bright row above the edge
    }
  }
  return out;
}

template <typename T>
std::vector<T> shift_columns(const std::vector<T>& grid, std::size_t width, std::size_t height,
                             std::size_t slices, const std::vector<int>& shifts, T fill) {
  if (grid.size() != width * height * slices || shifts.size() != width * slices)
    throw DimensionError("shift_columns: size mismatch");
  std::vector<T> out(grid.size(), fill);
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t c = 0; c < width; ++c) {
      const long shift = shifts[s * width + c];
      for (long r = std::max<long>(0, shift); r < static_cast<long>(height); ++r) {
        const long src = r - shift;
        if (src >= static_cast<long>(height)) continue;
        out[(s * height + static_cast<std::size_t>(r)) * width + c] =
            grid[(s * height + static_cast<std::size_t>(src)) * width + c];
      }
    }
  }
  return out;
}

template std::vector<float> shift_columns(const std::vector<float>&, std::size_t, std::size_t,
                                          std::size_t, const std::vector<int>&, float);
template std::vector<AnomalyType> shift_columns(const std::vector<AnomalyType>&, std::size_t,
                                                std::size_t, std::size_t,
                                                const std::vector<int>&, AnomalyType);
template std::vector<std::uint8_t> shift_columns(const std::vector<std::uint8_t>&, std::size_t,
                                                 std::size_t, std::size_t,
                                                 const std::vector<int>&, std::uint8_t);

Flattened flatten(const Volume& volume, const SurfacePair& surfaces) {
  const std::size_t W = volume.width, S = volume.slices;
  if (surfaces.bottom.width != W || surfaces.bottom.slices != S || surfaces.top.width != W ||
      surfaces.top.slices != S)
    throw DimensionError("flatten: surface map does not match volume");
  Flattened f;
  f.reference_row = *std::max_element(surfaces.bottom.rows.begin(), surfaces.bottom.rows.end());
  f.shifts.resize(W * S);
  f.surfaces = surfaces;
  for (std::size_t i = 0; i < W * S; ++i) {
    f.shifts[i] = f.reference_row - surfaces.bottom.rows[i];
    f.surfaces.top.rows[i] += f.shifts[i];
    f.surfaces.bottom.rows[i] = f.reference_row;
  }
  f.volume = Volume(W, volume.height, S);
  f.volume.voxels = shift_columns(volume.voxels, W, volume.height, S, f.shifts, 0.0f);
  return f;
}

namespace {

// Linear interpolation between order statistics at position q * (n - 1).
double percentile_sorted(const std::vector<float>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) * (1.0 - t) + static_cast<double>(sorted[hi]) * t;
}

}  // namespace

Image normalize_slice(const Image& slice, const std::vector<std::uint8_t>& retina_mask,
                      double low, double high) {
  if (retina_mask.size() != slice.px.size())
    throw DimensionError("normalize_slice: mask does not match slice");
  if (!(low >= 0.0 && low < high && high <= 1.0))
    throw ParameterError("normalize_slice: need 0 <= low < high <= 1");
  std::vector<float> vals;
  for (std::size_t i = 0; i < slice.px.size(); ++i)
    if (retina_mask[i]) vals.push_back(slice.px[i]);
  if (vals.empty()) vals = slice.px;
  std::sort(vals.begin(), vals.end());

  Image out(slice.rows, slice.cols, 0.5f);
  const double lo = percentile_sorted(vals, low), hi = percentile_sorted(vals, high);
  const double spread = hi - lo;
  if (!(spread > 1e-12 * std::max(1.0, std::abs(hi)))) return out;
  for (std::size_t i = 0; i < slice.px.size(); ++i) {
    const double v = (static_cast<double>(slice.px[i]) - lo) / spread;
    out.px[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

namespace {

struct Center {
  double row, col, value;
};

// Union-find over connected components.
struct Components {
  std::vector<std::size_t> parent, size;
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
};

}  // namespace

std::vector<Superpixel> slic_superpixels(const Image& slice, double target_area,
                                         double compactness, int iterations,
                                         std::uint32_t slice_index) {
  if (!(target_area >= 1.0)) throw ParameterError("slic: target_area must be >= 1");
  if (!(compactness > 0.0)) throw ParameterError("slic: compactness must be > 0");
  if (iterations < 1) throw ParameterError("slic: iterations must be >= 1");
  const std::size_t R = slice.rows, C = slice.cols, N = R * C;
  if (N == 0) throw DimensionError("slic: empty slice");

  const double S = std::sqrt(target_area);
  const std::size_t nr = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(R / S)));
  const std::size_t nc = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(C / S)));
  const double step_r = static_cast<double>(R) / static_cast<double>(nr);
  const double step_c = static_cast<double>(C) / static_cast<double>(nc);
  const double step = std::max(step_r, step_c);

  // Grid centers at cell midpoints (half-integer for S = 4, so ties cannot occur).
  std::vector<Center> centers;
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) {
      const double r = (static_cast<double>(i) + 0.5) * step_r - 0.5;
      const double c = (static_cast<double>(j) + 0.5) * step_c - 0.5;
      const auto ri = static_cast<std::size_t>(std::clamp(std::lround(r), 0L, static_cast<long>(R) - 1));
      const auto ci = static_cast<std::size_t>(std::clamp(std::lround(c), 0L, static_cast<long>(C) - 1));
      centers.push_back({r, c, slice.at(ri, ci)});
    }
  const std::size_t K = centers.size();

  const double spatial_w = (compactness / step) * (compactness / step);
  std::vector<std::uint32_t> label(N, 0);
  std::vector<double> dist(N);
  for (int it = 0; it < iterations; ++it) {
    std::fill(dist.begin(), dist.end(), kInf);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& ck = centers[k];
      const long r0 = std::max(0L, static_cast<long>(std::floor(ck.row - 2 * step)));
      const long r1 = std::min(static_cast<long>(R) - 1, static_cast<long>(std::ceil(ck.row + 2 * step)));
      const long c0 = std::max(0L, static_cast<long>(std::floor(ck.col - 2 * step)));
      const long c1 = std::min(static_cast<long>(C) - 1, static_cast<long>(std::ceil(ck.col + 2 * step)));
      for (long r = r0; r <= r1; ++r)
        for (long c = c0; c <= c1; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * C + static_cast<std::size_t>(c);
          const double dv = slice.px[i] - ck.value;
          const double dr = static_cast<double>(r) - ck.row, dc = static_cast<double>(c) - ck.col;
          const double d = dv * dv + spatial_w * (dr * dr + dc * dc);
          if (d < dist[i]) {  // strict: earlier (grid-order) centers win ties
            dist[i] = d;
            label[i] = static_cast<std::uint32_t>(k);
          }
        }
    }
    // Pixels outside every search window (possible only for odd shapes) go to the nearest center.
    for (std::size_t i = 0; i < N; ++i) {
      if (std::isfinite(dist[i])) continue;
      const double r = static_cast<double>(i / C), c = static_cast<double>(i % C);
      double best = kInf;
      for (std::size_t k = 0; k < K; ++k) {
        const double d = (r - centers[k].row) * (r - centers[k].row) +
                         (c - centers[k].col) * (c - centers[k].col);
        if (d < best) {
          best = d;
          label[i] = static_cast<std::uint32_t>(k);
        }
      }
    }
    std::vector<double> sr(K, 0.0), sc(K, 0.0), sv(K, 0.0);
    std::vector<std::size_t> cnt(K, 0);
    for (std::size_t i = 0; i < N; ++i) {
      const auto k = label[i];
      sr[k] += static_cast<double>(i / C);
      sc[k] += static_cast<double>(i % C);
      sv[k] += slice.px[i];
      ++cnt[k];
    }
    for (std::size_t k = 0; k < K; ++k)
      if (cnt[k] > 0) {
        const double n = static_cast<double>(cnt[k]);
        centers[k] = {sr[k] / n, sc[k] / n, sv[k] / n};
      }
  }

  // Connectivity enforcement: 4-connected components of each label.
  std::vector<std::size_t> comp(N, std::numeric_limits<std::size_t>::max());
  std::vector<std::uint32_t> comp_label;
  Components uf;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < N; ++i) {
    if (comp[i] != std::numeric_limits<std::size_t>::max()) continue;
    const std::size_t id = comp_label.size();
    comp_label.push_back(label[i]);
    uf.parent.push_back(id);
    uf.size.push_back(0);
    comp[i] = id;
    stack.push_back(i);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++uf.size[id];
      const std::size_t r = p / C, c = p % C;
      const std::size_t nbrs[4] = {r > 0 ? p - C : N, r + 1 < R ? p + C : N, c > 0 ? p - 1 : N,
                                   c + 1 < C ? p + 1 : N};
      for (std::size_t q : nbrs)
        if (q < N && comp[q] == std::numeric_limits<std::size_t>::max() && label[q] == label[i]) {
          comp[q] = id;
          stack.push_back(q);
        }
    }
  }
  const std::size_t ncomp = comp_label.size();
  std::vector<std::size_t> largest(K, ncomp);
  for (std::size_t id = 0; id < ncomp; ++id) {
    auto& l = largest[comp_label[id]];
    if (l == ncomp || uf.size[id] > uf.size[l]) l = id;
  }
  const auto min_size = static_cast<std::size_t>(std::max(1.0, target_area / 4.0));
  std::vector<std::vector<std::size_t>> comp_pixels(ncomp);
  for (std::size_t i = 0; i < N; ++i) comp_pixels[comp[i]].push_back(i);
  for (std::size_t id = 0; id < ncomp; ++id) {
    if (largest[comp_label[id]] == id && uf.size[id] >= min_size) continue;
    const std::size_t root = uf.find(id);
    std::size_t best = ncomp;
    for (std::size_t p : comp_pixels[id]) {
      const std::size_t r = p / C, c = p % C;
      const std::size_t nbrs[4] = {r > 0 ? p - C : N, r + 1 < R ? p + C : N, c > 0 ? p - 1 : N,
                                   c + 1 < C ? p + 1 : N};
      for (std::size_t q : nbrs) {
        if (q >= N) continue;
        const std::size_t o = uf.find(comp[q]);
        if (o == root) continue;
        if (best == ncomp || uf.size[o] > uf.size[best] || (uf.size[o] == uf.size[best] && o < best))
          best = o;
      }
    }
    if (best == ncomp) continue;  // nothing to merge into (single region)
    uf.parent[root] = best;
    uf.size[best] += uf.size[root];
  }

  // Final regions keyed by the grid index of their root's label, ordered by grid index.
  std::vector<std::size_t> region_of_root(ncomp, ncomp);
  std::vector<std::pair<std::uint32_t, std::size_t>> roots;  // (grid label, root)
  for (std::size_t id = 0; id < ncomp; ++id)
    if (uf.find(id) == id) roots.emplace_back(comp_label[id], id);
  std::sort(roots.begin(), roots.end());
  std::vector<Superpixel> out(roots.size());
  for (std::size_t k = 0; k < roots.size(); ++k) {
    region_of_root[roots[k].second] = k;
    out[k].id = static_cast<std::uint32_t>(k);
    out[k].slice = slice_index;
  }
  for (std::size_t i = 0; i < N; ++i) out[region_of_root[uf.find(comp[i])]].pixels.push_back(static_cast<std::uint32_t>(i));
  for (auto& sp : out) {
    double sr = 0.0, sc = 0.0;
    for (auto p : sp.pixels) {
      sr += static_cast<double>(p / C);
      sc += static_cast<double>(p % C);
    }
    sp.centroid_row = sr / static_cast<double>(sp.pixels.size());
    sp.centroid_col = sc / static_cast<double>(sp.pixels.size());
  }
  return out;
}

void mark_retina(std::vector<Superpixel>& superpixels, const SurfacePair& surfaces) {
  for (auto& sp : superpixels) {
    if (sp.slice >= surfaces.top.slices) throw DimensionError("mark_retina: slice out of range");
    const long col = std::clamp(std::lround(sp.centroid_col), 0L,
                                static_cast<long>(surfaces.top.width) - 1);
    const auto c = static_cast<std::size_t>(col);
    sp.in_retina = sp.centroid_row >= surfaces.top.at(sp.slice, c) &&
                   sp.centroid_row <= surfaces.bottom.at(sp.slice, c);
  }
}

std::vector<std::uint32_t> label_image(const std::vector<Superpixel>& superpixels,
                                       std::size_t rows, std::size_t cols) {
  std::vector<std::uint32_t> out(rows * cols, std::numeric_limits<std::uint32_t>::max());
  for (const auto& sp : superpixels)
    for (auto p : sp.pixels) {
      if (p >= out.size()) throw DimensionError("label_image: pixel out of range");
      out[p] = sp.id;
    }
  return out;
}

std::size_t PreparedVolume::in_retina_count() const {
  std::size_t n = 0;
  for (const auto& sl : superpixels)
    for (const auto& sp : sl) n += sp.in_retina;
  return n;
}

PreparedVolume preprocess_volume(const Volume& volume, const PreprocessConfig& config) {
  config.validate();
  const auto surfaces = segment_surfaces(volume, config);
  auto flat = flatten(volume, surfaces);

  PreparedVolume out;
  out.image = Volume(volume.width, volume.height, volume.slices);
  out.surfaces = flat.surfaces;
  out.shifts = std::move(flat.shifts);
  out.reference_row = flat.reference_row;
  out.superpixels.resize(volume.slices);
  for (std::size_t s = 0; s < volume.slices; ++s) {
    std::vector<std::uint8_t> mask(volume.height * volume.width, 0);
    for (std::size_t c = 0; c < volume.width; ++c)
      for (int r = out.surfaces.top.at(s, c); r <= out.surfaces.bottom.at(s, c); ++r)
        mask[static_cast<std::size_t>(r) * volume.width + c] = 1;
    const Image norm = normalize_slice(flat.volume.slice(s), mask, config.low_percentile,
                                       config.high_percentile);
    out.image.set_slice(s, norm);
    out.superpixels[s] = slic_superpixels(norm, config.target_area, config.compactness,
                                          config.slic_iterations, static_cast<std::uint32_t>(s));
    mark_retina(out.superpixels[s], out.surfaces);
  }
  return out;
}

std::vector<AnomalyType> flatten_labels(const GroundTruth& truth, const PreparedVolume& prepared) {
  if (truth.width != prepared.image.width || truth.height != prepared.image.height ||
      truth.slices != prepared.image.slices)
    throw DimensionError("flatten_labels: ground truth does not match volume");
  return shift_columns(truth.labels, truth.width, truth.height, truth.slices, prepared.shifts,
                       AnomalyType::none);
}

}  // namespace anomkit
