#include "anomkit/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "anomkit/errors.hpp"
#include "anomkit/rng.hpp"

namespace anomkit {

void PhantomConfig::validate() const {
  if (width < 8 || height < 16 || slices < 1) throw ParameterError("phantom: volume too small");
  if (layer_intensities.size() < 2 || layer_fractions.size() != layer_intensities.size()) {
    throw ParameterError("phantom: need >= 2 layers with one thickness fraction each");
  }
  for (std::size_t i = 0; i < layer_intensities.size(); ++i) {
    for (std::size_t j = i + 1; j < layer_intensities.size(); ++j) {
      if (std::abs(layer_intensities[i] - layer_intensities[j]) < 0.1 - 1e-9) {
        throw ParameterError("phantom: layer intensities must differ by >= 0.1");
      }
    }
  }
  double total = 0.0;
  for (double f : layer_fractions) {
    if (!(f > 0.0)) throw ParameterError("phantom: layer fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ParameterError("phantom: layer fractions must sum to 1");
  if (control_points < 2) throw ParameterError("phantom: need >= 2 control points");
  if (top_row - top_jitter - amplitude < 4.0 ||
      top_row + top_jitter + amplitude + thickness * (1.0 + thickness_jitter) + amplitude >
          static_cast<double>(height) - 8.0) {
    throw ParameterError("phantom: retina band does not fit in the volume height");
  }
  if (speckle < 0.0 || speckle >= 1.0) throw ParameterError("phantom: speckle must lie in [0, 1)");
  for (const auto& a : anomalies) {
    if (a.type == AnomalyType::none) throw ParameterError("phantom: anomaly type none");
    if (a.count_min > a.count_max || a.width_min > a.width_max || a.height_min > a.height_max ||
        a.depth_min > a.depth_max || a.width_min < 2 || a.height_min < 1) {
      throw ParameterError(std::string("phantom: invalid range for ") + to_string(a.type));
    }
    if (a.height_max > 0.6 * thickness) {
      throw ParameterError(std::string("phantom: ") + to_string(a.type) +
                           " taller than the retina band allows");
    }
  }
}

namespace {

// Catmull-Rom interpolation through evenly spaced knots over [0, width - 1].
double spline(const std::vector<double>& knots, double x, double width) {
  const std::size_t n = knots.size();
  const double t = x / std::max(width - 1.0, 1.0) * static_cast<double>(n - 1);
  const auto i = std::min(static_cast<std::size_t>(t), n - 2);
  const double u = t - static_cast<double>(i);
  auto k = [&](std::ptrdiff_t j) {
    return knots[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, n - 1))];
  };
  const auto ii = static_cast<std::ptrdiff_t>(i);
  const double p0 = k(ii - 1), p1 = k(ii), p2 = k(ii + 1), p3 = k(ii + 2);
  return 0.5 * ((2 * p1) + (-p0 + p2) * u + (2 * p0 - 5 * p1 + 4 * p2 - p3) * u * u +
                (-p0 + 3 * p1 - 3 * p2 + p3) * u * u * u);
}

// Smooth surface offset field over (slice, col): two spline knot sets blended across slices.
std::vector<double> smooth_field(const PhantomConfig& cfg, double amplitude, Rng& rng) {
  std::vector<double> a(cfg.control_points), b(cfg.control_points);
  for (auto& v : a) v = rng.uniform(-amplitude, amplitude);
  for (auto& v : b) v = rng.uniform(-amplitude, amplitude);
  std::vector<double> field(cfg.width * cfg.slices);
  const double w = static_cast<double>(cfg.width);
  for (std::size_t s = 0; s < cfg.slices; ++s) {
    const double t = cfg.slices > 1 ? static_cast<double>(s) / (cfg.slices - 1) : 0.0;
    for (std::size_t c = 0; c < cfg.width; ++c) {
      const double x = static_cast<double>(c);
      field[s * cfg.width + c] = (1 - t) * spline(a, x, w) + t * spline(b, x, w);
    }
  }
  return field;
}

struct Placement {
  AnomalyType type;
  double col, row;
  std::size_t slice;
  double half_w, half_h, depth;  // depth: slice half-extent (+0.5 so edge slices are covered)

  // Normalized radius^2 of the ellipsoid footprint in (col, slice), without the row term.
  double footprint(double c, std::size_t s) const {
    const double dc = (c - col) / half_w;
    const double ds = (static_cast<double>(s) - static_cast<double>(slice)) / depth;
    return dc * dc + ds * ds;
  }
  bool overlaps(const Placement& o, double margin) const {
    const double ds = std::abs(static_cast<double>(slice) - static_cast<double>(o.slice));
    return std::abs(col - o.col) < half_w + o.half_w + margin && ds < depth + o.depth;
  }
};

class Renderer {
 public:
  explicit Renderer(const PhantomConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    const std::size_t L = cfg.layer_intensities.size();
    intensities_ = cfg.layer_intensities;
    for (auto& v : intensities_) v += rng_.uniform(-cfg.layer_jitter, cfg.layer_jitter);
    gain_ = rng_.uniform(1.0 - cfg.gain_jitter, 1.0 + cfg.gain_jitter);
    const double top0 = cfg.top_row + rng_.uniform(-cfg.top_jitter, cfg.top_jitter);
    const double thick0 =
        cfg.thickness * (1.0 + rng_.uniform(-cfg.thickness_jitter, cfg.thickness_jitter));
    const auto top_field = smooth_field(cfg, cfg.amplitude, rng_);
    const auto thick_field = smooth_field(cfg, cfg.amplitude * 0.5, rng_);

    const std::size_t n = cfg.width * cfg.slices;
    bounds_.assign(n, std::vector<double>(L + 1));
    fluid_.assign(n, 0.0);
    bump_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double top = top0 + top_field[i];
      const double bottom = top + thick0 + thick_field[i];
      double acc = 0.0;
      bounds_[i][0] = top;
      for (std::size_t l = 0; l < L; ++l) {
        acc += cfg.layer_fractions[l];
        bounds_[i][l + 1] = top + acc * (bottom - top);
      }
      bounds_[i][L] = bottom;
    }
  }

  Phantom render() {
    place_all();
    const std::size_t W = cfg_.width, H = cfg_.height, S = cfg_.slices;
    const std::size_t L = cfg_.layer_intensities.size();
    Phantom p;
    p.volume = Volume(W, H, S);
    p.truth.width = W;
    p.truth.height = H;
    p.truth.slices = S;
    p.truth.labels.assign(W * H * S, AnomalyType::none);
    p.truth.top = SurfaceMap(W, S);
    p.truth.bottom = SurfaceMap(W, S);

    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t c = 0; c < W; ++c) {
        const std::size_t i = s * W + c;
        const auto& y = bounds_[i];
        const double h_f = fluid_[i], h_b = bump_[i];
        // Shifted boundaries: fluid lifts everything above the bottom band, the bump
        // lifts the top and decays with depth.
        std::vector<double> z(L + 1);
        for (std::size_t l = 0; l < L; ++l) {
          const double decay = 1.0 - static_cast<double>(l) / static_cast<double>(L - 1);
          z[l] = y[l] - h_f - h_b * decay;
        }
        z[L] = y[L];
        const double fluid_top = y[L - 1] - h_f;  // fluid spans [fluid_top, y[L-1])
        const double undeformed_top = y[0] - h_f;

        for (std::size_t r = 0; r < H; ++r) {
          const double rc = static_cast<double>(r) + 0.5;
          double v;
          AnomalyType label = AnomalyType::none;
          if (rc < z[0]) {
            v = cfg_.vitreous_intensity;
          } else if (rc >= z[L]) {
            const double depth = rc - z[L];
            v = cfg_.choroid_intensity * (0.5 + 0.5 * std::exp(-depth / 20.0));
          } else if (h_f > 0.0 && rc >= fluid_top && rc < y[L - 1]) {
            v = cfg_.fluid_intensity;
            label = AnomalyType::subsurface_fluid;
          } else {
            std::size_t l = 0;
            while (l + 1 < L && rc >= (l + 1 == L - 1 ? y[L - 1] : z[l + 1])) ++l;
            v = intensities_[l];
            if (h_b > 0.0 && rc < undeformed_top) label = AnomalyType::surface_deformation;
          }
          p.volume.at(s, r, c) = static_cast<float>(v);
          p.truth.labels[p.volume.index(s, r, c)] = label;
        }
        p.truth.top.at(s, c) = static_cast<int>(std::ceil(z[0] - 0.5));
        p.truth.bottom.at(s, c) = static_cast<int>(std::ceil(z[L] - 0.5)) - 1;
      }
    }

    for (const auto& pl : placements_) {
      if (pl.type != AnomalyType::cyst_blob) continue;
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t c = 0; c < W; ++c) {
          const double f = pl.footprint(static_cast<double>(c), s);
          if (f > 1.0) continue;
          for (std::size_t r = 0; r < H; ++r) {
            const double dr = (static_cast<double>(r) - pl.row) / pl.half_h;
            if (f + dr * dr <= 1.0) {
              p.volume.at(s, r, c) = static_cast<float>(cfg_.cyst_intensity);
              p.truth.labels[p.volume.index(s, r, c)] = AnomalyType::cyst_blob;
            }
          }
        }
      }
    }

    for (float& v : p.volume.voxels) {
      v = static_cast<float>(v * gain_ * (1.0 + cfg_.speckle * rng_.uniform(-1.0, 1.0)));
    }
    return p;
  }

 private:
  void place_all() {
    // Column-deforming anomalies first so cysts see the final layer geometry.
    for (AnomalyType t : {AnomalyType::subsurface_fluid, AnomalyType::surface_deformation,
                          AnomalyType::cyst_blob}) {
      for (const auto& spec : cfg_.anomalies) {
        if (spec.type != t) continue;
        const std::size_t count =
            spec.count_min + rng_.below(spec.count_max - spec.count_min + 1);
        for (std::size_t k = 0; k < count; ++k) place(spec);
      }
    }
  }

  void place(const AnomalySpec& spec) {
    const std::size_t W = cfg_.width, S = cfg_.slices, L = cfg_.layer_intensities.size();
    for (std::size_t attempt = 0; attempt < cfg_.max_retries; ++attempt) {
      Placement pl;
      pl.type = spec.type;
      pl.half_w = 0.5 * rng_.uniform(spec.width_min, spec.width_max);
      pl.half_h = 0.5 * rng_.uniform(spec.height_min, spec.height_max);
      const std::size_t depth = spec.depth_min + rng_.below(spec.depth_max - spec.depth_min + 1);
      pl.depth = static_cast<double>(depth) + 0.5;
      pl.col = rng_.uniform(pl.half_w + 2.0, static_cast<double>(W) - pl.half_w - 3.0);
      pl.slice = static_cast<std::size_t>(rng_.below(S));
      pl.row = 0.0;
      if (pl.col - pl.half_w < 1.0 || pl.col + pl.half_w > static_cast<double>(W) - 2.0) continue;

      bool clash = false;
      for (const auto& o : placements_) clash = clash || pl.overlaps(o, 4.0);
      if (clash) continue;

      bool ok = true;
      if (spec.type == AnomalyType::cyst_blob) {
        // Center between the shifted top and the bottom band, fully inside both.
        const std::size_t ci = pl.slice * W + static_cast<std::size_t>(pl.col);
        const auto& y = bounds_[ci];
        const double lo = y[0] - fluid_[ci] - bump_[ci] + pl.half_h + 2.0;
        const double hi = y[L - 1] - fluid_[ci] - pl.half_h - 2.0;
        if (lo >= hi) continue;
        pl.row = rng_.uniform(lo, hi);
        for (std::size_t s = 0; s < S && ok; ++s) {
          for (std::size_t c = 0; c < W && ok; ++c) {
            const double f = pl.footprint(static_cast<double>(c), s);
            if (f > 1.0) continue;
            const double extent = pl.half_h * std::sqrt(1.0 - f);
            const std::size_t i = s * W + c;
            const double top = bounds_[i][0] - fluid_[i] - bump_[i];
            const double band_bottom = bounds_[i][L - 1] - fluid_[i];
            ok = pl.row - extent >= top + 1.0 && pl.row + extent <= band_bottom - 1.0;
          }
        }
      } else {
        // Lens profiles must keep the band inside the image and within the thickness.
        for (std::size_t s = 0; s < S && ok; ++s) {
          for (std::size_t c = 0; c < W && ok; ++c) {
            const double f = pl.footprint(static_cast<double>(c), s);
            if (f >= 1.0) continue;
            const std::size_t i = s * W + c;
            const double h = 2.0 * pl.half_h * (1.0 - f);
            const double new_top = bounds_[i][0] - fluid_[i] - bump_[i] - h;
            ok = new_top >= 3.0 && h <= 0.6 * (bounds_[i][L] - bounds_[i][0]);
          }
        }
      }
      if (!ok) continue;

      if (spec.type != AnomalyType::cyst_blob) {
        auto& field = spec.type == AnomalyType::subsurface_fluid ? fluid_ : bump_;
        for (std::size_t s = 0; s < S; ++s) {
          for (std::size_t c = 0; c < W; ++c) {
            const double f = pl.footprint(static_cast<double>(c), s);
            if (f < 1.0) field[s * W + c] += 2.0 * pl.half_h * (1.0 - f);
          }
        }
      }
      placements_.push_back(pl);
      return;
    }
    std::ostringstream os;
    os << "phantom: could not place " << to_string(spec.type) << " (width " << spec.width_min
       << ".." << spec.width_max << ", height " << spec.height_min << ".." << spec.height_max
       << ") after " << cfg_.max_retries << " attempts";
    throw GenerationError(os.str());
  }

  const PhantomConfig& cfg_;
  Rng rng_;
  std::vector<double> intensities_;
  double gain_ = 1.0;
  std::vector<std::vector<double>> bounds_;  // per (slice, col): L + 1 layer boundaries
  std::vector<double> fluid_, bump_;         // per (slice, col) lens heights
  std::vector<Placement> placements_;
};

}  // namespace

Phantom generate_volume(const PhantomConfig& config) {
  config.validate();
  return Renderer(config).render();
}

PhantomConfig preset_config(PhantomPreset preset) {
  PhantomConfig cfg;
  if (preset == PhantomPreset::paper_shape) {
    cfg.width = 512;
    cfg.height = 496;
    cfg.slices = 49;
    cfg.top_row = 150.0;
    cfg.thickness = 190.0;
    cfg.top_jitter = 20.0;
    cfg.amplitude = 20.0;
    cfg.control_points = 10;
  }
  return cfg;
}

PhantomPreset parse_phantom_preset(const std::string& name) {
  if (name == "desk") return PhantomPreset::desk;
  if (name == "paper-shape" || name == "paper_shape") return PhantomPreset::paper_shape;
  throw ParameterError("unknown phantom preset '" + name + "' (expected desk or paper-shape)");
}

BenchmarkConfig default_benchmark_config(PhantomPreset preset, std::uint64_t seed) {
  BenchmarkConfig b;
  b.base = preset_config(preset);
  b.seed = seed;
  // Anomaly extents scale with the band thickness of the preset.
  const double k = b.base.thickness / 50.0;
  const double kw = static_cast<double>(b.base.width) / 128.0;
  const std::size_t kd = std::max<std::size_t>(1, b.base.slices / 8);
  auto spec = [&](AnomalyType t, std::size_t lo, std::size_t hi, double w0, double w1, double h0,
                  double h1, std::size_t d0, std::size_t d1) {
    return AnomalySpec{t, lo, hi, w0 * kw, w1 * kw, h0 * k, h1 * k, d0 * kd, d1 * kd};
  };
  b.test_anomalies = {
      spec(AnomalyType::cyst_blob, 2, 3, 14, 24, 8, 14, 1, 2),
      spec(AnomalyType::subsurface_fluid, 1, 2, 30, 44, 6, 10, 1, 2),
      spec(AnomalyType::surface_deformation, 1, 1, 20, 32, 5, 8, 1, 2),
  };
  b.mixed_anomalies = {
      spec(AnomalyType::cyst_blob, 0, 3, 12, 24, 6, 14, 1, 2),
      spec(AnomalyType::subsurface_fluid, 0, 2, 24, 44, 5, 10, 1, 2),
      spec(AnomalyType::surface_deformation, 0, 1, 16, 32, 4, 8, 1, 2),
  };
  return b;
}

std::uint64_t volume_seed(std::uint64_t seed, std::size_t split, std::size_t index) {
  return seed ^ (static_cast<std::uint64_t>(split) * 1000003ULL + index);
}

Benchmark generate_benchmark(const BenchmarkConfig& config) {
  Benchmark out;
  auto make = [&](std::size_t split, std::size_t n, const std::vector<AnomalySpec>& anomalies,
                  std::vector<Phantom>& dst) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      PhantomConfig cfg = config.base;
      cfg.anomalies = anomalies;
      cfg.seed = volume_seed(config.seed, split, i);
      dst.push_back(generate_volume(cfg));
    }
  };
  make(0, config.n_healthy, {}, out.healthy);
  make(1, config.n_anomalous, config.mixed_anomalies, out.anomalous);
  make(2, config.n_test, config.test_anomalies, out.test);
  return out;
}

Benchmark generate_benchmark(std::uint64_t seed) {
  return generate_benchmark(default_benchmark_config(PhantomPreset::desk, seed));
}

std::size_t retina_voxel_count(const GroundTruth& truth) {
  std::size_t n = 0;
  for (std::size_t s = 0; s < truth.slices; ++s) {
    for (std::size_t c = 0; c < truth.width; ++c) {
      const int t = truth.top.at(s, c), b = truth.bottom.at(s, c);
      if (b >= t) n += static_cast<std::size_t>(b - t + 1);
    }
  }
  return n;
}

}  // namespace anomkit
