#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/histogram.hpp"
#include "voxseg/lbp.hpp"
#include "voxseg/pyramid.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// The per-voxel feature vector is the concatenation of
//   [0]                normalized center intensity,
//   [1 .. k1]          short-range intensity histogram at scale 0,
//   [.. + k2]          long-range intensity histogram at its own scale,
//   [.. + 30]          three-orthogonal-plane LBP code histograms (xy, yz, xz).
// All histograms are normalized by their window population and binned
// against the scale-0 global intensity range, so bins mean the same thing
// at every scale.

struct HistogramSpec {
  int scale = 0;
  int radius = 1;
  int bins = 8;  // one of {8, 16, 32}
};

struct LbpSpec {
  int scale = 0;
  int radius = 1;  // code histogram window radius; the ring itself is 3x3
};

struct FeatureSpec {
  HistogramSpec hist1{0, 4, 16};  // scale pinned to 0
  HistogramSpec hist2{1, 8, 16};
  LbpSpec lbp{0, 4};

  int length() const { return 1 + hist1.bins + hist2.bins + 3 * kLbpCodes; }
  int max_scale() const { return std::max(hist2.scale, lbp.scale); }

  void validate() const {
    auto bins_ok = [](int k) { return k == 8 || k == 16 || k == 32; };
    if (hist1.scale != 0) throw ContractError("hist1 scale is fixed to 0");
    if (!bins_ok(hist1.bins) || !bins_ok(hist2.bins))
      throw ContractError("histogram bins must be one of {8,16,32}");
    if (hist1.radius < 1 || hist2.radius < 1 || lbp.radius < 1)
      throw ContractError("radii must be >= 1");
    if (hist2.scale < 0 || lbp.scale < 0) throw ContractError("scales must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const HistogramSpec& h) {
  j = {{"scale", h.scale}, {"radius", h.radius}, {"bins", h.bins}};
}
inline void from_json(const nlohmann::json& j, HistogramSpec& h) {
  j.at("scale").get_to(h.scale);
  j.at("radius").get_to(h.radius);
  j.at("bins").get_to(h.bins);
}
inline void to_json(nlohmann::json& j, const LbpSpec& l) {
  j = {{"scale", l.scale}, {"radius", l.radius}};
}
inline void from_json(const nlohmann::json& j, LbpSpec& l) {
  j.at("scale").get_to(l.scale);
  j.at("radius").get_to(l.radius);
}
inline void to_json(nlohmann::json& j, const FeatureSpec& s) {
  j = {{"hist1", s.hist1}, {"hist2", s.hist2}, {"lbp", s.lbp}};
}
inline void from_json(const nlohmann::json& j, FeatureSpec& s) {
  j.at("hist1").get_to(s.hist1);
  j.at("hist2").get_to(s.hist2);
  j.at("lbp").get_to(s.lbp);
}

/// Read access to the pyramid levels a feature computation needs. The
/// windows may be whole in-memory levels or z-chunks streamed from disk;
/// range is the scale-0 global intensity range used for binning everywhere.
struct PyramidWindowSet {
  std::vector<LevelWindow> levels;
  std::vector<std::shared_ptr<const Volume>> keepalive;
  IntensityRange range;

  const LevelWindow& level(int s) const {
    if (s < 0 || s >= int(levels.size()))
      throw ContractError("pyramid level " + std::to_string(s) + " not available");
    return levels[std::size_t(s)];
  }
};

inline PyramidWindowSet whole_pyramid_windows(const ScalePyramid& p) {
  PyramidWindowSet w;
  for (const Volume& level : p.levels) w.levels.push_back(LevelWindow::whole(level));
  w.range = p.global_range();
  return w;
}

/// Context slices required on each side of a slab, in scale-0 slices, for
/// every window the feature recipe reads. The LBP term gets +1 for the code ring.
inline int required_margin_scale0(const FeatureSpec& spec) {
  auto need = [](int s, int r_eff) { return s == 0 ? r_eff : ((r_eff + 1) << s); };
  int m = spec.hist1.radius;
  m = std::max(m, need(spec.hist2.scale, spec.hist2.radius));
  m = std::max(m, need(spec.lbp.scale, spec.lbp.radius + 1));
  return m;
}

/// Plane ranges each pyramid level must cover (before clamping to the
/// level) so that every owned voxel of the slab can be featurized.
struct LevelZRange {
  int scale = 0;
  int z_lo = 0, z_hi = 0;
};

inline std::vector<LevelZRange> level_ranges_for_slab(const FeatureSpec& spec,
                                                      const Slab& slab) {
  const int max_s = spec.max_scale();
  std::vector<int> need(std::size_t(max_s) + 1, 0);
  need[0] = spec.hist1.radius;
  need[std::size_t(spec.hist2.scale)] =
      std::max(need[std::size_t(spec.hist2.scale)], spec.hist2.radius);
  need[std::size_t(spec.lbp.scale)] =
      std::max(need[std::size_t(spec.lbp.scale)], spec.lbp.radius + 1);

  std::vector<LevelZRange> out;
  for (int s = 0; s <= max_s; ++s)
    out.push_back({s, (slab.z_lo >> s) - need[std::size_t(s)],
                   (slab.z_hi >> s) + need[std::size_t(s)]});
  return out;
}

/// Normalized center intensity; constant volumes map to 0.
inline double center_feature(std::uint16_t v, IntensityRange range) {
  if (range.hi == range.lo) return 0.0;
  return double(v - range.lo) / double(range.hi - range.lo);
}

/// 30-entry three-orthogonal-plane LBP block (xy, yz, xz order) at the
/// coordinate mapped to the recipe's scale.
inline std::vector<double> lbp_top_feature(const PyramidWindowSet& w, Coord at_scale0,
                                           const LbpSpec& spec) {
  const Coord c = map_coord(at_scale0, spec.scale);
  const LevelWindow& level = w.level(spec.scale);
  std::vector<double> out;
  out.reserve(3 * kLbpCodes);
  for (Plane p : {Plane::xy, Plane::yz, Plane::xz}) {
    const auto h = lbp_plane_histogram(level, c.x, c.y, c.z, p, spec.radius);
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

inline std::vector<double> lbp_top_feature(const ScalePyramid& p, Coord at_scale0,
                                           const LbpSpec& spec) {
  return lbp_top_feature(whole_pyramid_windows(p), at_scale0, spec);
}

/// Reference per-voxel assembly via direct window scans. The slab extractor
/// below produces exactly these rows.
inline std::vector<double> assemble_feature_vector(const PyramidWindowSet& w, Coord c,
                                                   const FeatureSpec& spec) {
  spec.validate();
  std::vector<double> row;
  row.reserve(std::size_t(spec.length()));

  row.push_back(center_feature(w.level(0).clamped(c.x, c.y, c.z), w.range));

  const auto h1 = neighbourhood_histogram_naive(w.level(0), w.range, c.x, c.y, c.z,
                                                spec.hist1.radius, spec.hist1.bins)
                      .normalized();
  row.insert(row.end(), h1.begin(), h1.end());

  const Coord c2 = map_coord(c, spec.hist2.scale);
  const auto h2 = neighbourhood_histogram_naive(w.level(spec.hist2.scale), w.range, c2.x,
                                                c2.y, c2.z, spec.hist2.radius, spec.hist2.bins)
                      .normalized();
  row.insert(row.end(), h2.begin(), h2.end());

  const auto top = lbp_top_feature(w, c, spec.lbp);
  row.insert(row.end(), top.begin(), top.end());
  return row;
}

inline std::vector<double> assemble_feature_vector(const ScalePyramid& p, Coord c,
                                                   const FeatureSpec& spec) {
  return assemble_feature_vector(whole_pyramid_windows(p), c, spec);
}

struct FeatureMatrix {
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t c) : cols(c) {}

  std::size_t rows() const { return cols == 0 ? 0 : values.size() / cols; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  void push_row(std::span<const double> r) {
    assert(r.size() == cols);
    values.insert(values.end(), r.begin(), r.end());
  }
};

inline std::vector<std::string> feature_column_names(const FeatureSpec& spec) {
  std::vector<std::string> names;
  names.push_back("intensity");
  for (int i = 0; i < spec.hist1.bins; ++i) names.push_back("h1_b" + std::to_string(i));
  for (int i = 0; i < spec.hist2.bins; ++i) names.push_back("h2_b" + std::to_string(i));
  for (const char* plane : {"xy", "yz", "xz"})
    for (int i = 0; i < kLbpCodes; ++i)
      names.push_back(std::string("lbp_") + plane + "_" + std::to_string(i));
  return names;
}

namespace detail {

// Per-plane LBP codes for a run of planes of one level, precomputed so the
// batch extractor histograms bytes instead of re-deriving rings.
struct LbpCodeCache {
  Dims level_dims;
  int z_begin = 0, z_count = 0;
  std::vector<std::uint8_t> codes[3];  // indexed by Plane

  void build(const LevelWindow& w, int z_lo, int z_hi) {
    level_dims = w.full_dims();
    z_begin = std::clamp(z_lo, 0, level_dims.nz - 1);
    const int z_end = std::clamp(z_hi, 0, level_dims.nz - 1);
    z_count = z_end - z_begin + 1;
    const std::size_t plane_sz = std::size_t(level_dims.nx) * level_dims.ny;
    for (auto& c : codes) c.assign(plane_sz * std::size_t(z_count), 0);
    for (int z = z_begin; z <= z_end; ++z)
      for (int y = 0; y < level_dims.ny; ++y)
        for (int x = 0; x < level_dims.nx; ++x) {
          const std::size_t i = (std::size_t(z - z_begin) * level_dims.ny + y) * level_dims.nx + x;
          codes[0][i] = std::uint8_t(lbp_code_at(w, x, y, z, Plane::xy));
          codes[1][i] = std::uint8_t(lbp_code_at(w, x, y, z, Plane::yz));
          codes[2][i] = std::uint8_t(lbp_code_at(w, x, y, z, Plane::xz));
        }
  }

  std::uint8_t code(Plane p, int x, int y, int z) const {
    x = std::clamp(x, 0, level_dims.nx - 1);
    y = std::clamp(y, 0, level_dims.ny - 1);
    z = std::clamp(z, 0, level_dims.nz - 1);
    assert(z >= z_begin && z < z_begin + z_count);
    return codes[int(p)][(std::size_t(z - z_begin) * level_dims.ny + y) * level_dims.nx + x];
  }

  // 30 normalized entries (xy, yz, xz) for the code windows centered on a
  // level voxel.
  void top_histograms(int x, int y, int z, int r, double* out) const {
    const double pop = double(2 * r + 1) * double(2 * r + 1);
    for (int p = 0; p < 3; ++p) {
      std::uint32_t counts[kLbpCodes] = {0};
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) {
          int cx = x, cy = y, cz = z;
          switch (Plane(p)) {
            case Plane::xy: cx += du; cy += dv; break;
            case Plane::yz: cy += du; cz += dv; break;
            case Plane::xz: cx += du; cz += dv; break;
          }
          ++counts[code(Plane(p), cx, cy, cz)];
        }
      for (int i = 0; i < kLbpCodes; ++i) out[p * kLbpCodes + i] = double(counts[i]) / pop;
    }
  }
};

}  // namespace detail

/// Streams feature rows for the owned voxels of a slab. Within each (x,y)
/// line the short-range histogram advances by plane subtract/add; the
/// coarse-scale histogram and LBP block are refreshed only when the mapped
/// level coordinate changes. Rows equal assemble_feature_vector exactly.
/// One run can serve several threads: lines() is const, each caller works
/// a disjoint y range against the shared read-only LBP code cache.
class SlabFeatureRun {
 public:
  SlabFeatureRun(const PyramidWindowSet& w, const Slab& slab, const FeatureSpec& spec)
      : w_(w), slab_(slab), spec_(spec) {
    spec.validate();
    const Dims d = w.level(0).full_dims();
    const int required = required_margin_scale0(spec);
    if (slab.margin_lo < std::min(required, slab.z_lo) ||
        slab.margin_hi < std::min(required, d.nz - 1 - slab.z_hi))
      throw ContractError("slab margin " + std::to_string(slab.margin_lo) + "/" +
                          std::to_string(slab.margin_hi) +
                          " insufficient for feature spec (needs " + std::to_string(required) +
                          ")");
    for (const auto& lr : level_ranges_for_slab(spec, slab))
      if (!w.level(lr.scale).covers(lr.z_lo, lr.z_hi))
        throw ContractError("pyramid window at scale " + std::to_string(lr.scale) +
                            " does not cover the slab");
    codes_.build(w.level(spec.lbp.scale), (slab.z_lo >> spec.lbp.scale) - spec.lbp.radius,
                 (slab.z_hi >> spec.lbp.scale) + spec.lbp.radius);
  }

  Dims dims() const { return w_.level(0).full_dims(); }

  /// fn(Coord, std::span<const double>); the span's storage is reused
  /// between calls. Voxels come x-innermost over z, line by line.
  template <class Fn>
  void lines(int y_begin, int y_end, Fn&& fn) const {
    const Dims d = dims();
    const int s2 = spec_.hist2.scale, sl = spec_.lbp.scale;
    const int r1 = spec_.hist1.radius, r2 = spec_.hist2.radius, rl = spec_.lbp.radius;
    const int k1 = spec_.hist1.bins, k2 = spec_.hist2.bins;
    const double pop1 = double(2 * r1 + 1) * (2 * r1 + 1) * (2 * r1 + 1);
    const double pop2 = double(2 * r2 + 1) * (2 * r2 + 1) * (2 * r2 + 1);

    std::vector<double> row(std::size_t(spec_.length()));
    const std::size_t off1 = 1, off2 = off1 + std::size_t(k1), offl = off2 + std::size_t(k2);

    for (int y = y_begin; y < y_end; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        HistogramSweep sweep1(w_.level(0), w_.range, x, y, slab_.z_lo, r1, k1);
        HistogramSweep sweep2(w_.level(s2), w_.range, x >> s2, y >> s2, slab_.z_lo >> s2, r2,
                              k2);
        int lbp_z = -1;  // level z of the cached LBP block

        for (int z = slab_.z_lo;; ++z) {
          if (sweep2.z() != (z >> s2)) sweep2.advance();
          if (lbp_z != (z >> sl)) {
            lbp_z = z >> sl;
            codes_.top_histograms(x >> sl, y >> sl, lbp_z, rl, row.data() + offl);
          }

          row[0] = center_feature(w_.level(0).clamped(x, y, z), w_.range);
          const auto c1 = sweep1.counts();
          for (int i = 0; i < k1; ++i)
            row[off1 + std::size_t(i)] = double(c1[std::size_t(i)]) / pop1;
          const auto c2 = sweep2.counts();
          for (int i = 0; i < k2; ++i)
            row[off2 + std::size_t(i)] = double(c2[std::size_t(i)]) / pop2;

          fn(Coord{x, y, z}, std::span<const double>(row));
          if (z == slab_.z_hi) break;
          sweep1.advance();
        }
      }
    }
  }

  std::size_t cache_bytes() const {
    return 3 * codes_.codes[0].size() * sizeof(std::uint8_t);
  }

 private:
  const PyramidWindowSet& w_;
  Slab slab_;
  FeatureSpec spec_;
  detail::LbpCodeCache codes_;
};

template <class Fn>
void for_each_slab_feature(const PyramidWindowSet& w, const Slab& slab,
                           const FeatureSpec& spec, Fn&& fn) {
  const SlabFeatureRun run(w, slab, spec);
  run.lines(0, run.dims().ny, std::forward<Fn>(fn));
}

/// Batch form: rows for every owned voxel the mask accepts, with the
/// matching coordinate list (row i describes coords[i]).
struct SlabFeatures {
  FeatureMatrix matrix;
  std::vector<Coord> coords;
};

inline SlabFeatures extract_features_slab(
    const PyramidWindowSet& w, const Slab& slab, const FeatureSpec& spec,
    const std::function<bool(Coord)>& mask = nullptr) {
  SlabFeatures out;
  out.matrix = FeatureMatrix(std::size_t(spec.length()));
  for_each_slab_feature(w, slab, spec, [&](Coord c, std::span<const double> row) {
    if (mask && !mask(c)) return;
    out.matrix.push_row(row);
    out.coords.push_back(c);
  });
  return out;
}

/// Debug dump: one CSV row per feature vector under named columns.
inline void write_features_csv(const FeatureMatrix& m, const std::vector<std::string>& names,
                               std::ostream& os) {
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? "," : "") << names[i];
  os << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ",";
      os << row[i];
    }
    os << "\n";
  }
}

}  // namespace voxseg
