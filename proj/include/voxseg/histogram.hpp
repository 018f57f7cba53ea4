#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "voxseg/volume.hpp"

namespace voxseg {

/// Linearly spaced bin of an intensity within [range.lo, range.hi]:
/// floor(k * (v - lo) / (hi - lo + 1)). A constant volume (lo == hi) maps
/// everything to bin 0. Values outside the range are a programming error;
/// volumes are range-checked at load.
inline int bin_of(std::uint16_t value, IntensityRange range, int k) {
  assert(value >= range.lo && value <= range.hi);
  const std::uint32_t span = std::uint32_t(range.hi) - range.lo + 1;
  return int(std::uint32_t(k) * (value - range.lo) / span);
}

/// Frequency vector over k intensity bins (or 10 code bins). Counts stay
/// integral; normalized() divides by the window population.
struct Histogram {
  std::vector<std::uint32_t> counts;

  explicit Histogram(int k = 0) : counts(k, 0) {}

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  std::vector<double> normalized() const {
    const double t = double(total());
    std::vector<double> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = double(counts[i]) / t;
    return out;
  }

  friend bool operator==(const Histogram&, const Histogram&) = default;
};

/// Bin counts of the (2r+1)^3 cube centered on (x,y,z) into a caller
/// buffer of k entries; out-of-bounds voxels are read with edge clamping,
/// so the counts always sum to (2r+1)^3. One voxel costs O(r^3); see
/// HistogramSweep for the incremental path.
inline void neighbourhood_counts_naive(const LevelWindow& w, IntensityRange range, int x,
                                       int y, int z, int r, int k,
                                       std::span<std::uint32_t> counts) {
  assert(int(counts.size()) == k);
  std::fill(counts.begin(), counts.end(), 0u);
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        ++counts[std::size_t(bin_of(w.clamped(x + dx, y + dy, z + dz), range, k))];
}

inline Histogram neighbourhood_histogram_naive(const LevelWindow& w, IntensityRange range,
                                               int x, int y, int z, int r, int k) {
  Histogram h(k);
  neighbourhood_counts_naive(w, range, x, y, z, r, k, h.counts);
  return h;
}

inline Histogram neighbourhood_histogram_naive(const Volume& v, int x, int y, int z, int r,
                                               int k) {
  return neighbourhood_histogram_naive(LevelWindow::whole(v), v.range(), x, y, z, r, k);
}

/// Sweeps the (2r+1)^3 window of a fixed (x,y) line along +z, keeping bin
/// counts current. The first position is filled directly; each advance
/// subtracts the frequencies of the departing plane z-r and adds those of
/// the arriving plane z+r+1, a (2r+1)^2 update instead of a (2r+1)^3 rescan.
/// Counts are bit-identical to the naive computation at every position,
/// including at the volume boundary where planes clamp to the edge.
class HistogramSweep {
 public:
  HistogramSweep(const LevelWindow& w, IntensityRange range, int x, int y, int z_start,
                 int r, int k)
      : w_(w), range_(range), x_(x), y_(y), z_(z_start), r_(r), counts_(k, 0) {
    for (int dz = -r_; dz <= r_; ++dz) add_plane(z_ + dz, +1);
  }

  /// Step the window from z to z+1.
  void advance() {
    add_plane(z_ - r_, -1);
    add_plane(z_ + r_ + 1, +1);
    ++z_;
  }

  int z() const { return z_; }
  std::span<const std::uint32_t> counts() const { return counts_; }

  Histogram histogram() const {
    Histogram h(int(counts_.size()));
    h.counts = counts_;
    return h;
  }

 private:
  void add_plane(int z, int sign) {
    // The plane itself clamps along z; x/y clamping happens per read and is
    // identical for every plane of the line, which is what makes the
    // subtract/add exact.
    const int k = int(counts_.size());
    for (int dy = -r_; dy <= r_; ++dy)
      for (int dx = -r_; dx <= r_; ++dx) {
        const int b = bin_of(w_.clamped(x_ + dx, y_ + dy, z), range_, k);
        counts_[b] = std::uint32_t(int(counts_[b]) + sign);
      }
  }

  const LevelWindow& w_;
  IntensityRange range_;
  int x_, y_, z_, r_;
  std::vector<std::uint32_t> counts_;
};

/// Per-voxel histograms for every owned voxel of a slab, computed with the
/// incremental sweep (z innermost within an x,y raster). fn is called as
/// fn(x, y, z, counts) in raster order; the counts span is only valid for
/// the duration of the call.
template <class Fn>
void slab_histograms_incremental(const LevelWindow& w, IntensityRange range, const Slab& slab,
                                 int r, int k, Fn&& fn) {
  if (slab.margin_lo < std::min(r, slab.z_lo) ||
      slab.margin_hi < std::min(r, w.full_dims().nz - 1 - slab.z_hi))
    throw ContractError("slab margin smaller than the window radius");
  const Dims d = w.full_dims();
  for (int y = 0; y < d.ny; ++y) {
    for (int x = 0; x < d.nx; ++x) {
      HistogramSweep sweep(w, range, x, y, slab.z_lo, r, k);
      for (int z = slab.z_lo;; ++z) {
        fn(x, y, z, sweep.counts());
        if (z == slab.z_hi) break;
        sweep.advance();
      }
    }
  }
}

}  // namespace voxseg
