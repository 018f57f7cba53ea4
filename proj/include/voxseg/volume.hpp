#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

#include "voxseg/error.hpp"

namespace voxseg {

struct Dims {
  int nx = 0, ny = 0, nz = 0;

  friend bool operator==(const Dims&, const Dims&) = default;

  std::size_t voxel_count() const {
    return std::size_t(nx) * std::size_t(ny) * std::size_t(nz);
  }
  bool valid() const { return nx > 0 && ny > 0 && nz > 0; }
};

/// Observed intensity range of a volume; lo == hi for constant volumes.
struct IntensityRange {
  std::uint16_t lo = 0, hi = 0;

  friend bool operator==(const IntensityRange&, const IntensityRange&) = default;
};

struct Coord {
  int x = 0, y = 0, z = 0;

  friend bool operator==(const Coord&, const Coord&) = default;
};

/// Dense 16-bit scalar grid, x fastest, then y, then z. z is the slicing
/// axis, so a run of slices is a contiguous range of the data vector.
class Volume {
 public:
  Volume() = default;

  explicit Volume(Dims d, std::uint16_t fill = 0)
      : dims_(checked(d)), data_(d.voxel_count(), fill), min_(fill), max_(fill) {}

  Volume(Dims d, std::vector<std::uint16_t> data)
      : dims_(checked(d)), data_(std::move(data)) {
    if (data_.size() != d.voxel_count())
      throw ContractError("data length does not match dimensions");
    recompute_range();
  }

  Dims dims() const { return dims_; }

  std::size_t index(int x, int y, int z) const {
    assert(x >= 0 && x < dims_.nx && y >= 0 && y < dims_.ny && z >= 0 && z < dims_.nz);
    return (std::size_t(z) * dims_.ny + y) * dims_.nx + x;
  }

  std::uint16_t at(int x, int y, int z) const { return data_[index(x, y, z)]; }
  std::uint16_t& at(int x, int y, int z) { return data_[index(x, y, z)]; }

  /// Clamp-to-edge read: out-of-bounds coordinates map to the nearest voxel.
  std::uint16_t clamped(int x, int y, int z) const {
    x = std::clamp(x, 0, dims_.nx - 1);
    y = std::clamp(y, 0, dims_.ny - 1);
    z = std::clamp(z, 0, dims_.nz - 1);
    return data_[index(x, y, z)];
  }

  const std::vector<std::uint16_t>& data() const { return data_; }
  std::vector<std::uint16_t>& data() { return data_; }

  std::uint16_t min_value() const { return min_; }
  std::uint16_t max_value() const { return max_; }
  IntensityRange range() const { return {min_, max_}; }

  /// Refresh the cached min/max after writing through data()/at().
  void recompute_range() {
    auto [lo, hi] = std::minmax_element(data_.begin(), data_.end());
    min_ = *lo;
    max_ = *hi;
  }

 private:
  static Dims checked(Dims d) {
    if (!d.valid()) throw ContractError("volume dimensions must be positive");
    return d;
  }

  Dims dims_;
  std::vector<std::uint16_t> data_;
  std::uint16_t min_ = 0, max_ = 0;
};

/// One 8-bit label id per voxel; id 0 is the background ("unlabelled") class.
struct LabelVolume {
  Dims dims;
  std::vector<std::uint8_t> ids;
  std::vector<std::string> label_names;  // index = id, [0] = background

  LabelVolume() = default;
  LabelVolume(Dims d, std::vector<std::string> names)
      : dims(d), ids(d.voxel_count(), 0), label_names(std::move(names)) {
    validate_names();
  }
  LabelVolume(Dims d, std::vector<std::uint8_t> data, std::vector<std::string> names)
      : dims(d), ids(std::move(data)), label_names(std::move(names)) {
    validate_names();
    if (ids.size() != d.voxel_count())
      throw ContractError("label data length does not match dimensions");
    for (std::uint8_t id : ids)
      if (id >= label_names.size())
        throw ContractError("label id " + std::to_string(id) + " out of range");
  }

  std::size_t index(int x, int y, int z) const {
    return (std::size_t(z) * dims.ny + y) * dims.nx + x;
  }
  std::uint8_t at(int x, int y, int z) const { return ids[index(x, y, z)]; }
  std::uint8_t& at(int x, int y, int z) { return ids[index(x, y, z)]; }

  int n_labels() const { return int(label_names.size()); }

 private:
  void validate_names() const {
    if (label_names.size() < 2)
      throw ContractError("a label volume needs at least 2 label names");
  }
};

/// A run of z planes of one volume, addressed in the full volume's
/// coordinates. Only planes [z_begin, z_begin + resident) are in memory;
/// reads clamp to the full volume's bounds first and must then land in the
/// resident range. A whole in-memory volume is the special case z_begin = 0.
class LevelWindow {
 public:
  LevelWindow() = default;

  LevelWindow(const Volume& planes, int z_begin, Dims full_dims)
      : data_(planes.data().data()),
        full_(full_dims),
        z_begin_(z_begin),
        z_end_(z_begin + planes.dims().nz) {
    if (planes.dims().nx != full_dims.nx || planes.dims().ny != full_dims.ny)
      throw ContractError("window planes must span the full x/y extent");
    if (z_begin < 0 || z_end_ > full_dims.nz)
      throw ContractError("window planes outside the volume");
  }

  static LevelWindow whole(const Volume& v) { return {v, 0, v.dims()}; }

  std::uint16_t clamped(int x, int y, int z) const {
    x = std::clamp(x, 0, full_.nx - 1);
    y = std::clamp(y, 0, full_.ny - 1);
    z = std::clamp(z, 0, full_.nz - 1);
    assert(z >= z_begin_ && z < z_end_);
    return data_[(std::size_t(z - z_begin_) * full_.ny + y) * full_.nx + x];
  }

  Dims full_dims() const { return full_; }
  int z_begin() const { return z_begin_; }
  int z_end() const { return z_end_; }
  bool covers(int z_lo, int z_hi) const {  // after clamping to the volume
    return std::max(z_lo, 0) >= z_begin_ && std::min(z_hi, full_.nz - 1) < z_end_;
  }

 private:
  const std::uint16_t* data_ = nullptr;
  Dims full_;
  int z_begin_ = 0, z_end_ = 0;
};

/// A contiguous run of slices owned by one unit of out-of-core work, plus
/// the margin slices actually available on each side (clamped at the volume
/// boundary, where clamp-to-edge reads supply the missing context).
struct Slab {
  int z_lo = 0, z_hi = 0;            // owned slice range, inclusive
  int margin_lo = 0, margin_hi = 0;  // extra context below/above

  int owned_slices() const { return z_hi - z_lo + 1; }
  int context_lo() const { return z_lo - margin_lo; }
  int context_hi() const { return z_hi + margin_hi; }
};

/// Split [0, nz) into disjoint slabs of at most target_slices owned slices
/// (the last slab may be shorter). Margins are clamped at the boundary and
/// the clamped values recorded.
inline std::vector<Slab> partition_slabs(int nz, int target_slices, int margin) {
  if (nz <= 0) throw ContractError("nz must be positive");
  if (target_slices < 1) throw ContractError("target_slices must be >= 1");
  if (margin < 0) throw ContractError("margin must be non-negative");
  std::vector<Slab> slabs;
  for (int z0 = 0; z0 < nz; z0 += target_slices) {
    Slab s;
    s.z_lo = z0;
    s.z_hi = std::min(z0 + target_slices, nz) - 1;
    s.margin_lo = std::min(margin, s.z_lo);
    s.margin_hi = std::min(margin, nz - 1 - s.z_hi);
    slabs.push_back(s);
  }
  return slabs;
}

inline std::vector<Slab> partition_slabs(const Volume& v, int target_slices, int margin) {
  return partition_slabs(v.dims().nz, target_slices, margin);
}

}  // namespace voxseg
