#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxseg/volume.hpp"

namespace voxseg {

/// Scale-0 coordinate of a voxel mapped to pyramid level s: a level-s voxel
/// covers a 2^s cube of level-0 voxels, so the map is floor division.
inline Coord map_coord(Coord c, int scale) {
  assert(c.x >= 0 && c.y >= 0 && c.z >= 0 && scale >= 0);
  return {c.x >> scale, c.y >> scale, c.z >> scale};
}

/// Normalized Gaussian taps for offsets -radius..radius, radius = ceil(3*sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& w : k) w /= sum;
  return k;
}

namespace detail {

// One separable pass along the given axis with replicated edges.
// src/dst are double fields of the same dims.
inline void blur_axis(const std::vector<double>& src, std::vector<double>& dst, Dims d,
                      int axis, const std::vector<double>& kernel) {
  const int radius = int(kernel.size() / 2);
  const int extent[3] = {d.nx, d.ny, d.nz};
  const std::size_t stride[3] = {1, std::size_t(d.nx), std::size_t(d.nx) * d.ny};
  const int n = extent[axis];
  const std::size_t s = stride[axis];

  // iterate over all lines along `axis`
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (int j = 0; j < extent[a2]; ++j) {
    for (int i = 0; i < extent[a1]; ++i) {
      const std::size_t base = stride[a1] * i + stride[a2] * j;
      for (int p = 0; p < n; ++p) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int q = std::clamp(p + t, 0, n - 1);
          acc += kernel[t + radius] * src[base + s * q];
        }
        dst[base + s * p] = acc;
      }
    }
  }
}

}  // namespace detail

/// Separable 3D Gaussian blur with replicate boundary handling; output is
/// rounded to nearest and clamped to the 16-bit range.
inline Volume gaussian_blur(const Volume& v, double sigma) {
  const Dims d = v.dims();
  const auto kernel = gaussian_kernel(sigma);

  std::vector<double> a(v.data().begin(), v.data().end());
  std::vector<double> b(a.size());
  detail::blur_axis(a, b, d, 0, kernel);
  detail::blur_axis(b, a, d, 1, kernel);
  detail::blur_axis(a, b, d, 2, kernel);

  std::vector<std::uint16_t> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double r = std::floor(b[i] + 0.5);
    out[i] = std::uint16_t(std::clamp(r, 0.0, 65535.0));
  }
  return Volume(d, std::move(out));
}

/// Keep voxels at even indices along every axis; dims become ceil(n/2).
inline Volume decimate2(const Volume& v) {
  const Dims d = v.dims();
  const Dims h{(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2};
  std::vector<std::uint16_t> out;
  out.reserve(h.voxel_count());
  for (int z = 0; z < d.nz; z += 2)
    for (int y = 0; y < d.ny; y += 2)
      for (int x = 0; x < d.nx; x += 2) out.push_back(v.at(x, y, z));
  return Volume(h, std::move(out));
}

/// The volume plus its blurred/decimated versions at scales 0..max_scale.
/// levels[0] is the original, bit-identical. blur_sigmas[s] is the sigma of
/// the blur applied to level s-1 before the decimation that produced level s
/// (blur_sigmas[0] = 0): an iterated blur+decimate chain with sigma 2^(s-1)
/// at step s, so dims at scale s are ceil(dims / 2^s) in each axis.
struct ScalePyramid {
  std::vector<Volume> levels;
  std::vector<double> blur_sigmas;

  int max_scale() const { return int(levels.size()) - 1; }
  IntensityRange global_range() const { return levels.at(0).range(); }
};

inline ScalePyramid build_pyramid(const Volume& v, int max_scale) {
  if (max_scale < 0) throw ContractError("max_scale must be >= 0");
  ScalePyramid p;
  p.levels.push_back(v);
  p.blur_sigmas.push_back(0.0);
  for (int s = 1; s <= max_scale; ++s) {
    const double sigma = std::pow(2.0, s - 1);
    p.levels.push_back(decimate2(gaussian_blur(p.levels[s - 1], sigma)));
    p.blur_sigmas.push_back(sigma);
  }
  return p;
}

}  // namespace voxseg
