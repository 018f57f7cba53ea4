#pragma once

#include <array>
#include <cstdint>

#include "voxseg/histogram.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Uniform rotation-invariant local binary patterns on the 8-neighbour ring
// at radius 1. The ring is thresholded against the center (neighbour >=
// center -> 1), giving 8 bits; patterns with at most 2 circular transitions
// collapse to their popcount (codes 0..8) and everything else maps to the
// catch-all code 9. 10 codes total.

inline constexpr int kLbpCodes = 10;

enum class Plane { xy, yz, xz };

/// In-plane ring offsets in fixed circular order, starting at (+1,0) and
/// going counter-clockwise. Offsets are in the plane's own (u,v) axes.
inline constexpr std::array<std::array<int, 2>, 8> kRingOffsets = {{
    {{1, 0}}, {{1, 1}}, {{0, 1}}, {{-1, 1}}, {{-1, 0}}, {{-1, -1}}, {{0, -1}}, {{1, -1}},
}};

/// Code for a ring bit pattern (bit i = ring position i).
inline int lbp_code_of_ring(std::uint8_t bits) {
  int transitions = 0, ones = 0;
  for (int i = 0; i < 8; ++i) {
    const int a = (bits >> i) & 1;
    const int b = (bits >> ((i + 1) & 7)) & 1;
    transitions += a != b;
    ones += a;
  }
  return transitions <= 2 ? ones : 9;
}

/// Code for a 3x3 patch given as {center, ring in kRingOffsets order}.
inline int lbp_code(std::uint16_t center, const std::array<std::uint16_t, 8>& ring) {
  std::uint8_t bits = 0;
  for (int i = 0; i < 8; ++i)
    if (ring[i] >= center) bits |= std::uint8_t(1u << i);
  return lbp_code_of_ring(bits);
}

/// Code at a voxel from its immediate 3x3 in-plane neighbourhood, with
/// edge-clamped reads.
inline int lbp_code_at(const LevelWindow& w, int x, int y, int z, Plane plane) {
  const std::uint16_t center = w.clamped(x, y, z);
  std::uint8_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    const int du = kRingOffsets[i][0], dv = kRingOffsets[i][1];
    std::uint16_t n = 0;
    switch (plane) {
      case Plane::xy: n = w.clamped(x + du, y + dv, z); break;
      case Plane::yz: n = w.clamped(x, y + du, z + dv); break;
      case Plane::xz: n = w.clamped(x + du, y, z + dv); break;
    }
    if (n >= center) bits |= std::uint8_t(1u << i);
  }
  return lbp_code_of_ring(bits);
}

/// Raw code counts over the (2r+1)^2 in-plane window centered on (x,y,z).
/// Window cells outside the volume clamp to the edge voxel first; each
/// voxel has one code, taken from its own 3x3 ring.
inline Histogram lbp_plane_counts(const LevelWindow& w, int x, int y, int z, Plane plane,
                                  int r) {
  const Dims d = w.full_dims();
  Histogram h(kLbpCodes);
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du) {
      int cx = x, cy = y, cz = z;
      switch (plane) {
        case Plane::xy: cx += du; cy += dv; break;
        case Plane::yz: cy += du; cz += dv; break;
        case Plane::xz: cx += du; cz += dv; break;
      }
      cx = std::clamp(cx, 0, d.nx - 1);
      cy = std::clamp(cy, 0, d.ny - 1);
      cz = std::clamp(cz, 0, d.nz - 1);
      ++h.counts[lbp_code_at(w, cx, cy, cz, plane)];
    }
  return h;
}

/// Normalized 10-bin histogram of the codes in the in-plane window.
inline std::vector<double> lbp_plane_histogram(const LevelWindow& w, int x, int y, int z,
                                               Plane plane, int r) {
  return lbp_plane_counts(w, x, y, z, plane, r).normalized();
}

inline std::vector<double> lbp_plane_histogram(const Volume& v, int x, int y, int z,
                                               Plane plane, int r) {
  return lbp_plane_histogram(LevelWindow::whole(v), x, y, z, plane, r);
}

}  // namespace voxseg
