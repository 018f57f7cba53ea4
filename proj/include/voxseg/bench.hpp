#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/histogram.hpp"
#include "voxseg/rng.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Timing harness for the histogram paths. Both modes process the same set
// of (x,y) lines over the full z extent, so a radius only changes the
// per-voxel window work and the fitted log-log slope of per-voxel time vs
// radius reads off the complexity exponent (≈2 incremental, ≈3 naive).

struct BenchPoint {
  int radius = 0;
  std::size_t voxels = 0;
  double seconds = 0.0;  // best of the measured repetitions
  double ns_per_voxel() const { return 1e9 * seconds / double(voxels); }
};

struct BenchRun {
  std::string mode;  // "incremental" | "naive"
  Dims dims;
  int bins = 0;
  int lines = 0;
  std::vector<BenchPoint> points;
  double exponent = 0.0;
};

/// Least-squares slope of log(seconds) against log(radius).
inline double fit_log_log_exponent(const std::vector<BenchPoint>& points) {
  if (points.size() < 2) throw ContractError("exponent fit needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(points.size());
  for (const auto& p : points) {
    const double x = std::log(double(p.radius));
    const double y = std::log(p.seconds / double(p.voxels));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace detail {

inline Volume bench_volume(Dims dims, std::uint64_t seed) {
  Volume v(dims);
  Rng rng(seed);
  for (auto& x : v.data()) x = std::uint16_t(rng.next_below(65536));
  v.recompute_range();
  return v;
}

// The checksum keeps the optimizer from deleting the measured work.
struct LineTimer {
  const Volume& v;
  LevelWindow w;
  IntensityRange range;
  int k;
  std::uint64_t checksum = 0;

  LineTimer(const Volume& vol, int bins)
      : v(vol), w(LevelWindow::whole(vol)), range(vol.range()), k(bins) {}

  double run_incremental(int r, int n_lines) {
    const Dims d = v.dims();
    const auto t0 = std::chrono::steady_clock::now();
    for (int line = 0; line < n_lines; ++line) {
      const int x = line % d.nx, y = line / d.nx;
      HistogramSweep sweep(w, range, x, y, 0, r, k);
      for (int z = 0;; ++z) {
        checksum += sweep.counts()[0];
        if (z == d.nz - 1) break;
        sweep.advance();
      }
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  double run_naive(int r, int n_lines) {
    const Dims d = v.dims();
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(k));
    const auto t0 = std::chrono::steady_clock::now();
    for (int line = 0; line < n_lines; ++line) {
      const int x = line % d.nx, y = line / d.nx;
      for (int z = 0; z < d.nz; ++z) {
        neighbourhood_counts_naive(w, range, x, y, z, r, k, counts);
        checksum += counts[0];
      }
    }
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace detail

/// Time one mode across the given radii. n_lines (x,y) lines are processed
/// per measurement (capped at the plane size); each point keeps the best
/// of `reps` runs to shrug off scheduler noise.
inline BenchRun bench_histogram(const std::string& mode, Dims dims,
                                const std::vector<int>& radii, int bins, int n_lines,
                                int reps = 3, std::uint64_t seed = 99) {
  if (mode != "incremental" && mode != "naive")
    throw ContractError("bench mode must be 'incremental' or 'naive'");
  if (radii.empty()) throw ContractError("bench needs at least one radius");
  if (reps < 1 || n_lines < 1) throw ContractError("reps and lines must be >= 1");

  const Volume v = detail::bench_volume(dims, seed);
  detail::LineTimer timer(v, bins);
  const int lines = std::min(n_lines, dims.nx * dims.ny);

  BenchRun run;
  run.mode = mode;
  run.dims = dims;
  run.bins = bins;
  run.lines = lines;
  for (int r : radii) {
    BenchPoint p;
    p.radius = r;
    p.voxels = std::size_t(lines) * std::size_t(dims.nz);
    p.seconds = 1e300;
    // One untimed pass first: the smallest radii finish in well under a
    // millisecond, where cold caches and branch predictors dominate.
    for (int rep = 0; rep <= reps; ++rep) {
      const double s = mode == "incremental" ? timer.run_incremental(r, lines)
                                             : timer.run_naive(r, lines);
      if (rep > 0) p.seconds = std::min(p.seconds, s);
    }
    run.points.push_back(p);
  }
  run.exponent = run.points.size() >= 2 ? fit_log_log_exponent(run.points) : 0.0;
  return run;
}

inline nlohmann::json bench_to_json(const BenchRun& run) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : run.points)
    pts.push_back({{"radius", p.radius},
                   {"voxels", p.voxels},
                   {"seconds", p.seconds},
                   {"ns_per_voxel", p.ns_per_voxel()}});
  return {{"mode", run.mode},
          {"dims", {run.dims.nx, run.dims.ny, run.dims.nz}},
          {"bins", run.bins},
          {"lines", run.lines},
          {"points", std::move(pts)},
          {"exponent", run.exponent}};
}

}  // namespace voxseg
