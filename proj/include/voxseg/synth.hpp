#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/error.hpp"
#include "voxseg/rng.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Recipe-driven phantom generator: a background texture plus a list of
// labelled regions painted in order (later regions overwrite earlier ones).
// Every declared label must end up covering at least 1% of the voxels, so
// downstream per-label sampling always has material to draw from.

struct Texture {
  enum class Kind { constant, noise, checker, gradient };

  Kind kind = Kind::constant;
  double value = 0.0;   // constant
  double mean = 0.0;    // noise
  double stddev = 0.0;  // noise
  int period = 4;       // checker
  double low = 0.0;     // checker / gradient
  double high = 0.0;    // checker / gradient
  int axis = 0;         // gradient: 0=x 1=y 2=z

  static std::uint16_t clamp_u16(double v) {
    return std::uint16_t(std::clamp(std::llround(v), 0ll, 65535ll));
  }

  std::uint16_t sample(int x, int y, int z, const Dims& d, Rng& rng) const {
    switch (kind) {
      case Kind::constant: return clamp_u16(value);
      case Kind::noise: return clamp_u16(mean + stddev * rng.next_normal());
      case Kind::checker: {
        const int par = (x / period + y / period + z / period) & 1;
        return clamp_u16(par ? high : low);
      }
      case Kind::gradient: {
        const int c = axis == 0 ? x : axis == 1 ? y : z;
        const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
        const double t = n > 1 ? double(c) / double(n - 1) : 0.0;
        return clamp_u16(low + (high - low) * t);
      }
    }
    throw ContractError("unreachable");
  }
};

inline void to_json(nlohmann::json& j, const Texture& t) {
  switch (t.kind) {
    case Texture::Kind::constant: j = {{"kind", "constant"}, {"value", t.value}}; break;
    case Texture::Kind::noise:
      j = {{"kind", "noise"}, {"mean", t.mean}, {"stddev", t.stddev}};
      break;
    case Texture::Kind::checker:
      j = {{"kind", "checker"}, {"period", t.period}, {"low", t.low}, {"high", t.high}};
      break;
    case Texture::Kind::gradient:
      j = {{"kind", "gradient"}, {"axis", t.axis}, {"low", t.low}, {"high", t.high}};
      break;
  }
}
inline void from_json(const nlohmann::json& j, Texture& t) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") {
    t.kind = Texture::Kind::constant;
    j.at("value").get_to(t.value);
  } else if (kind == "noise") {
    t.kind = Texture::Kind::noise;
    j.at("mean").get_to(t.mean);
    j.at("stddev").get_to(t.stddev);
  } else if (kind == "checker") {
    t.kind = Texture::Kind::checker;
    j.at("period").get_to(t.period);
    j.at("low").get_to(t.low);
    j.at("high").get_to(t.high);
    if (t.period < 1) throw IoError(IoError::Kind::bad_metadata, "checker period must be >= 1");
  } else if (kind == "gradient") {
    t.kind = Texture::Kind::gradient;
    j.at("axis").get_to(t.axis);
    j.at("low").get_to(t.low);
    j.at("high").get_to(t.high);
    if (t.axis < 0 || t.axis > 2) throw IoError(IoError::Kind::bad_metadata, "gradient axis must be 0..2");
  } else {
    throw IoError(IoError::Kind::bad_metadata, "unknown texture kind '" + kind + "'");
  }
}

struct Shape {
  enum class Kind { box, sphere };

  Kind kind = Kind::box;
  Coord lo{}, hi{};  // box: inclusive corners
  Coord center{};    // sphere
  double radius = 0.0;

  bool contains(int x, int y, int z) const {
    if (kind == Kind::box)
      return x >= lo.x && x <= hi.x && y >= lo.y && y <= hi.y && z >= lo.z && z <= hi.z;
    const double dx = x - center.x, dy = y - center.y, dz = z - center.z;
    return dx * dx + dy * dy + dz * dz <= radius * radius;
  }
};

inline void to_json(nlohmann::json& j, const Shape& s) {
  if (s.kind == Shape::Kind::box)
    j = {{"kind", "box"},
         {"min", {s.lo.x, s.lo.y, s.lo.z}},
         {"max", {s.hi.x, s.hi.y, s.hi.z}}};
  else
    j = {{"kind", "sphere"},
         {"center", {s.center.x, s.center.y, s.center.z}},
         {"radius", s.radius}};
}
inline void from_json(const nlohmann::json& j, Shape& s) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "box") {
    s.kind = Shape::Kind::box;
    const auto& lo = j.at("min");
    const auto& hi = j.at("max");
    s.lo = {lo.at(0).get<int>(), lo.at(1).get<int>(), lo.at(2).get<int>()};
    s.hi = {hi.at(0).get<int>(), hi.at(1).get<int>(), hi.at(2).get<int>()};
  } else if (kind == "sphere") {
    s.kind = Shape::Kind::sphere;
    const auto& c = j.at("center");
    s.center = {c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()};
    j.at("radius").get_to(s.radius);
  } else {
    throw IoError(IoError::Kind::bad_metadata, "unknown shape kind '" + kind + "'");
  }
}

struct Region {
  int label = 0;
  Shape shape;
  Texture texture;
};

inline void to_json(nlohmann::json& j, const Region& r) {
  j = {{"label", r.label}, {"shape", r.shape}, {"texture", r.texture}};
}
inline void from_json(const nlohmann::json& j, Region& r) {
  j.at("label").get_to(r.label);
  j.at("shape").get_to(r.shape);
  j.at("texture").get_to(r.texture);
}

struct SyntheticRecipe {
  Dims dims{64, 64, 64};
  std::vector<std::string> label_names{"background", "object"};
  Texture background;  // paints label 0
  std::vector<Region> regions;
};

inline void to_json(nlohmann::json& j, const SyntheticRecipe& r) {
  j = {{"dims", {r.dims.nx, r.dims.ny, r.dims.nz}},
       {"label_names", r.label_names},
       {"background", r.background},
       {"regions", r.regions}};
}
inline void from_json(const nlohmann::json& j, SyntheticRecipe& r) {
  const auto& d = j.at("dims");
  r.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
  j.at("label_names").get_to(r.label_names);
  j.at("background").get_to(r.background);
  j.at("regions").get_to(r.regions);
}

struct SyntheticVolume {
  Volume intensity;
  LabelVolume labels;
};

inline SyntheticVolume generate_synthetic(const SyntheticRecipe& recipe, std::uint64_t seed) {
  if (!recipe.dims.valid()) throw ContractError("synthetic recipe has invalid dims");
  if (recipe.label_names.size() < 2)
    throw ContractError("synthetic recipe needs at least two labels");
  for (const auto& r : recipe.regions)
    if (r.label < 0 || r.label >= int(recipe.label_names.size()))
      throw ContractError("region label outside label_names");

  const Dims d = recipe.dims;
  SyntheticVolume out{Volume(d), LabelVolume{}};
  out.labels.dims = d;
  out.labels.ids.assign(d.voxel_count(), 0);
  out.labels.label_names = recipe.label_names;

  // Background first, then regions in order; each stream gets its own rng
  // so a recipe edit in one region does not reshuffle another's noise.
  {
    Rng rng(child_seed(seed, 0));
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x)
          out.intensity.at(x, y, z) = recipe.background.sample(x, y, z, d, rng);
  }
  for (std::size_t ri = 0; ri < recipe.regions.size(); ++ri) {
    const Region& r = recipe.regions[ri];
    Rng rng(child_seed(seed, ri + 1));
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          if (!r.shape.contains(x, y, z)) continue;
          out.intensity.at(x, y, z) = r.texture.sample(x, y, z, d, rng);
          out.labels.ids[out.intensity.index(x, y, z)] = std::uint8_t(r.label);
        }
  }
  out.intensity.recompute_range();

  // Guarantee one percent coverage per declared label.
  std::vector<std::uint64_t> counts(recipe.label_names.size(), 0);
  for (auto id : out.labels.ids) ++counts[id];
  const double min_count = 0.01 * double(d.voxel_count());
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (double(counts[i]) < min_count)
      throw ContractError("label '" + recipe.label_names[i] +
                          "' covers less than 1% of the synthetic volume");
  return out;
}

}  // namespace voxseg
