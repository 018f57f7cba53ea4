#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/volume.hpp"

namespace voxseg {

// A volume on disk is a <name>.json metadata file next to a raw file:
//   { "dims": [nx, ny, nz], "dtype": "u16le", "raw": "<name>.raw" }
// with optional "label_names", "intensity_range" and bookkeeping fields.
// The raw file holds little-endian 16-bit intensities in x-fastest order
// (or one byte per voxel for dtype "u8" label volumes), so a run of slices
// is a contiguous byte range.

struct VolumeFileInfo {
  Dims dims;
  std::string dtype;  // "u16le" or "u8"
  std::filesystem::path raw_path;
  std::vector<std::string> label_names;
  std::optional<IntensityRange> range;
  std::size_t bytes_per_voxel() const { return dtype == "u8" ? 1 : 2; }
};

inline VolumeFileInfo read_volume_metadata(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec))
    throw IoError(IoError::Kind::missing_file, "no such file: " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "cannot open " + path.string());

  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::bad_metadata,
                  path.string() + ": not valid JSON (" + e.what() + ")");
  }

  VolumeFileInfo info;
  try {
    auto d = j.at("dims");
    if (!d.is_array() || d.size() != 3)
      throw IoError(IoError::Kind::bad_metadata, path.string() + ": dims must be [nx,ny,nz]");
    info.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    info.dtype = j.at("dtype").get<std::string>();
    info.raw_path = path.parent_path() / j.at("raw").get<std::string>();
    if (j.contains("label_names"))
      info.label_names = j["label_names"].get<std::vector<std::string>>();
    if (j.contains("intensity_range")) {
      auto r = j["intensity_range"];
      info.range = IntensityRange{r.at(0).get<std::uint16_t>(), r.at(1).get<std::uint16_t>()};
    }
  } catch (const IoError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::bad_metadata, path.string() + ": " + e.what());
  }
  if (!info.dims.valid())
    throw IoError(IoError::Kind::bad_metadata, path.string() + ": non-positive dims");
  if (info.dtype != "u16le" && info.dtype != "u8")
    throw IoError(IoError::Kind::bad_metadata,
                  path.string() + ": unsupported dtype '" + info.dtype + "'");

  std::error_code ec2;
  const auto size = std::filesystem::file_size(info.raw_path, ec2);
  if (ec2)
    throw IoError(IoError::Kind::missing_file, "no such file: " + info.raw_path.string());
  const std::size_t expect = info.dims.voxel_count() * info.bytes_per_voxel();
  if (size != expect)
    throw IoError(IoError::Kind::size_mismatch,
                  info.raw_path.string() + ": raw file is " + std::to_string(size) +
                      " bytes, expected " + std::to_string(expect));
  return info;
}

namespace detail {

inline std::vector<std::uint8_t> read_raw_bytes(const VolumeFileInfo& info,
                                                std::size_t offset, std::size_t count) {
  std::ifstream in(info.raw_path, std::ios::binary);
  if (!in)
    throw IoError(IoError::Kind::missing_file, "cannot open " + info.raw_path.string());
  in.seekg(std::streamoff(offset));
  std::vector<std::uint8_t> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(count));
  if (std::size_t(in.gcount()) != count)
    throw IoError(IoError::Kind::size_mismatch, "short read from " + info.raw_path.string());
  return bytes;
}

inline std::vector<std::uint16_t> decode_u16le(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::uint16_t> out(bytes.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::uint16_t(bytes[2 * i] | (bytes[2 * i + 1] << 8));
  return out;
}

inline void encode_u16le(const std::vector<std::uint16_t>& values,
                         std::vector<std::uint8_t>& bytes) {
  bytes.resize(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    bytes[2 * i] = std::uint8_t(values[i] & 0xff);
    bytes[2 * i + 1] = std::uint8_t(values[i] >> 8);
  }
}

}  // namespace detail

/// Read a run of slices [z_begin, z_begin + z_count) without touching the
/// rest of the raw file.
inline Volume read_volume_slices(const VolumeFileInfo& info, int z_begin, int z_count) {
  if (info.dtype != "u16le")
    throw IoError(IoError::Kind::bad_metadata,
                  "expected dtype u16le, got '" + info.dtype + "'");
  if (z_begin < 0 || z_count < 1 || z_begin + z_count > info.dims.nz)
    throw ContractError("slice range outside volume");
  const std::size_t plane = std::size_t(info.dims.nx) * info.dims.ny;
  const auto bytes =
      detail::read_raw_bytes(info, std::size_t(z_begin) * plane * 2, std::size_t(z_count) * plane * 2);
  return Volume({info.dims.nx, info.dims.ny, z_count}, detail::decode_u16le(bytes));
}

/// Load a full volume; the intensity range is recomputed from the data.
inline Volume load_volume(const std::filesystem::path& path) {
  const auto info = read_volume_metadata(path);
  return read_volume_slices(info, 0, info.dims.nz);
}

/// Min/max over the raw file in bounded memory (one slice at a time).
inline IntensityRange streamed_range(const VolumeFileInfo& info) {
  if (info.range) return *info.range;
  IntensityRange r{65535, 0};
  const std::size_t plane = std::size_t(info.dims.nx) * info.dims.ny;
  for (int z = 0; z < info.dims.nz; ++z) {
    const auto bytes = detail::read_raw_bytes(info, std::size_t(z) * plane * 2, plane * 2);
    for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) {
      const std::uint16_t v = std::uint16_t(bytes[i] | (bytes[i + 1] << 8));
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  }
  return r;
}

/// Write the metadata + raw pair. `extra` fields are merged into the JSON
/// (seed, recipe name). save_volume and load_volume are inverses.
inline void save_volume(const Volume& v, const std::filesystem::path& path,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::path raw = path;
  raw.replace_extension(".raw");

  nlohmann::json j = extra;
  j["dims"] = {v.dims().nx, v.dims().ny, v.dims().nz};
  j["dtype"] = "u16le";
  j["raw"] = raw.filename().string();
  j["intensity_range"] = {v.min_value(), v.max_value()};

  std::ofstream meta(path);
  if (!meta) throw IoError(IoError::Kind::write_failure, "cannot write " + path.string());
  meta << j.dump(2) << "\n";
  if (!meta.flush())
    throw IoError(IoError::Kind::write_failure, "write failed: " + path.string());

  std::vector<std::uint8_t> bytes;
  detail::encode_u16le(v.data(), bytes);
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out.flush()) throw IoError(IoError::Kind::write_failure, "write failed: " + raw.string());
}

inline LabelVolume load_labels(const std::filesystem::path& path) {
  const auto info = read_volume_metadata(path);
  if (info.dtype != "u8")
    throw IoError(IoError::Kind::bad_metadata,
                  path.string() + ": expected dtype u8 for labels");
  if (info.label_names.size() < 2)
    throw IoError(IoError::Kind::bad_metadata,
                  path.string() + ": labels need at least 2 label_names");
  auto bytes = detail::read_raw_bytes(info, 0, info.dims.voxel_count());
  try {
    return LabelVolume(info.dims, std::move(bytes), info.label_names);
  } catch (const ContractError& e) {
    throw IoError(IoError::Kind::bad_metadata, path.string() + ": " + e.what());
  }
}

inline void save_labels(const LabelVolume& lv, const std::filesystem::path& path,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::path raw = path;
  raw.replace_extension(".raw");

  nlohmann::json j = extra;
  j["dims"] = {lv.dims.nx, lv.dims.ny, lv.dims.nz};
  j["dtype"] = "u8";
  j["raw"] = raw.filename().string();
  j["label_names"] = lv.label_names;

  std::ofstream meta(path);
  if (!meta) throw IoError(IoError::Kind::write_failure, "cannot write " + path.string());
  meta << j.dump(2) << "\n";
  if (!meta.flush())
    throw IoError(IoError::Kind::write_failure, "write failed: " + path.string());

  std::ofstream out(raw, std::ios::binary);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(lv.ids.data()), std::streamsize(lv.ids.size()));
  if (!out.flush()) throw IoError(IoError::Kind::write_failure, "write failed: " + raw.string());
}

namespace detail {

// Binary PGM (P5), 8-bit or 16-bit big-endian samples per the netpbm spec.
// 8-bit samples are widened to 16 bits without rescaling.
inline void read_pgm(const std::filesystem::path& path, int& w, int& h,
                     std::vector<std::uint16_t>& pixels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::missing_file, "cannot open " + path.string());

  auto next_token = [&in, &path]() {
    std::string tok;
    for (;;) {
      int c = in.get();
      if (c == EOF)
        throw IoError(IoError::Kind::bad_metadata, path.string() + ": truncated header");
      if (c == '#') {
        while (c != EOF && c != '\n') c = in.get();
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(char(c));
    }
  };

  if (next_token() != "P5")
    throw IoError(IoError::Kind::bad_metadata, path.string() + ": not a binary PGM (P5)");
  w = std::stoi(next_token());
  h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw IoError(IoError::Kind::bad_metadata, path.string() + ": bad PGM header");

  const std::size_t n = std::size_t(w) * h;
  const int bytes_per = maxval > 255 ? 2 : 1;
  std::vector<std::uint8_t> bytes(n * bytes_per);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (std::size_t(in.gcount()) != bytes.size())
    throw IoError(IoError::Kind::size_mismatch, path.string() + ": truncated PGM data");

  pixels.resize(n);
  if (bytes_per == 1) {
    for (std::size_t i = 0; i < n; ++i) pixels[i] = bytes[i];
  } else {
    for (std::size_t i = 0; i < n; ++i)
      pixels[i] = std::uint16_t((bytes[2 * i] << 8) | bytes[2 * i + 1]);  // MSB first
  }
}

}  // namespace detail

/// Stack a directory of equally sized grayscale PGM slices into a volume;
/// lexicographic filename order is ascending z.
inline Volume load_slice_stack(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw IoError(IoError::Kind::missing_file, "no such directory: " + dir.string());

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  if (files.empty())
    throw IoError(IoError::Kind::bad_metadata, dir.string() + ": no slice files");

  int w = 0, h = 0;
  std::vector<std::uint16_t> all;
  for (std::size_t z = 0; z < files.size(); ++z) {
    int fw = 0, fh = 0;
    std::vector<std::uint16_t> pixels;
    detail::read_pgm(files[z], fw, fh, pixels);
    if (z == 0) {
      w = fw;
      h = fh;
      all.reserve(std::size_t(w) * h * files.size());
    } else if (fw != w || fh != h) {
      throw IoError(IoError::Kind::size_mismatch,
                    files[z].string() + ": slice size differs from the first slice");
    }
    all.insert(all.end(), pixels.begin(), pixels.end());
  }
  return Volume({w, h, int(files.size())}, std::move(all));
}

}  // namespace voxseg
