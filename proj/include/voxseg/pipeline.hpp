#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "voxseg/features.hpp"
#include "voxseg/metrics.hpp"
#include "voxseg/model.hpp"
#include "voxseg/pyramid.hpp"
#include "voxseg/search.hpp"
#include "voxseg/volume_io.hpp"

#if defined(__unix__) || defined(__APPLE__)
#include <sys/resource.h>
#endif

namespace voxseg {

// Plumbing that ties volumes, features and classifiers into runnable
// commands. The config file carries algorithm parameters; file paths are
// wired on the command line and flags override config values.

struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  int slab_slices = 32;
  int memory_budget_mb = 0;  // 0 disables the working-set check
  int max_scale = 2;

  std::string classifier = "forest";  // "forest" | "network"
  FeatureSpec features;
  ForestParams forest;
  MlpHyperparams network;
  MlpTrainConfig train;
  int train_per_label = 4000;
  int val_per_label = 1000;
  SearchConfig search;

  // Slices carrying ground truth, ascending; empty means every slice.
  std::vector<int> labelled_slices;
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"seed", c.seed},
       {"threads", c.threads},
       {"slab_slices", c.slab_slices},
       {"memory_budget_mb", c.memory_budget_mb},
       {"max_scale", c.max_scale},
       {"classifier", c.classifier},
       {"features", c.features},
       {"forest", c.forest},
       {"network", c.network},
       {"train", c.train},
       {"train_per_label", c.train_per_label},
       {"val_per_label", c.val_per_label},
       {"search", c.search},
       {"labelled_slices", c.labelled_slices}};
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
  if (j.contains("slab_slices")) j.at("slab_slices").get_to(c.slab_slices);
  if (j.contains("memory_budget_mb")) j.at("memory_budget_mb").get_to(c.memory_budget_mb);
  if (j.contains("max_scale")) j.at("max_scale").get_to(c.max_scale);
  if (j.contains("classifier")) j.at("classifier").get_to(c.classifier);
  if (j.contains("features")) j.at("features").get_to(c.features);
  if (j.contains("forest")) j.at("forest").get_to(c.forest);
  if (j.contains("network")) j.at("network").get_to(c.network);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("train_per_label")) j.at("train_per_label").get_to(c.train_per_label);
  if (j.contains("val_per_label")) j.at("val_per_label").get_to(c.val_per_label);
  if (j.contains("search")) j.at("search").get_to(c.search);
  if (j.contains("labelled_slices")) j.at("labelled_slices").get_to(c.labelled_slices);
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoError::Kind::missing_file, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::bad_metadata, path.string() + ": " + e.what());
  }
  return j.get<PipelineConfig>();
}

// ---------------------------------------------------------------------------
// Pyramid access for slab processing: in memory for small volumes, chunked
// from a preprocessed directory for large ones.

class PyramidSource {
 public:
  virtual ~PyramidSource() = default;
  virtual int max_scale() const = 0;
  virtual Dims level_dims(int s) const = 0;
  virtual IntensityRange range() const = 0;  // scale-0 global range

  /// Windows covering the requested level z ranges (clamped to each
  /// level); ranges must list scales 0..k in order.
  virtual PyramidWindowSet windows(const std::vector<LevelZRange>& ranges) = 0;

  Dims dims0() const { return level_dims(0); }

  PyramidWindowSet whole_windows(int up_to_scale) {
    std::vector<LevelZRange> ranges;
    for (int s = 0; s <= up_to_scale; ++s)
      ranges.push_back({s, 0, level_dims(s).nz - 1});
    return windows(ranges);
  }
};

class MemoryPyramidSource : public PyramidSource {
 public:
  explicit MemoryPyramidSource(ScalePyramid pyr)
      : pyr_(std::make_shared<ScalePyramid>(std::move(pyr))) {}

  int max_scale() const override { return pyr_->max_scale(); }
  Dims level_dims(int s) const override { return pyr_->levels[std::size_t(s)].dims(); }
  IntensityRange range() const override { return pyr_->global_range(); }

  PyramidWindowSet windows(const std::vector<LevelZRange>& ranges) override {
    PyramidWindowSet w;
    for (const auto& r : ranges) {
      if (r.scale != int(w.levels.size()))
        throw ContractError("level ranges must list scales 0..k in order");
      if (r.scale > max_scale())
        throw ContractError("requested scale above the pyramid's top level");
      w.levels.push_back(LevelWindow::whole(pyr_->levels[std::size_t(r.scale)]));
    }
    w.range = range();
    w.keepalive.push_back(std::shared_ptr<const Volume>(pyr_, &pyr_->levels[0]));
    return w;
  }

  const ScalePyramid& pyramid() const { return *pyr_; }

 private:
  std::shared_ptr<ScalePyramid> pyr_;
};

/// Reads level chunks on demand from a directory produced by
/// write_pyramid_files: level<k>.json/.raw pairs plus a pyramid.json
/// manifest carrying the global intensity range.
class FilePyramidSource : public PyramidSource {
 public:
  explicit FilePyramidSource(const std::filesystem::path& dir) : dir_(dir) {
    const auto manifest_path = dir / "pyramid.json";
    std::ifstream in(manifest_path);
    if (!in)
      throw IoError(IoError::Kind::missing_file, "cannot open " + manifest_path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError(IoError::Kind::bad_metadata, manifest_path.string() + ": " + e.what());
    }
    try {
      const int levels = j.at("levels").get<int>();
      range_ = {j.at("intensity_range").at(0).get<std::uint16_t>(),
                j.at("intensity_range").at(1).get<std::uint16_t>()};
      for (int s = 0; s < levels; ++s)
        infos_.push_back(
            read_volume_metadata(dir / ("level" + std::to_string(s) + ".json")));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(IoError::Kind::bad_metadata, manifest_path.string() + ": " + e.what());
    }
    if (infos_.empty())
      throw IoError(IoError::Kind::bad_metadata, manifest_path.string() + ": no levels");
  }

  int max_scale() const override { return int(infos_.size()) - 1; }
  Dims level_dims(int s) const override { return infos_[std::size_t(s)].dims; }
  IntensityRange range() const override { return range_; }

  PyramidWindowSet windows(const std::vector<LevelZRange>& ranges) override {
    PyramidWindowSet w;
    for (const auto& r : ranges) {
      if (r.scale != int(w.levels.size()))
        throw ContractError("level ranges must list scales 0..k in order");
      if (r.scale > max_scale())
        throw ContractError("requested scale above the pyramid's top level");
      const auto& info = infos_[std::size_t(r.scale)];
      const int z0 = std::clamp(r.z_lo, 0, info.dims.nz - 1);
      const int z1 = std::clamp(r.z_hi, 0, info.dims.nz - 1);
      auto chunk = std::make_shared<const Volume>(read_volume_slices(info, z0, z1 - z0 + 1));
      w.levels.emplace_back(*chunk, z0, info.dims);
      w.keepalive.push_back(std::move(chunk));
    }
    w.range = range_;
    return w;
  }

 private:
  std::filesystem::path dir_;
  std::vector<VolumeFileInfo> infos_;
  IntensityRange range_;
};

/// Persist a pyramid as one volume pair per level plus a manifest.
inline void write_pyramid_files(const ScalePyramid& pyr, const std::filesystem::path& dir,
                                const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  for (std::size_t s = 0; s < pyr.levels.size(); ++s)
    save_volume(pyr.levels[s], dir / ("level" + std::to_string(s) + ".json"),
                {{"scale", s}});
  nlohmann::json manifest = extra;
  manifest["format_version"] = 1;
  manifest["levels"] = pyr.levels.size();
  manifest["blur_sigmas"] = pyr.blur_sigmas;
  manifest["dims"] = {pyr.levels[0].dims().nx, pyr.levels[0].dims().ny,
                      pyr.levels[0].dims().nz};
  manifest["intensity_range"] = {pyr.global_range().lo, pyr.global_range().hi};
  std::ofstream out(dir / "pyramid.json");
  if (!out)
    throw IoError(IoError::Kind::write_failure, "cannot write " + (dir / "pyramid.json").string());
  out << manifest.dump(2) << "\n";
  if (!out.flush())
    throw IoError(IoError::Kind::write_failure, "write failed: " + (dir / "pyramid.json").string());
}

/// Open either a preprocessed pyramid directory or a plain volume file
/// (which is loaded and decomposed in memory up to need_scale).
inline std::unique_ptr<PyramidSource> open_pyramid_source(const std::filesystem::path& path,
                                                          int need_scale) {
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    auto src = std::make_unique<FilePyramidSource>(path);
    if (src->max_scale() < need_scale)
      throw IoError(IoError::Kind::bad_metadata,
                    path.string() + ": pyramid has max scale " +
                        std::to_string(src->max_scale()) + " but scale " +
                        std::to_string(need_scale) + " is required; re-run preprocess");
    return src;
  }
  return std::make_unique<MemoryPyramidSource>(build_pyramid(load_volume(path), need_scale));
}

// ---------------------------------------------------------------------------
// Training-set assembly: per-label coordinate pools over the labelled
// slices, per-label sampling, and per-coordinate featurization.

struct Dataset {
  FeatureMatrix x;
  std::vector<int> y;
};

inline std::vector<std::vector<Coord>> label_pools(const LabelVolume& labels,
                                                   const std::vector<int>& slices) {
  std::vector<std::vector<Coord>> pools(labels.label_names.size());
  for (int z : slices) {
    if (z < 0 || z >= labels.dims.nz)
      throw ContractError("labelled slice " + std::to_string(z) + " outside the volume");
    for (int y = 0; y < labels.dims.ny; ++y)
      for (int x = 0; x < labels.dims.nx; ++x)
        pools[labels.at(x, y, z)].push_back({x, y, z});
  }
  return pools;
}

/// Up to per_label coordinates from each pool (all of a smaller pool),
/// labels attached. Pools that are empty simply contribute nothing.
inline std::vector<std::pair<Coord, int>> sample_per_label(
    const std::vector<std::vector<Coord>>& pools, int per_label, Rng& rng) {
  std::vector<std::pair<Coord, int>> out;
  for (std::size_t label = 0; label < pools.size(); ++label) {
    const auto& pool = pools[label];
    if (int(pool.size()) <= per_label) {
      for (const auto& c : pool) out.emplace_back(c, int(label));
      continue;
    }
    for (auto i : rng.sample_indices(pool.size(), std::size_t(per_label)))
      out.emplace_back(pool[i], int(label));
  }
  return out;
}

inline Dataset featurize_coords(const PyramidWindowSet& w, const FeatureSpec& spec,
                                const std::vector<std::pair<Coord, int>>& items) {
  Dataset d;
  d.x = FeatureMatrix(std::size_t(spec.length()));
  d.y.reserve(items.size());
  for (const auto& [coord, label] : items) {
    const auto row = assemble_feature_vector(w, coord, spec);
    d.x.push_row(row);
    d.y.push_back(label);
  }
  return d;
}

inline std::vector<int> all_slices(int nz) {
  std::vector<int> v(static_cast<std::size_t>(nz));
  for (int z = 0; z < nz; ++z) v[std::size_t(z)] = z;
  return v;
}

inline SliceSplit config_split(const PipelineConfig& cfg, int nz) {
  return cfg.labelled_slices.empty() ? split_slices(nz)
                                     : split_slice_list(cfg.labelled_slices);
}

// ---------------------------------------------------------------------------
// Drivers.

struct TrainOutcome {
  TrainedModel model;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  int mlp_epochs = 0;
  std::size_t train_rows = 0, val_rows = 0;
};

namespace detail {

inline double dataset_accuracy(const TrainedModel& m, const Dataset& d) {
  if (d.x.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.x.rows(); ++i)
    if (m.predict(d.x.row(i)) == d.y[i]) ++hits;
  return double(hits) / double(d.x.rows());
}

}  // namespace detail

/// Trains one classifier from per-label samples of the labelled slices.
/// `spec`, `forest`/`network` override the corresponding config entries so
/// the optimiser can evaluate candidate variable sets through the same path.
inline TrainOutcome train_classifier(const PyramidWindowSet& w, const LabelVolume& labels,
                                     const PipelineConfig& cfg, const FeatureSpec& spec,
                                     const ForestParams& forest_params,
                                     const MlpHyperparams& network_params,
                                     std::uint64_t seed) {
  if (Dims d0 = w.level(0).full_dims(); d0 != labels.dims)
    throw ContractError("volume and label dimensions differ");

  const SliceSplit split = config_split(cfg, labels.dims.nz);
  Rng sample_rng(child_seed(seed, 0x5a370));
  const auto train_items =
      sample_per_label(label_pools(labels, split.train), cfg.train_per_label, sample_rng);
  const auto val_items =
      sample_per_label(label_pools(labels, split.val), cfg.val_per_label, sample_rng);
  if (train_items.empty()) throw ContractError("no labelled voxels in the training slices");
  if (val_items.empty()) throw ContractError("no labelled voxels in the validation slices");

  const Dataset train_set = featurize_coords(w, spec, train_items);
  const Dataset val_set = featurize_coords(w, spec, val_items);

  TrainOutcome out;
  out.train_rows = train_set.x.rows();
  out.val_rows = val_set.x.rows();
  out.model.features = spec;
  out.model.label_names = labels.label_names;

  const std::uint64_t fit_seed = child_seed(seed, 0xf17);
  if (cfg.classifier == "forest") {
    out.model.classifier = RandomForest::fit(train_set.x, train_set.y, labels.n_labels(),
                                             forest_params, fit_seed);
  } else if (cfg.classifier == "network") {
    auto res = MlpTrainer::train(train_set.x, train_set.y, val_set.x, val_set.y,
                                 labels.n_labels(), network_params, cfg.train, fit_seed);
    out.mlp_epochs = res.epochs_run;
    out.model.classifier = std::move(res.model);
  } else {
    throw ContractError("unknown classifier '" + cfg.classifier + "'");
  }
  out.train_accuracy = detail::dataset_accuracy(out.model, train_set);
  out.val_accuracy = detail::dataset_accuracy(out.model, val_set);
  return out;
}

inline TrainOutcome train_classifier(const PyramidWindowSet& w, const LabelVolume& labels,
                                     const PipelineConfig& cfg) {
  return train_classifier(w, labels, cfg, cfg.features, cfg.forest, cfg.network, cfg.seed);
}

struct OptimiseOutcome {
  SearchSpace space;
  SearchOutcome search;
};

/// Algorithm: sample the per-label training/validation coordinates once,
/// then let the two-stage search propose variable sets; each evaluation
/// featurizes those fixed coordinates under the candidate feature recipe,
/// trains, and scores validation accuracy.
inline OptimiseOutcome optimise_hyperparams(
    const PyramidWindowSet& w, const LabelVolume& labels, const PipelineConfig& cfg,
    const std::function<void(const SearchSpace&, const TraceRecord&)>& trace = nullptr) {
  if (Dims d0 = w.level(0).full_dims(); d0 != labels.dims)
    throw ContractError("volume and label dimensions differ");
  const int top = w.levels.empty() ? -1 : int(w.levels.size()) - 1;

  OptimiseOutcome out;
  out.space =
      cfg.classifier == "network" ? SearchSpace::for_network() : SearchSpace::for_forest();

  const SliceSplit split = config_split(cfg, labels.dims.nz);
  Rng sample_rng(child_seed(cfg.seed, 0x5a370));
  const auto train_items =
      sample_per_label(label_pools(labels, split.train), cfg.search.train_per_label, sample_rng);
  const auto val_items =
      sample_per_label(label_pools(labels, split.val), cfg.search.val_per_label, sample_rng);
  if (train_items.empty() || val_items.empty())
    throw ContractError("no labelled voxels to optimise on");

  int eval_counter = 0;
  auto eval = [&](const VarSet& v) {
    FeatureSpec spec = decode_feature_spec(out.space, v);
    if (spec.max_scale() > top) return 0.0;  // recipe outruns the available pyramid
    const Dataset train_set = featurize_coords(w, spec, train_items);
    const Dataset val_set = featurize_coords(w, spec, val_items);

    TrainedModel model;
    model.features = spec;
    model.label_names = labels.label_names;
    const std::uint64_t fit_seed = child_seed(cfg.seed, 0xe0a1 + std::uint64_t(eval_counter));
    ++eval_counter;
    if (cfg.classifier == "network") {
      auto res = MlpTrainer::train(train_set.x, train_set.y, val_set.x, val_set.y,
                                   labels.n_labels(), decode_network_params(out.space, v),
                                   cfg.train, fit_seed);
      model.classifier = std::move(res.model);
    } else {
      model.classifier = RandomForest::fit(train_set.x, train_set.y, labels.n_labels(),
                                           decode_forest_params(out.space, v), fit_seed);
    }
    return detail::dataset_accuracy(model, val_set);
  };

  Rng search_rng(child_seed(cfg.seed, 0x5ea7c4));
  auto trace_fn = [&](const TraceRecord& r) {
    if (trace) trace(out.space, r);
  };
  out.search = two_stage_search(out.space, cfg.search, search_rng, eval, trace_fn);
  return out;
}

struct SegmentStats {
  int slabs = 0;
  std::size_t voxels = 0;
  std::size_t peak_working_set_bytes = 0;  // windows + code cache + slab output
  double seconds = 0.0;
  long max_rss_kb = 0;
};

namespace detail {

inline std::size_t slab_working_set_bytes(const PyramidSource& src, const FeatureSpec& spec,
                                          const Slab& slab) {
  std::size_t bytes = 0;
  for (const auto& r : level_ranges_for_slab(spec, slab)) {
    const Dims d = src.level_dims(r.scale);
    const int z0 = std::clamp(r.z_lo, 0, d.nz - 1);
    const int z1 = std::clamp(r.z_hi, 0, d.nz - 1);
    bytes += std::size_t(z1 - z0 + 1) * d.nx * d.ny * sizeof(std::uint16_t);
  }
  {  // LBP code cache: three code bytes per cached level voxel
    const Dims d = src.level_dims(spec.lbp.scale);
    const int z0 = std::clamp((slab.z_lo >> spec.lbp.scale) - spec.lbp.radius, 0, d.nz - 1);
    const int z1 = std::clamp((slab.z_hi >> spec.lbp.scale) + spec.lbp.radius, 0, d.nz - 1);
    bytes += 3 * std::size_t(z1 - z0 + 1) * d.nx * d.ny;
  }
  const Dims d0 = src.dims0();
  bytes += std::size_t(slab.owned_slices()) * d0.nx * d0.ny;  // label output buffer
  return bytes;
}

inline long current_max_rss_kb() {
#if defined(__unix__) || defined(__APPLE__)
  rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) == 0) return long(ru.ru_maxrss);
#endif
  return 0;
}

}  // namespace detail

/// Segment a whole volume slab by slab, writing each slab's labels into a
/// pre-sized raw file as soon as it is classified. Peak memory scales with
/// the slab working set, never the full feature matrix. The label output
/// is identical for any slab size.
inline SegmentStats segment_to_file(PyramidSource& src, const TrainedModel& model,
                                    int slab_slices, int threads,
                                    const std::filesystem::path& out_path,
                                    std::size_t memory_budget_bytes = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  const FeatureSpec& spec = model.features;
  spec.validate();
  if (threads < 1) throw ContractError("threads must be >= 1");
  if (src.max_scale() < spec.max_scale())
    throw ContractError("pyramid is missing scale " + std::to_string(spec.max_scale()));

  const Dims dims = src.dims0();
  const int margin = required_margin_scale0(spec);
  const auto slabs = partition_slabs(dims.nz, std::min(slab_slices, dims.nz), margin);

  // Fail before any work if a slab cannot fit the budget.
  SegmentStats stats;
  for (const auto& slab : slabs) {
    const std::size_t need = detail::slab_working_set_bytes(src, spec, slab);
    stats.peak_working_set_bytes = std::max(stats.peak_working_set_bytes, need);
  }
  if (memory_budget_bytes && stats.peak_working_set_bytes > memory_budget_bytes)
    throw Error("slab working set needs " +
                std::to_string(stats.peak_working_set_bytes / (1024 * 1024)) +
                " MiB, over the " + std::to_string(memory_budget_bytes / (1024 * 1024)) +
                " MiB budget; reduce --slab-slices");

  // Metadata now, then a pre-sized raw file written slab by slab.
  std::filesystem::path raw = out_path;
  raw.replace_extension(".raw");
  {
    nlohmann::json j{{"dims", {dims.nx, dims.ny, dims.nz}},
                     {"dtype", "u8"},
                     {"raw", raw.filename().string()},
                     {"label_names", model.label_names}};
    std::ofstream meta(out_path);
    if (!meta)
      throw IoError(IoError::Kind::write_failure, "cannot write " + out_path.string());
    meta << j.dump(2) << "\n";
    if (!meta.flush())
      throw IoError(IoError::Kind::write_failure, "write failed: " + out_path.string());
  }
  {
    std::ofstream create(raw, std::ios::binary | std::ios::trunc);
    if (!create)
      throw IoError(IoError::Kind::write_failure, "cannot write " + raw.string());
  }
  std::filesystem::resize_file(raw, dims.voxel_count());
  std::fstream out(raw, std::ios::binary | std::ios::in | std::ios::out);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot reopen " + raw.string());

  const std::size_t plane = std::size_t(dims.nx) * dims.ny;
  std::vector<std::uint8_t> slab_labels;
  for (const auto& slab : slabs) {
    auto windows = src.windows(level_ranges_for_slab(spec, slab));
    const SlabFeatureRun run(windows, slab, spec);
    slab_labels.assign(std::size_t(slab.owned_slices()) * plane, 0);

    auto work = [&](int y_begin, int y_end) {
      run.lines(y_begin, y_end, [&](Coord c, std::span<const double> row) {
        slab_labels[std::size_t(c.z - slab.z_lo) * plane + std::size_t(c.y) * dims.nx +
                    std::size_t(c.x)] = std::uint8_t(model.predict(row));
      });
    };
    if (threads == 1) {
      work(0, dims.ny);
    } else {
      std::vector<std::thread> pool;
      const int stripes = std::min(threads, dims.ny);
      for (int t = 0; t < stripes; ++t) {
        const int y0 = dims.ny * t / stripes;
        const int y1 = dims.ny * (t + 1) / stripes;
        pool.emplace_back(work, y0, y1);
      }
      for (auto& th : pool) th.join();
    }

    out.seekp(std::streamoff(std::size_t(slab.z_lo) * plane));
    out.write(reinterpret_cast<const char*>(slab_labels.data()),
              std::streamsize(slab_labels.size()));
    if (!out) throw IoError(IoError::Kind::write_failure, "write failed: " + raw.string());
    ++stats.slabs;
    stats.voxels += slab_labels.size();
  }
  out.flush();
  if (!out) throw IoError(IoError::Kind::write_failure, "write failed: " + raw.string());

  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats.max_rss_kb = detail::current_max_rss_kb();
  return stats;
}

/// Confusion over the labelled voxels of the chosen slices.
inline ConfusionMatrix evaluate_labels(const LabelVolume& truth, const LabelVolume& pred,
                                       const std::vector<int>& slices) {
  if (truth.dims != pred.dims) throw ContractError("truth and prediction dims differ");
  if (truth.label_names.size() != pred.label_names.size())
    throw ContractError("truth and prediction label sets differ in size");
  ConfusionMatrix cm(truth.n_labels());
  for (int z : slices) {
    if (z < 0 || z >= truth.dims.nz)
      throw ContractError("slice " + std::to_string(z) + " outside the volume");
    for (int y = 0; y < truth.dims.ny; ++y)
      for (int x = 0; x < truth.dims.nx; ++x) cm.add(truth.at(x, y, z), pred.at(x, y, z));
  }
  return cm;
}

}  // namespace voxseg
