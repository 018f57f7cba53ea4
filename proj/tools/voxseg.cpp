// voxseg: volumetric texture segmentation pipeline.
//
// Subcommands: preprocess, optimise, train, segment, evaluate, bench, synth.
// A JSON config file supplies algorithm parameters; command-line flags
// override config values; file paths are always given on the command line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxseg/bench.hpp"
#include "voxseg/model.hpp"
#include "voxseg/pipeline.hpp"
#include "voxseg/synth.hpp"
#include "voxseg/volume_io.hpp"

namespace {

using namespace voxseg;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> slab_slices;
};

void add_common(CLI::App* sub, CommonFlags& c) {
  sub->add_option("--config", c.config_path, "JSON config file");
  sub->add_option("--seed", c.seed, "RNG seed (overrides config)");
  sub->add_option("--threads", c.threads, "worker threads (overrides config)");
  sub->add_option("--slab-slices", c.slab_slices,
                  "owned slices per out-of-core slab (overrides config)");
}

PipelineConfig resolve_config(const CommonFlags& c) {
  PipelineConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.slab_slices) cfg.slab_slices = *c.slab_slices;
  if (cfg.threads < 1) throw ContractError("--threads must be >= 1");
  if (cfg.slab_slices < 1) throw ContractError("--slab-slices must be >= 1");
  return cfg;
}

SyntheticRecipe default_recipe() {
  SyntheticRecipe r;
  r.dims = {64, 64, 64};
  r.label_names = {"background", "bright", "grain"};
  r.background = Texture{.kind = Texture::Kind::constant, .value = 120};
  Region bright;
  bright.label = 1;
  bright.shape = Shape{.kind = Shape::Kind::box, .lo = {8, 8, 8}, .hi = {55, 55, 55}};
  bright.texture = Texture{.kind = Texture::Kind::constant, .value = 40000};
  Region grain;
  grain.label = 2;
  grain.shape = Shape{.kind = Shape::Kind::box, .lo = {20, 20, 20}, .hi = {43, 43, 43}};
  grain.texture = Texture{.kind = Texture::Kind::noise, .mean = 20000, .stddev = 4000};
  r.regions = {bright, grain};
  return r;
}

// Whole-pyramid windows for training-style commands, from either a plain
// volume file or a preprocessed pyramid directory.
struct LoadedPyramid {
  std::unique_ptr<PyramidSource> source;
  PyramidWindowSet windows;
};

LoadedPyramid load_whole(const std::string& path, int need_scale) {
  LoadedPyramid lp;
  lp.source = open_pyramid_source(path, need_scale);
  lp.windows = lp.source->whole_windows(need_scale);
  return lp;
}

int cmd_synth(const std::string& recipe_path, const std::string& out_vol,
              const std::string& out_labels, const PipelineConfig& cfg) {
  SyntheticRecipe recipe = default_recipe();
  if (!recipe_path.empty()) {
    std::ifstream in(recipe_path);
    if (!in) throw IoError(IoError::Kind::missing_file, "cannot open " + recipe_path);
    nlohmann::json j;
    in >> j;
    recipe = j.get<SyntheticRecipe>();
  }
  const auto made = generate_synthetic(recipe, cfg.seed);
  save_volume(made.intensity, out_vol, {{"seed", cfg.seed}});
  save_labels(made.labels, out_labels, {{"seed", cfg.seed}});
  std::cout << "synth: wrote " << out_vol << " and " << out_labels << " ("
            << made.intensity.dims().nx << "x" << made.intensity.dims().ny << "x"
            << made.intensity.dims().nz << ", " << recipe.label_names.size() << " labels)\n";
  return 0;
}

int cmd_preprocess(const std::string& volume, const std::string& slices,
                   const std::string& out_dir, const PipelineConfig& cfg) {
  Volume v;
  nlohmann::json extra{{"seed", cfg.seed}};
  if (!slices.empty()) {
    v = load_slice_stack(slices);
    extra["source"] = slices;
  } else {
    v = load_volume(volume);
    extra["source"] = volume;
  }
  const ScalePyramid pyr = build_pyramid(v, cfg.max_scale);
  write_pyramid_files(pyr, out_dir, extra);
  std::cout << "preprocess: wrote " << pyr.levels.size() << " levels to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& volume, const std::string& labels_path,
              const std::string& varset_path, const std::string& classifier,
              const std::string& out_model, const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  if (!classifier.empty()) cfg.classifier = classifier;

  FeatureSpec spec = cfg.features;
  ForestParams forest = cfg.forest;
  MlpHyperparams network = cfg.network;
  if (!varset_path.empty()) {
    std::ifstream in(varset_path);
    if (!in) throw IoError(IoError::Kind::missing_file, "cannot open " + varset_path);
    nlohmann::json j;
    in >> j;
    if (j.contains("classifier")) cfg.classifier = j.at("classifier").get<std::string>();
    const SearchSpace space = cfg.classifier == "network" ? SearchSpace::for_network()
                                                          : SearchSpace::for_forest();
    const VarSet v = varset_from_json(space, j);
    spec = decode_feature_spec(space, v);
    if (cfg.classifier == "network")
      network = decode_network_params(space, v);
    else
      forest = decode_forest_params(space, v);
  }

  const LabelVolume labels = load_labels(labels_path);
  const auto lp = load_whole(volume, spec.max_scale());
  const auto outcome = train_classifier(lp.windows, labels, cfg, spec, forest, network, cfg.seed);
  outcome.model.save(out_model);
  std::cout << "train: " << cfg.classifier << " on " << outcome.train_rows
            << " rows, train acc " << outcome.train_accuracy << ", val acc "
            << outcome.val_accuracy;
  if (cfg.classifier == "network") std::cout << ", epochs " << outcome.mlp_epochs;
  std::cout << "; model -> " << out_model << "\n";
  return 0;
}

int cmd_optimise(const std::string& volume, const std::string& labels_path,
                 const std::string& classifier, const std::string& out_varset,
                 const std::string& trace_path, const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  if (!classifier.empty()) cfg.classifier = classifier;

  const LabelVolume labels = load_labels(labels_path);
  const auto lp = load_whole(volume, cfg.max_scale);

  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw IoError(IoError::Kind::write_failure, "cannot write " + trace_path);
  }
  auto trace_fn = [&](const SearchSpace& space, const TraceRecord& r) {
    if (trace.is_open()) trace << trace_to_json(space, r).dump() << "\n";
  };

  const auto result = optimise_hyperparams(lp.windows, labels, cfg, trace_fn);
  if (!result.search.found) throw Error("search evaluated nothing; increase the timeout");

  std::ofstream out(out_varset);
  if (!out) throw IoError(IoError::Kind::write_failure, "cannot write " + out_varset);
  nlohmann::json j = varset_to_json(result.space, result.search.best,
                                    result.search.best_score, cfg.classifier);
  j["seed"] = cfg.seed;
  j["evaluations"] = result.search.evaluations;
  out << j.dump(2) << "\n";

  std::cout << "optimise: best val acc " << result.search.best_score << " after "
            << result.search.evaluations << " evaluations";
  if (result.search.global_timed_out || result.search.local_timed_out)
    std::cout << " (phase exit: space exhausted within the draw timeout)";
  std::cout << "; varset -> " << out_varset << "\n";
  return 0;
}

int cmd_segment(const std::string& volume, const std::string& model_path,
                const std::string& out_labels, int memory_budget_mb,
                const PipelineConfig& cfg) {
  const TrainedModel model = TrainedModel::load(model_path);
  auto source = open_pyramid_source(volume, model.features.max_scale());
  const int budget = memory_budget_mb > 0 ? memory_budget_mb : cfg.memory_budget_mb;
  const auto stats =
      segment_to_file(*source, model, cfg.slab_slices, cfg.threads, out_labels,
                      std::size_t(budget) * 1024 * 1024);
  std::cout << "segment: " << stats.voxels << " voxels in " << stats.slabs << " slabs, "
            << stats.seconds << " s, working set "
            << stats.peak_working_set_bytes / (1024 * 1024) << " MiB, max rss "
            << stats.max_rss_kb / 1024 << " MiB -> " << out_labels << "\n";
  return 0;
}

int cmd_evaluate(const std::string& truth_path, const std::string& pred_path,
                 const std::string& role, const std::string& json_out,
                 const PipelineConfig& cfg) {
  const LabelVolume truth = load_labels(truth_path);
  const LabelVolume pred = load_labels(pred_path);

  std::vector<int> slices;
  if (role == "all") {
    slices = cfg.labelled_slices.empty() ? all_slices(truth.dims.nz) : cfg.labelled_slices;
  } else {
    const SliceSplit split = config_split(cfg, truth.dims.nz);
    if (role == "train")
      slices = split.train;
    else if (role == "val")
      slices = split.val;
    else if (role == "test")
      slices = split.test;
    else
      throw ContractError("--role must be all, train, val or test");
  }

  const ConfusionMatrix cm = evaluate_labels(truth, pred, slices);
  render_report(cm, truth.label_names, std::cout);
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw IoError(IoError::Kind::write_failure, "cannot write " + json_out);
    nlohmann::json j = report_to_json(cm, truth.label_names);
    j["slices"] = slices;
    j["role"] = role;
    out << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_bench(const std::string& mode, int n, std::vector<int> radii, int bins, int lines,
              int reps, const std::string& json_out) {
  if (radii.empty()) radii = mode == "naive" ? std::vector<int>{2, 4, 8}
                                             : std::vector<int>{4, 8, 16, 32};
  const auto run = bench_histogram(mode, {n, n, n}, radii, bins, lines, reps);
  std::cout << "mode " << run.mode << ", volume " << n << "^3, " << run.lines
            << " lines, bins " << run.bins << "\n";
  for (const auto& p : run.points)
    std::cout << "  r=" << p.radius << "  " << p.seconds << " s  (" << p.ns_per_voxel()
              << " ns/voxel)\n";
  std::cout << "log-log exponent: " << run.exponent << "\n";
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw IoError(IoError::Kind::write_failure, "cannot write " + json_out);
    out << bench_to_json(run).dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volumetric texture segmentation pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labelled synthetic volume");
  CommonFlags synth_cf;
  std::string synth_recipe, synth_out, synth_labels;
  synth->add_option("--recipe", synth_recipe, "recipe JSON (omit for a built-in default)");
  synth->add_option("--out", synth_out, "output volume metadata path")->required();
  synth->add_option("--labels", synth_labels, "output labels metadata path")->required();
  add_common(synth, synth_cf);

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "build and store the scale pyramid");
  CommonFlags prep_cf;
  std::string prep_volume, prep_slices, prep_out;
  int prep_max_scale = -1;
  prep->add_option("--volume", prep_volume, "input volume metadata path");
  prep->add_option("--slices", prep_slices, "directory of PGM slices (alternative input)");
  prep->add_option("--out", prep_out, "output pyramid directory")->required();
  prep->add_option("--max-scale", prep_max_scale, "coarsest pyramid scale (default 2)");
  add_common(prep, prep_cf);

  // optimise
  auto* opt = app.add_subcommand("optimise", "two-stage random hyperparameter search");
  CommonFlags opt_cf;
  std::string opt_volume, opt_labels, opt_classifier, opt_out, opt_trace;
  int opt_global = -1, opt_local = -1;
  double opt_timeout = -1;
  opt->add_option("--volume", opt_volume, "volume file or pyramid directory")->required();
  opt->add_option("--labels", opt_labels, "labels metadata path")->required();
  opt->add_option("--classifier", opt_classifier, "forest|network (overrides config)");
  opt->add_option("--out", opt_out, "best variable-set JSON")->required();
  opt->add_option("--trace", opt_trace, "line-delimited JSON trace of every evaluation");
  opt->add_option("--global-iters", opt_global, "global phase iterations");
  opt->add_option("--local-iters", opt_local, "local phase iterations");
  opt->add_option("--timeout", opt_timeout, "per-draw rejection timeout, seconds");
  add_common(opt, opt_cf);

  // train
  auto* train = app.add_subcommand("train", "train a model from labelled slices");
  CommonFlags train_cf;
  std::string train_volume, train_labels, train_varset, train_classifier, train_out;
  train->add_option("--volume", train_volume, "volume file or pyramid directory")->required();
  train->add_option("--labels", train_labels, "labels metadata path")->required();
  train->add_option("--varset", train_varset, "variable set from optimise");
  train->add_option("--classifier", train_classifier, "forest|network (overrides config)");
  train->add_option("--out", train_out, "output model path")->required();
  add_common(train, train_cf);

  // segment
  auto* seg = app.add_subcommand("segment", "label every voxel of a volume");
  CommonFlags seg_cf;
  std::string seg_volume, seg_model, seg_out;
  int seg_budget = 0;
  seg->add_option("--volume", seg_volume, "volume file or pyramid directory")->required();
  seg->add_option("--model", seg_model, "trained model path")->required();
  seg->add_option("--out", seg_out, "output labels metadata path")->required();
  seg->add_option("--memory-budget-mb", seg_budget, "fail if a slab working set exceeds this");
  add_common(seg, seg_cf);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "compare predicted labels against truth");
  CommonFlags eval_cf;
  std::string eval_truth, eval_pred, eval_role = "all", eval_json;
  eval->add_option("--truth", eval_truth, "ground-truth labels path")->required();
  eval->add_option("--pred", eval_pred, "predicted labels path")->required();
  eval->add_option("--role", eval_role, "slice set: all|train|val|test (default all)");
  eval->add_option("--json", eval_json, "also write the report as JSON");
  add_common(eval, eval_cf);

  // bench
  auto* bench = app.add_subcommand("bench", "time the histogram paths");
  CommonFlags bench_cf;
  std::string bench_mode, bench_json;
  std::vector<int> bench_radii;
  int bench_n = 0, bench_bins = 16, bench_lines = 64, bench_reps = 3;
  bench->add_option("--mode", bench_mode, "incremental|naive")->required();
  bench->add_option("--size", bench_n, "cube edge length")->required();
  bench->add_option("--radii", bench_radii, "window radii to time")->delimiter(',');
  bench->add_option("--bins", bench_bins, "histogram bins (default 16)");
  bench->add_option("--lines", bench_lines, "(x,y) lines per measurement (default 64)");
  bench->add_option("--reps", bench_reps, "repetitions, best kept (default 3)");
  bench->add_option("--json", bench_json, "write the timing table as JSON");
  add_common(bench, bench_cf);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth)) return cmd_synth(synth_recipe, synth_out, synth_labels,
                                                    resolve_config(synth_cf));
    if (app.got_subcommand(prep)) {
      PipelineConfig cfg = resolve_config(prep_cf);
      if (prep_max_scale >= 0) cfg.max_scale = prep_max_scale;
      if (prep_volume.empty() == prep_slices.empty())
        throw ContractError("preprocess needs exactly one of --volume or --slices");
      return cmd_preprocess(prep_volume, prep_slices, prep_out, cfg);
    }
    if (app.got_subcommand(opt)) {
      PipelineConfig cfg = resolve_config(opt_cf);
      if (opt_global >= 0) cfg.search.global_iters = opt_global;
      if (opt_local >= 0) cfg.search.local_iters = opt_local;
      if (opt_timeout >= 0) cfg.search.draw_timeout_s = opt_timeout;
      return cmd_optimise(opt_volume, opt_labels, opt_classifier, opt_out, opt_trace, cfg);
    }
    if (app.got_subcommand(train)) return cmd_train(train_volume, train_labels, train_varset,
                                                    train_classifier, train_out,
                                                    resolve_config(train_cf));
    if (app.got_subcommand(seg)) return cmd_segment(seg_volume, seg_model, seg_out,
                                                    seg_budget, resolve_config(seg_cf));
    if (app.got_subcommand(eval)) return cmd_evaluate(eval_truth, eval_pred, eval_role,
                                                      eval_json, resolve_config(eval_cf));
    if (app.got_subcommand(bench))
      return cmd_bench(bench_mode, bench_n, bench_radii, bench_bins, bench_lines,
                       bench_reps, bench_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
