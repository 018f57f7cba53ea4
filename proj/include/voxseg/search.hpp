#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/error.hpp"
#include "voxseg/features.hpp"
#include "voxseg/forest.hpp"
#include "voxseg/mlp.hpp"
#include "voxseg/rng.hpp"

namespace voxseg {

// Two-stage random hyperparameter search. A global stage draws whole
// variable sets uniformly; a local stage re-draws one variable at a time
// around the incumbent. Every evaluated set goes into a registry and is
// never evaluated twice; when re-drawing cannot produce a novel set within
// the per-draw timeout, the stage ends early (this is how small discrete
// spaces terminate). Ties keep the earlier incumbent.

using VarSet = std::vector<double>;

struct VariableDomain {
  enum class Kind { int_range, real_range, choice };

  std::string name;
  Kind kind = Kind::int_range;
  double lo = 0.0, hi = 0.0;     // inclusive for int_range, [lo,hi) for real_range
  std::vector<double> choices;

  double sample(Rng& rng) const {
    switch (kind) {
      case Kind::int_range: return double(rng.next_int(int(lo), int(hi)));
      case Kind::real_range: return rng.next_real(lo, hi);
      case Kind::choice: return choices[rng.next_below(choices.size())];
    }
    throw ContractError("unreachable");
  }

  static VariableDomain ints(std::string name, std::int64_t lo, std::int64_t hi) {
    return {std::move(name), Kind::int_range, double(lo), double(hi), {}};
  }
  static VariableDomain reals(std::string name, double lo, double hi) {
    return {std::move(name), Kind::real_range, lo, hi, {}};
  }
  static VariableDomain pick(std::string name, std::vector<double> choices) {
    return {std::move(name), Kind::choice, 0.0, 0.0, std::move(choices)};
  }
};

struct SearchSpace {
  std::vector<VariableDomain> vars;

  VarSet sample(Rng& rng) const {
    VarSet v(vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) v[i] = vars[i].sample(rng);
    return v;
  }

  /// One-variable mutation: pick a variable uniformly and redraw it.
  VarSet mutate(const VarSet& base, Rng& rng) const {
    VarSet v = base;
    const std::size_t i = rng.next_below(vars.size());
    v[i] = vars[i].sample(rng);
    return v;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < vars.size(); ++i)
      if (vars[i].name == name) return int(i);
    throw ContractError("no search variable named '" + name + "'");
  }

  // Shared feature-recipe block; classifier-specific variables follow it.
  static std::vector<VariableDomain> feature_vars() {
    return {VariableDomain::ints("hist1_radius", 1, 8),
            VariableDomain::pick("hist1_bins", {8, 16, 32}),
            VariableDomain::ints("hist2_scale", 0, 2),
            VariableDomain::ints("hist2_radius", 1, 32),
            VariableDomain::pick("hist2_bins", {8, 16, 32}),
            VariableDomain::ints("lbp_scale", 0, 2),
            VariableDomain::ints("lbp_radius", 1, 32)};
  }

  static SearchSpace for_forest() {
    SearchSpace s{feature_vars()};
    s.vars.push_back(VariableDomain::pick("n_trees", {16, 32, 64}));
    return s;
  }

  static SearchSpace for_network() {
    SearchSpace s{feature_vars()};
    s.vars.push_back(VariableDomain::pick("hidden1", {32, 64, 128, 256}));
    s.vars.push_back(VariableDomain::pick("hidden2", {32, 64, 128, 256}));
    s.vars.push_back(VariableDomain::reals("dropout", 0.0, 0.5));
    s.vars.push_back(VariableDomain::reals("init_stddev", 0.0001, 1.0));
    s.vars.push_back(VariableDomain::pick("minibatch", {4, 8, 16, 32, 64}));
    return s;
  }
};

inline FeatureSpec decode_feature_spec(const SearchSpace& space, const VarSet& v) {
  auto at = [&](const char* n) { return v[std::size_t(space.index_of(n))]; };
  FeatureSpec s;
  s.hist1 = {0, int(at("hist1_radius")), int(at("hist1_bins"))};
  s.hist2 = {int(at("hist2_scale")), int(at("hist2_radius")), int(at("hist2_bins"))};
  s.lbp = {int(at("lbp_scale")), int(at("lbp_radius"))};
  return s;
}

inline ForestParams decode_forest_params(const SearchSpace& space, const VarSet& v) {
  ForestParams p;
  p.n_trees = int(v[std::size_t(space.index_of("n_trees"))]);
  return p;
}

inline MlpHyperparams decode_network_params(const SearchSpace& space, const VarSet& v) {
  auto at = [&](const char* n) { return v[std::size_t(space.index_of(n))]; };
  MlpHyperparams h;
  h.hidden1 = int(at("hidden1"));
  h.hidden2 = int(at("hidden2"));
  h.dropout = at("dropout");
  h.init_stddev = at("init_stddev");
  h.minibatch = int(at("minibatch"));
  return h;
}

struct SearchConfig {
  int global_iters = 60;
  int local_iters = 120;
  int train_per_label = 500;
  int val_per_label = 500;
  double draw_timeout_s = 5.0;  // budget for finding a novel set per iteration
};

inline void to_json(nlohmann::json& j, const SearchConfig& c) {
  j = {{"global_iters", c.global_iters},
       {"local_iters", c.local_iters},
       {"train_per_label", c.train_per_label},
       {"val_per_label", c.val_per_label},
       {"draw_timeout_s", c.draw_timeout_s}};
}
inline void from_json(const nlohmann::json& j, SearchConfig& c) {
  if (j.contains("global_iters")) j.at("global_iters").get_to(c.global_iters);
  if (j.contains("local_iters")) j.at("local_iters").get_to(c.local_iters);
  if (j.contains("train_per_label")) j.at("train_per_label").get_to(c.train_per_label);
  if (j.contains("val_per_label")) j.at("val_per_label").get_to(c.val_per_label);
  if (j.contains("draw_timeout_s")) j.at("draw_timeout_s").get_to(c.draw_timeout_s);
}

struct SearchOutcome {
  bool found = false;
  VarSet best;
  double best_score = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool global_timed_out = false;
  bool local_timed_out = false;
};

/// One trace record per evaluation, as a JSON object the caller can write
/// line-delimited.
struct TraceRecord {
  std::string phase;  // "global" | "local"
  int iteration = 0;
  VarSet vars;
  double score = 0.0;
  double best_score = 0.0;
  bool is_best = false;
};

inline nlohmann::json trace_to_json(const SearchSpace& space, const TraceRecord& r) {
  nlohmann::json names = nlohmann::json::object();
  for (std::size_t i = 0; i < space.vars.size(); ++i) names[space.vars[i].name] = r.vars[i];
  return {{"phase", r.phase},      {"iteration", r.iteration},   {"vars", std::move(names)},
          {"score", r.score},      {"best_score", r.best_score}, {"is_best", r.is_best}};
}

/// eval: double(const VarSet&). trace: void(const TraceRecord&), may be a
/// no-op. Deterministic given the rng seed and a deterministic eval.
template <class EvalFn, class TraceFn>
SearchOutcome two_stage_search(const SearchSpace& space, const SearchConfig& cfg, Rng& rng,
                               EvalFn&& eval, TraceFn&& trace) {
  if (space.vars.empty()) throw ContractError("search space has no variables");
  using clock = std::chrono::steady_clock;

  SearchOutcome out;
  std::set<VarSet> known;

  // Returns a novel varset or nullopt when the timeout lapses first.
  auto draw_novel = [&](auto&& gen) -> std::optional<VarSet> {
    const auto deadline =
        clock::now() + std::chrono::duration_cast<clock::duration>(
                           std::chrono::duration<double>(cfg.draw_timeout_s));
    while (true) {
      VarSet v = gen();
      if (known.insert(v).second) return v;
      if (clock::now() >= deadline) return std::nullopt;
    }
  };

  auto run_phase = [&](const char* phase, int iters, auto&& gen, bool& timed_out) {
    for (int i = 0; i < iters; ++i) {
      auto v = draw_novel(gen);
      if (!v) {
        timed_out = true;
        return;
      }
      const double score = eval(*v);
      ++out.evaluations;
      const bool better = !out.found || score > out.best_score;
      if (better) {
        out.found = true;
        out.best = *v;
        out.best_score = score;
      }
      trace(TraceRecord{phase, i, *v, score, out.best_score, better});
    }
  };

  run_phase("global", cfg.global_iters, [&] { return space.sample(rng); },
            out.global_timed_out);
  if (out.found)
    run_phase("local", cfg.local_iters, [&] { return space.mutate(out.best, rng); },
              out.local_timed_out);
  return out;
}

inline nlohmann::json varset_to_json(const SearchSpace& space, const VarSet& v,
                                     double score, const std::string& classifier) {
  nlohmann::json vars = nlohmann::json::object();
  for (std::size_t i = 0; i < space.vars.size(); ++i) vars[space.vars[i].name] = v[i];
  return {{"classifier", classifier}, {"score", score}, {"vars", std::move(vars)}};
}

inline VarSet varset_from_json(const SearchSpace& space, const nlohmann::json& j) {
  const auto& vars = j.at("vars");
  VarSet v(space.vars.size());
  for (std::size_t i = 0; i < space.vars.size(); ++i)
    v[i] = vars.at(space.vars[i].name).get<double>();
  return v;
}

}  // namespace voxseg
