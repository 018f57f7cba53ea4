#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "voxseg/error.hpp"
#include "voxseg/features.hpp"
#include "voxseg/rng.hpp"

namespace voxseg {

// CART forest: Gini impurity, bootstrap resample per tree, floor(sqrt(F))
// candidate features per node, midpoint thresholds, depth cap 16. Ties in
// split quality resolve to the lowest feature index, then lowest threshold,
// so training is a pure function of (data, params, seed).

struct ForestParams {
  int n_trees = 32;
  int max_depth = 16;
};

inline void to_json(nlohmann::json& j, const ForestParams& p) {
  j = {{"n_trees", p.n_trees}, {"max_depth", p.max_depth}};
}
inline void from_json(const nlohmann::json& j, ForestParams& p) {
  j.at("n_trees").get_to(p.n_trees);
  j.at("max_depth").get_to(p.max_depth);
}

inline double gini_impurity(std::span<const std::uint32_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = double(c) / double(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  std::vector<double> probs;  // class frequencies, leaves only
};

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double decrease = 0.0;
};

namespace detail {

struct ValueLabel {
  double value;
  int label;
};

// Best midpoint split among the given candidate features (evaluated in
// ascending index order; strictly-better comparison keeps the earliest).
inline SplitChoice best_split(const FeatureMatrix& x, const std::vector<int>& labels,
                              const std::vector<std::uint32_t>& rows, int n_classes,
                              std::vector<int> candidates, double parent_impurity) {
  std::sort(candidates.begin(), candidates.end());
  const double n = double(rows.size());
  SplitChoice best;

  std::vector<ValueLabel> scratch(rows.size());
  std::vector<std::uint32_t> left(static_cast<std::size_t>(n_classes)), right(static_cast<std::size_t>(n_classes));
  for (int f : candidates) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      scratch[i] = {x.row(rows[i])[std::size_t(f)], labels[rows[i]]};
    std::sort(scratch.begin(), scratch.end(),
              [](const ValueLabel& a, const ValueLabel& b) { return a.value < b.value; });

    std::fill(left.begin(), left.end(), 0u);
    std::fill(right.begin(), right.end(), 0u);
    for (const auto& vl : scratch) ++right[std::size_t(vl.label)];

    for (std::size_t i = 0; i + 1 < scratch.size(); ++i) {
      ++left[std::size_t(scratch[i].label)];
      --right[std::size_t(scratch[i].label)];
      if (scratch[i].value == scratch[i + 1].value) continue;
      const double nl = double(i + 1), nr = n - nl;
      const double decrease =
          parent_impurity - (nl / n) * gini_impurity(left) - (nr / n) * gini_impurity(right);
      if (decrease > best.decrease) {
        best.found = true;
        best.feature = f;
        best.threshold = (scratch[i].value + scratch[i + 1].value) / 2.0;
        best.decrease = decrease;
      }
    }
  }
  return best;
}

}  // namespace detail

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(int n_classes, std::vector<TreeNode> nodes)
      : n_classes_(n_classes), nodes_(std::move(nodes)) {}

  static DecisionTree fit(const FeatureMatrix& x, const std::vector<int>& labels,
                          int n_classes, const ForestParams& params,
                          const std::vector<std::uint32_t>& rows, Rng& rng) {
    DecisionTree t;
    t.n_classes_ = n_classes;
    const int n_features = int(x.cols);
    const int m = std::max(1, int(std::floor(std::sqrt(double(n_features)))));
    t.grow(x, labels, rows, params, m, 0, rng);
    return t;
  }

  const std::vector<double>& predict_proba(std::span<const double> row) const {
    int i = 0;
    while (nodes_[std::size_t(i)].feature >= 0) {
      const TreeNode& nd = nodes_[std::size_t(i)];
      i = row[std::size_t(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes_[std::size_t(i)].probs;
  }

  int n_classes() const { return n_classes_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const { return depth_from(0); }

 private:
  int grow(const FeatureMatrix& x, const std::vector<int>& labels,
           const std::vector<std::uint32_t>& rows, const ForestParams& params, int m,
           int depth, Rng& rng) {
    std::vector<std::uint32_t> counts(std::size_t(n_classes_), 0);
    for (auto r : rows) ++counts[std::size_t(labels[r])];
    const double impurity = gini_impurity(counts);

    SplitChoice split;
    if (depth < params.max_depth && rows.size() >= 2 && impurity > 0.0) {
      auto cand = rng.sample_indices(std::size_t(x.cols), std::size_t(m));
      std::vector<int> cand_i(cand.begin(), cand.end());
      split = detail::best_split(x, labels, rows, n_classes_, std::move(cand_i), impurity);
    }

    const int self = int(nodes_.size());
    nodes_.emplace_back();
    if (!split.found) {
      auto& leaf = nodes_[std::size_t(self)];
      leaf.probs.resize(std::size_t(n_classes_));
      for (int c = 0; c < n_classes_; ++c)
        leaf.probs[std::size_t(c)] = double(counts[std::size_t(c)]) / double(rows.size());
      return self;
    }

    std::vector<std::uint32_t> lrows, rrows;
    for (auto r : rows)
      (x.row(r)[std::size_t(split.feature)] <= split.threshold ? lrows : rrows).push_back(r);
    if (lrows.empty() || rrows.empty()) {
      // Midpoints of adjacent representable doubles can round onto the
      // upper value and sweep everything to one side.
      auto& leaf = nodes_[std::size_t(self)];
      leaf.probs.resize(std::size_t(n_classes_));
      for (int c = 0; c < n_classes_; ++c)
        leaf.probs[std::size_t(c)] = double(counts[std::size_t(c)]) / double(rows.size());
      return self;
    }
    nodes_[std::size_t(self)].feature = split.feature;
    nodes_[std::size_t(self)].threshold = split.threshold;
    const int l = grow(x, labels, lrows, params, m, depth + 1, rng);
    nodes_[std::size_t(self)].left = l;
    const int r = grow(x, labels, rrows, params, m, depth + 1, rng);
    nodes_[std::size_t(self)].right = r;
    return self;
  }

  int depth_from(int i) const {
    const TreeNode& nd = nodes_[std::size_t(i)];
    if (nd.feature < 0) return 0;
    return 1 + std::max(depth_from(nd.left), depth_from(nd.right));
  }

  int n_classes_ = 0;
  std::vector<TreeNode> nodes_;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(ForestParams params, int n_classes, std::vector<DecisionTree> trees)
      : params_(params), n_classes_(n_classes), trees_(std::move(trees)) {}

  static RandomForest fit(const FeatureMatrix& x, const std::vector<int>& labels,
                          int n_classes, const ForestParams& params, std::uint64_t seed) {
    if (x.rows() == 0) throw ContractError("cannot fit a forest on an empty dataset");
    if (labels.size() != x.rows()) throw ContractError("label count does not match rows");
    RandomForest f;
    f.params_ = params;
    f.n_classes_ = n_classes;
    for (int t = 0; t < params.n_trees; ++t) {
      Rng rng(child_seed(seed, std::uint64_t(t)));
      std::vector<std::uint32_t> rows(x.rows());
      for (auto& r : rows) r = std::uint32_t(rng.next_below(x.rows()));
      f.trees_.push_back(DecisionTree::fit(x, labels, n_classes, params, rows, rng));
    }
    return f;
  }

  std::vector<double> predict_proba(std::span<const double> row) const {
    std::vector<double> acc(std::size_t(n_classes_), 0.0);
    for (const auto& t : trees_) {
      const auto& p = t.predict_proba(row);
      for (int c = 0; c < n_classes_; ++c) acc[std::size_t(c)] += p[std::size_t(c)];
    }
    for (auto& v : acc) v /= double(trees_.size());
    return acc;
  }

  int predict(std::span<const double> row) const {
    const auto p = predict_proba(row);
    return int(std::max_element(p.begin(), p.end()) - p.begin());
  }

  int n_classes() const { return n_classes_; }
  const ForestParams& params() const { return params_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  ForestParams params_;
  int n_classes_ = 0;
  std::vector<DecisionTree> trees_;
};

inline nlohmann::json forest_to_json(const RandomForest& f) {
  nlohmann::json jt = nlohmann::json::array();
  for (const auto& tree : f.trees()) {
    nlohmann::json jn = nlohmann::json::array();
    for (const auto& nd : tree.nodes()) {
      if (nd.feature < 0)
        jn.push_back({{"p", nd.probs}});
      else
        jn.push_back({{"f", nd.feature}, {"t", nd.threshold}, {"l", nd.left}, {"r", nd.right}});
    }
    jt.push_back(std::move(jn));
  }
  return {{"params", f.params()}, {"n_classes", f.n_classes()}, {"trees", std::move(jt)}};
}

inline RandomForest forest_from_json(const nlohmann::json& j) {
  ForestParams params = j.at("params").get<ForestParams>();
  const int n_classes = j.at("n_classes").get<int>();
  std::vector<DecisionTree> trees;
  for (const auto& jn : j.at("trees")) {
    std::vector<TreeNode> nodes;
    for (const auto& n : jn) {
      TreeNode nd;
      if (n.contains("p")) {
        nd.probs = n.at("p").get<std::vector<double>>();
      } else {
        nd.feature = n.at("f").get<int>();
        nd.threshold = n.at("t").get<double>();
        nd.left = n.at("l").get<int>();
        nd.right = n.at("r").get<int>();
      }
      nodes.push_back(std::move(nd));
    }
    trees.emplace_back(n_classes, std::move(nodes));
  }
  return RandomForest(params, n_classes, std::move(trees));
}

}  // namespace voxseg
